"""Command-line front end: ``wgsource <command> [options]``.

Exit codes: 0 success, 2 configuration/usage error, 3 numerical failure.
All outputs are plain CSV/JSON with fixed column order and ``repr`` floats,
so identical inputs give byte-identical files.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np
from scipy.optimize import minimize_scalar

from . import bloch, budget, device, photonstats
from .config import ConfigError, load_config
from .montecarlo import central_ratio, correlate, extract_g2, extract_vraw, write_histogram_csv
from .montecarlo.streams import write_stream
from .montecarlo.synth import substream, synth_hbt, synth_hom

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

_NUMERIC_ERRORS = (bloch.IntegrationError, bloch.TruncatedTrajectoryError, bloch.RabiFitError,
                   device.NoRootError, np.linalg.LinAlgError, FloatingPointError, RuntimeError)

EXPERIMENTS = ("hbt", "hom-co", "hom-cross", "hom")


class UsageError(ValueError):
    pass


def _dump_json(obj, path=None):
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def _out_dir(args, cfg):
    out = Path(args.out or cfg.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _seed(args, cfg):
    seed = args.seed if args.seed is not None else cfg.seed
    if seed is None:
        raise UsageError("a seed is required: pass --seed N or set \"seed\" in the config")
    if not 0 <= seed < 2 ** 64:
        raise UsageError("seed must lie in [0, 2^64)")
    return seed


def _fmt(v):
    v = float(v)
    return "inf" if math.isinf(v) else repr(v)


# ---------------------------------------------------------------- rabi

def cmd_rabi(args, cfg):
    r = cfg.rabi
    P_pi = float(r.get("P_pi", 1.0))
    powers = r.get("powers")
    if powers is None:
        powers = (P_pi * np.linspace(0.05, 4.0, 80)).tolist()
    T_p = float(r.get("T_p", device.pump_suppression(cfg.device)))
    if "beta_E" in r or "beta_C" in r:
        b_e, b_c = float(r["beta_E"]), float(r["beta_C"])
    else:
        b_e, b_c = device.beta_at(cfg.profile_E, cfg.profile_C, cfg.device, device.REFERENCE_OFFSET_NM)
    rows = device.impurity_vs_power(T_p, b_e, b_c, cfg.emitter, cfg.pulse, powers, P_pi=P_pi)

    out = _out_dir(args, cfg)
    with open(out / "rabi.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["P", "theta_rad", "p_e", "xi"])
        for row in rows:
            w.writerow([_fmt(v) for v in row])

    def neg_pe(theta):
        traj = bloch.evolve_pulse(cfg.emitter, cfg.pulse.with_theta(theta))
        return -bloch.emission_probability(traj, cfg.emitter)

    best = minimize_scalar(neg_pe, bounds=(0.5 * math.pi, 1.6 * math.pi), method="bounded",
                           options={"xatol": 1e-6})
    xi_pi = device.impurity_vs_power(T_p, b_e, b_c, cfg.emitter, cfg.pulse, [P_pi], P_pi=P_pi)[0][3]
    summary = {
        "theta_argmax_rad": float(best.x),
        "theta_argmax_over_pi": float(best.x / math.pi),
        "p_e_max": float(-best.fun),
        "xi_low_power": device.impurity_simplified(T_p, b_e, b_c),
        "xi_at_P_pi": float(xi_pi),
        "T_p": T_p,
        "beta_E": b_e,
        "beta_C": b_c,
    }
    sys.stdout.write(_dump_json(summary, out / "rabi_summary.json"))
    return EXIT_OK


# ---------------------------------------------------------------- impurity map

def cmd_impurity_map(args, cfg):
    m = cfg.impurity_map
    half = cfg.device.width / 2
    lo = args.offset_min if args.offset_min is not None else float(m.get("offset_min_nm", -(half - 1)))
    hi = args.offset_max if args.offset_max is not None else float(m.get("offset_max_nm", half - 1))
    n = args.n_offsets if args.n_offsets is not None else int(m.get("n_offsets", 449))
    if n < 1 or hi < lo:
        raise UsageError("need n_offsets >= 1 and offset_max >= offset_min")
    if max(abs(lo), abs(hi)) >= half:
        raise UsageError(f"offsets must lie strictly inside +-{half} nm")
    T_p = float(m.get("T_p", device.pump_suppression(cfg.device)))
    rows = device.impurity_map(cfg.device, cfg.profile_E, cfg.profile_C, np.linspace(lo, hi, n), T_p=T_p)
    out = _out_dir(args, cfg)
    device.write_impurity_map_csv(rows, out / "impurity_map.csv")
    finite = [r for r in rows if math.isfinite(r[3])]
    best = min(finite, key=lambda r: r[3]) if finite else None
    summary = {"n_offsets": n, "T_p": T_p,
               "min_xi": None if best is None else {"offset_nm": best[0], "beta_E": best[1],
                                                    "beta_C": best[2], "xi": best[3]}}
    sys.stdout.write(_dump_json(summary))
    return EXIT_OK


# ---------------------------------------------------------------- synth

def _hist_params(cfg, T_ps):
    s = cfg.synth
    bin_w = int(s.get("bin_width_ps", 50))
    norm_delay = float(s.get("norm_delay_ps", 50_000_000))
    window = float(s.get("window_ps", norm_delay + 12 * T_ps))
    return bin_w, norm_delay, window


def _sub_seed(seed, tag):
    # independent acquisitions per experiment under one global seed
    return int(substream(seed, 7, tag).integers(0, 2 ** 63))


def _synth_one(kind, cfg, seed, n, workers):
    if kind == "hbt":
        return synth_hbt(cfg.source, n, _sub_seed(seed, 0), workers=workers)
    pol = kind.split("-")[1]
    return synth_hom(cfg.source, cfg.hom, pol, n, _sub_seed(seed, 1 if pol == "co" else 2),
                     workers=workers)


def _write_streams(streams, out, prefix, fmt):
    ext = "bin" if fmt == "binary" else "csv"
    names = []
    for c, st in enumerate(streams):
        name = f"{prefix}_ch{c}.{ext}"
        write_stream(st, out / name, fmt=fmt, n_channels=2)
        names.append(name)
    return names


def cmd_synth(args, cfg):
    seed = _seed(args, cfg)
    n = args.pulses if args.pulses is not None else int(cfg.synth.get("n_pulses", 1_000_000))
    if n < 1:
        raise UsageError("--pulses must be >= 1")
    workers = args.workers if args.workers is not None else cfg.workers
    T_ps = cfg.source.rep_period_ps
    bin_w, norm_delay, window = _hist_params(cfg, T_ps)
    out = _out_dir(args, cfg)
    result = {"experiment": args.experiment, "seed": seed, "n_pulses": n,
              "rep_period_ps": T_ps, "bin_width_ps": bin_w, "window_ps": window}

    kinds = ("hom-co", "hom-cross") if args.experiment == "hom" else (args.experiment,)
    hists = {}
    for kind in kinds:
        a, b = _synth_one(kind, cfg, seed, n, workers)
        files = _write_streams((a, b), out, kind, args.format)
        h = correlate(a, b, bin_w, window)
        write_histogram_csv(h, out / f"{kind}_histogram.csv")
        hists[kind] = h
        result[kind] = {"clicks": [len(a), len(b)], "streams": files,
                        "histogram": f"{kind}_histogram.csv"}

    if "hbt" in hists:
        g = extract_g2(hists["hbt"], T_ps, norm_delay=norm_delay)
        result["g2"] = g.g2
        result["g2_uncertainty"] = g.uncertainty
        result["xi_from_g2"] = photonstats.xi_from_g2(min(max(g.g2, 0.0), 1.0))
    for kind in ("hom-co", "hom-cross"):
        if kind in hists:
            ratio, c0, a_inf, _ = central_ratio(hists[kind], T_ps, None, 2)
            result[kind]["central_over_long_delay"] = ratio
            result[kind]["central_area"] = c0
    if args.experiment == "hom":
        v = extract_vraw(hists["hom-co"], hists["hom-cross"], T_ps)
        result["V_raw"] = v.V_raw
        result["V_raw_uncertainty"] = v.uncertainty
    sys.stdout.write(_dump_json(result, out / f"{args.experiment}_result.json"))
    return EXIT_OK


# ---------------------------------------------------------------- budget

def cmd_budget(args, cfg):
    b = cfg.budget
    report = budget.budget_report(b)
    print(report)
    if args.out or cfg.out_dir:
        out = _out_dir(args, cfg)
        (out / "budget.csv").write_text(budget.budget_csv(b))
        (out / "budget.txt").write_text(report + "\n")
    return EXIT_OK


# ---------------------------------------------------------------- hom-correct

def _read_points(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or not {"g2", "V_raw"} <= set(rows[0]):
        raise UsageError(f"{path}: expected columns g2,V_raw")
    return [(float(r["g2"]), 1.0 - float(r["V_raw"])) for r in rows]


def cmd_hom_correct(args, cfg):
    base = cfg.hom
    setup = photonstats.HomSetup(
        R=args.R if args.R is not None else base.R, T=args.T if args.T is not None else base.T,
        epsilon=args.epsilon if args.epsilon is not None else base.epsilon,
        eta_opt=args.eta_opt if args.eta_opt is not None else base.eta_opt)
    if args.points:
        fit = photonstats.v_intercept_fit(_read_points(args.points))
        res = {"method": "intercept", "V": fit.V, "uncertainty": fit.uncertainty,
               "intercept": fit.intercept, "slope": fit.slope,
               "out_of_range": not 0.0 <= fit.V <= 1.0}
    else:
        if args.v_raw is None or args.g2 is None:
            raise UsageError("hom-correct needs --v-raw and --g2, or --points CSV")
        if not 0.0 <= args.v_raw <= 1.0 or args.g2 < 0:
            raise UsageError("need 0 <= V_raw <= 1 and g2 >= 0")
        c = photonstats.hom_intrinsic(args.v_raw, setup, args.g2)
        res = {"method": "closed-form", "V": c.V, "out_of_range": c.out_of_range,
               "R": setup.R, "T": setup.T, "epsilon": setup.epsilon, "eta_opt": setup.eta_opt}
    flag = "  [OUT OF RANGE]" if res["out_of_range"] else ""
    print(f"V = {res['V']:.6f}{flag}")
    if args.out or cfg.out_dir:
        _dump_json(res, _out_dir(args, cfg) / "hom_correct.json")
    return EXIT_OK


# ---------------------------------------------------------------- fit-rabi

def cmd_fit_rabi(args, cfg):
    with open(args.data, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or not {"power", "intensity"} <= set(rows[0]):
        raise UsageError(f"{args.data}: expected columns power,intensity")
    p = [float(r["power"]) for r in rows]
    y = [float(r["intensity"]) for r in rows]
    fit = bloch.fit_rabi(p, y, cfg.emitter.gamma, cfg.pulse.sigma)
    res = {"P_pi": fit.P_pi, "gamma_d_per_ns": fit.gamma_d, "scale": fit.scale,
           "residual_norm": fit.residual_norm, "valid": fit.valid}
    sys.stdout.write(_dump_json(res))
    if args.out or cfg.out_dir:
        _dump_json(res, _out_dir(args, cfg) / "fit_rabi.json")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration")
    common.add_argument("--seed", type=int, metavar="N", help="global seed (overrides config)")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides config)")

    ap = argparse.ArgumentParser(prog="wgsource", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rabi", parents=[common], help="p_e and impurity versus pump power")
    p.set_defaults(func=cmd_rabi)

    p = sub.add_parser("impurity-map", parents=[common], help="beta factors and impurity vs offset")
    p.add_argument("--offset-min", type=float, metavar="NM")
    p.add_argument("--offset-max", type=float, metavar="NM")
    p.add_argument("--n-offsets", type=int, metavar="N")
    p.set_defaults(func=cmd_impurity_map)

    p = sub.add_parser("synth", parents=[common], help="synthesize and analyse click streams")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--pulses", type=int, metavar="N")
    p.add_argument("--format", choices=("csv", "binary"), default="binary")
    p.add_argument("--workers", type=int, metavar="N", help="threads (output does not depend on it)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("budget", parents=[common], help="efficiency ledger and expected rate")
    p.set_defaults(func=cmd_budget)

    p = sub.add_parser("hom-correct", parents=[common], help="intrinsic HOM visibility")
    p.add_argument("--v-raw", type=float)
    p.add_argument("--g2", type=float)
    p.add_argument("--R", type=float)
    p.add_argument("--T", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--eta-opt", type=float)
    p.add_argument("--points", metavar="CSV", help="g2,V_raw table for the intercept fit")
    p.set_defaults(func=cmd_hom_correct)

    p = sub.add_parser("fit-rabi", parents=[common], help="fit P_pi and gamma_d to power data")
    p.add_argument("data", metavar="CSV", help="power,intensity table")
    p.set_defaults(func=cmd_fit_rabi)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except (ConfigError, UsageError) as exc:
        print(f"wgsource: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"wgsource: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _NUMERIC_ERRORS as exc:
        print(f"wgsource: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"wgsource: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
