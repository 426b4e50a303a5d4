"""HOM visibility versus background: V_raw for several impurities and the intercept fit.

For each impurity the co- and cross-polarised interferometer runs give V_raw,
an HBT run gives g2, and a straight line through (g2, 1 - V_raw) is
extrapolated to g2 = 0. Also prints the per-point setup-corrected visibility.

Usage: python scripts/hom_background_sweep.py [--pulses 1e7] [--V 0.96] [--out sweep.csv]
"""
import argparse
import math

from wgsource.bloch import PulseParams
from wgsource.montecarlo import SourceModel, correlate, extract_g2, extract_vraw, synth_hbt, synth_hom
from wgsource.photonstats import HomSetup, hom_intrinsic, v_intercept_fit


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--pulses", type=float, default=1e7)
    ap.add_argument("--p-click", type=float, default=0.05)
    ap.add_argument("--V", type=float, default=0.96)
    ap.add_argument("--xi", type=float, nargs="+", default=[0.004, 0.01, 0.02, 0.035, 0.05])
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="hom_sweep.csv")
    args = ap.parse_args()

    setup = HomSetup.reference()
    pulse = PulseParams.from_fwhm(math.pi, 0.026)
    n = int(args.pulses)
    points, rows = [], []
    for i, xi in enumerate(args.xi):
        m = SourceModel(p_click=args.p_click, xi=xi, V=args.V, pulse=pulse, gamma_d=0.2)
        window = 21 * m.rep_period_ps
        seed = args.seed + 10 * i
        co = correlate(*synth_hom(m, setup, "co", n, seed, args.workers), 50, window)
        cr = correlate(*synth_hom(m, setup, "cross", n, seed + 1, args.workers), 50, window)
        v = extract_vraw(co, cr)
        g = extract_g2(correlate(*synth_hbt(m, n, seed + 2, args.workers), 50, 50.3e6))
        corr = hom_intrinsic(v.V_raw, setup, g.g2)
        points.append((g.g2, 1 - v.V_raw))
        rows.append((xi, g.g2, g.uncertainty, v.V_raw, v.uncertainty, corr.V))
        print(f"xi={xi:.4f}  g2={g.g2:.4f}+-{g.uncertainty:.4f}  V_raw={v.V_raw:.4f}+-{v.uncertainty:.4f}"
              f"  corrected V={corr.V:.4f}")
    fit = v_intercept_fit(points)
    print(f"intercept fit: V = {fit.V:.4f} +- {fit.uncertainty:.4f} (slope {fit.slope:.3f})")
    with open(args.out, "w") as f:
        f.write("xi,g2,g2_err,V_raw,V_raw_err,V_corrected\n")
        for r in rows:
            f.write(",".join(repr(float(x)) for x in r) + "\n")


if __name__ == "__main__":
    main()
