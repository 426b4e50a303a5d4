"""Acceptance criteria, each at its stated tolerance.

Every test records one ``PASS``/``FAIL`` line in ``RESULTS``; the lines are
printed in the pytest terminal summary (and by ``python3 tests/test_acceptance.py``).
A failing criterion is reported as such, never skipped or loosened.
"""
import json
import math
import os
import time

import numpy as np
import pytest

from wgsource.bloch import (EmitterParams, PulseParams, build_generator, emission_probability,
                            evolve_constant, evolve_pulse, rabi_curve, steady_state_cw)
from wgsource.budget import expected_rate, reference_budget, total_efficiency
from wgsource.cli import main
from wgsource.device import (default_device, default_profiles, extract_beta_c, impurity_map,
                             impurity_vs_power)
from wgsource.montecarlo import (SourceModel, correlate, extract_g2, extract_vraw,
                                 fit_bunching_envelope, synth_hbt, synth_hom)
from wgsource.montecarlo.jumps import p2_probability
from wgsource.photonstats import (HomSetup, PeakAreas, blinking_fraction, g2_from_xi,
                                  hom_expected_area, hom_intrinsic, v_intercept_fit,
                                  vraw_from_areas)

RESULTS = {}

GAMMA = 1.0 / 0.64
REFERENCE_EMITTER = EmitterParams(GAMMA, 0.2)
REFERENCE_PULSE = PulseParams.from_fwhm(math.pi, 0.026)
T_P = 2e-5


class Criterion:
    """Context manager recording one PASS/FAIL line for a criterion."""

    def __init__(self, key, title):
        self.key, self.title = key, title
        self.details = []
        self.ok = True

    def check(self, ok, detail):
        self.details.append(("" if ok else "!! ") + detail)
        self.ok &= bool(ok)

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        dt = time.perf_counter() - self.t0
        if exc_type is not None and exc_type is not AssertionError:
            self.ok = False
            self.details.append(f"!! raised {exc_type.__name__}: {exc}")
        status = "PASS" if self.ok else "FAIL"
        RESULTS[self.key] = (f"[{status}] criterion {self.key:>2}: {self.title} "
                             f"({dt:.1f} s) -- " + "; ".join(self.details))
        if exc_type is None:
            assert self.ok, RESULTS[self.key]
        return False


# ------------------------------------------------------------------ 1

def test_criterion_01_g2_algebra():
    with Criterion("1", "g2 algebra") as c:
        g = g2_from_xi(0.004)
        c.check(round(g, 3) == 0.008, f"g2_from_xi(0.004) = {g:.6f}")
        g = g2_from_xi(5e-4)
        c.check(9.9e-4 <= g <= 1.01e-3, f"g2_from_xi(5e-4) = {g:.4e} in [9.9e-4, 1.01e-3]")


# ------------------------------------------------------------------ 2

def test_criterion_02_impurity_anchors():
    with Criterion("2", "impurity anchors") as c:
        params = default_device()
        prof_E, prof_C = default_profiles()
        b_c, x = extract_beta_c(1.7e-3, T_P, prof_E, prof_C, params)
        c.check(abs(b_c - 0.80) <= 0.02 and abs(x - 20.0) <= 3.0,
                f"extract_beta_c(1.7e-3) -> beta_C = {b_c:.4f} at {x:.2f} nm")
        offsets = np.linspace(-224.9, 224.9, 44981)
        rows = impurity_map(params, prof_E, prof_C, offsets, T_p=T_P)
        good = [r for r in rows if r[2] >= 0.9]
        best = min(good, key=lambda r: r[3])
        hit = any(r[3] <= 5.5e-4 for r in good)
        c.check(hit, f"map point with beta_C >= 0.9 and xi <= 5.5e-4: {'found' if hit else 'none'}"
                     f" (smallest xi with beta_C >= 0.9 is {best[3]:.3e} at {best[0]:.1f} nm)")


# ------------------------------------------------------------------ 3

def test_criterion_03_rabi_model():
    with Criterion("3", "Rabi model") as c:
        t0 = time.perf_counter()
        thetas = np.linspace(0.5 * math.pi, 1.5 * math.pi, 201)
        curve = rabi_curve(REFERENCE_EMITTER, REFERENCE_PULSE, thetas)
        arg = thetas[int(np.argmax([p for _, p in curve]))] / math.pi
        c.check(abs(arg - 1.0) <= 0.05, f"p_e(theta) peaks at {arg:.3f} pi")
        rows = impurity_vs_power(T_P, 2 * T_P / (1.7e-3 * 0.8), 0.8, REFERENCE_EMITTER, REFERENCE_PULSE,
                                 [1e-8, 1.0])
        ratio = rows[1][3] / rows[0][3]
        c.check(2.0 <= ratio <= 2.8, f"xi(P_pi)/xi(P->0) = {ratio:.3f} in [2.0, 2.8]")
        dt = time.perf_counter() - t0
        c.check(dt < 10, f"runtime {dt:.1f} s < 10 s")


# ------------------------------------------------------------------ 4

def test_criterion_04_bloch_invariants():
    with Criterion("4", "Bloch invariants") as c:
        rng = np.random.default_rng(4)
        tol = 1e-9
        worst = dict(trace=0.0, herm=0.0, pos=-np.inf)
        for _ in range(100):
            em = EmitterParams(rng.uniform(0.2, 5.0), rng.uniform(0.0, 2.0))
            pulse = PulseParams.from_fwhm(rng.uniform(0, 4 * math.pi), rng.uniform(0.005, 0.2),
                                          delta=rng.uniform(-20, 20))
            r = evolve_pulse(em, pulse, tolerance=tol).rho
            worst["trace"] = max(worst["trace"], np.max(np.abs(r[:, 0] + r[:, 3] - 1)))
            worst["herm"] = max(worst["herm"], np.max(np.abs(r[:, 2] - np.conj(r[:, 1]))))
            worst["pos"] = max(worst["pos"], np.max(np.abs(r[:, 1]) ** 2 - (r[:, 0] * r[:, 3]).real))
        c.check(worst["trace"] < 1e-8, f"max trace error {worst['trace']:.1e}")
        c.check(worst["herm"] < 1e-8, f"max hermiticity error {worst['herm']:.1e}")
        c.check(worst["pos"] < 1e-8, f"max positivity violation {worst['pos']:.1e}")
        em0 = EmitterParams(1e-9, 0.0)
        err = 0.0
        for theta in np.linspace(0, 4 * math.pi, 17):
            pulse = PulseParams(theta, 1e-3, 6e-3)
            ree = evolve_pulse(em0, pulse, t_end=0.02, tolerance=1e-11).rho_ee[-1]
            err = max(err, abs(ree - math.sin(theta / 2) ** 2))
        c.check(err < 1e-4, f"area theorem max error {err:.1e}")


# ------------------------------------------------------------------ 5

def test_criterion_05_steady_state():
    with Criterion("5", "steady state") as c:
        worst_evo = worst_formula = 0.0
        for omega, delta, gd in [(0.5, 0.0, 0.2), (2.0, 1.0, 0.5), (8.0, -3.0, 0.0), (1.0, 0.3, 1.5)]:
            em = EmitterParams(GAMMA, gd)
            ss = steady_state_cw(em, omega, delta)
            traj = evolve_constant(em, omega, delta, t_end=60.0, tolerance=1e-11)
            worst_evo = max(worst_evo, np.max(np.abs(traj.rho[-1] - ss.as_vector())))
        for omega in (0.1, 1.0, 3.0, 30.0):
            em = EmitterParams(GAMMA, 0.0)
            formula = (omega ** 2 / 4) / (omega ** 2 / 2 + GAMMA ** 2 / 4)
            worst_formula = max(worst_formula, abs(steady_state_cw(em, omega).rho_ee - formula))
        c.check(worst_evo < 1e-6, f"null space vs long-time evolution {worst_evo:.1e}")
        c.check(worst_formula < 1e-8, f"gamma_d = 0 saturation formula {worst_formula:.1e}")


# ------------------------------------------------------------------ 6

def test_criterion_06_monte_carlo_oracle():
    with Criterion("6", "Monte Carlo oracle") as c:
        t0 = time.perf_counter()
        rng = np.random.default_rng(6)
        zs = []
        for _ in range(10):
            em = EmitterParams(rng.uniform(0.5, 5.0), rng.uniform(0.0, 2.0))
            pulse = PulseParams.from_fwhm(rng.uniform(0.2, 4 * math.pi), rng.uniform(0.003, 0.15),
                                          delta=rng.uniform(-10, 10))
            p_e = emission_probability(evolve_pulse(em, pulse), em)
            est = p2_probability(em, pulse, 100_000, rng)
            zs.append((est.mean - p_e) / est.se_mean)
        worst = max(abs(z) for z in zs)
        c.check(worst < 3, f"max |z| = {worst:.2f} over 10 sets (z = {', '.join(f'{z:+.2f}' for z in zs)})")
        dt = time.perf_counter() - t0
        c.check(dt < 120, f"runtime {dt:.1f} s < 120 s")


# ------------------------------------------------------------------ 7

def test_criterion_07_hbt_round_trip():
    with Criterion("7", "HBT round trip") as c:
        t0 = time.perf_counter()
        fast = SourceModel(p_click=0.1, xi=0.004)
        g = extract_g2(correlate(*synth_hbt(fast, 10_000_000, 71), 50, 50.3e6))
        target = g2_from_xi(0.004)
        c.check(abs(g.g2 - target) < 3 * g.uncertainty,
                f"xi = 0.004: g2 = {g.g2:.5f} +- {g.uncertainty:.5f} vs {target:.5f}")
        jumps = SourceModel(p_click=0.1, xi=0.004, pulse=REFERENCE_PULSE, gamma_d=0.2)
        g = extract_g2(correlate(*synth_hbt(jumps, 10_000_000, 72), 50, 50.3e6))
        c.check(0.008 <= g.g2 <= 0.03,
                f"with 26 ps re-excitation: g2 = {g.g2:.5f} +- {g.uncertainty:.5f} in [0.008, 0.03]")
        dt = time.perf_counter() - t0
        c.check(dt < 300, f"runtime {dt:.1f} s < 300 s")


# ------------------------------------------------------------------ 8

def test_criterion_08_blinking():
    with Criterion("8", "blinking") as c:
        m = SourceModel(p_click=0.1, blink_fraction=0.03, blink_rate=0.25)
        h = correlate(*synth_hbt(m, 10_000_000, 81), 500, 40e6)
        fit = fit_bunching_envelope(h, min_delay=300_000)
        c.check(abs(fit.amplitude - 1.03) <= 0.01,
                f"amplitude {fit.amplitude:.4f} +- {fit.amplitude_err:.4f} (1.03 +- 0.01)")
        c.check(abs(fit.rate_per_us - 0.25) <= 0.05,
                f"rate {fit.rate_per_us:.3f} +- {fit.rate_err:.3f} /us (0.25 +- 0.05)")
        f = blinking_fraction(0.03)
        c.check(0.028 <= f <= 0.030, f"blinking_fraction(0.03) = {f:.5f}")


# ------------------------------------------------------------------ 9

def test_criterion_09_hom():
    with Criterion("9", "HOM") as c:
        t0 = time.perf_counter()
        setup = HomSetup.reference()
        points = []
        first = None
        for i, xi in enumerate([0.004, 0.01, 0.02, 0.035, 0.05]):
            m = SourceModel(p_click=0.05, xi=xi, V=0.96, pulse=REFERENCE_PULSE, gamma_d=0.2)
            window = 21 * m.rep_period_ps
            co = correlate(*synth_hom(m, setup, "co", 10_000_000, 10 * i + 1), 50, window)
            cr = correlate(*synth_hom(m, setup, "cross", 10_000_000, 10 * i + 2), 50, window)
            v = extract_vraw(co, cr)
            g = extract_g2(correlate(*synth_hbt(m, 10_000_000, 10 * i + 3), 50, 50.3e6))
            points.append((g.g2, 1 - v.V_raw))
            first = first or v
        c.check(abs(first.V_raw - 0.91) <= 0.02,
                f"V_raw = {first.V_raw:.4f} +- {first.uncertainty:.4f} (0.91 +- 0.02)")
        fit = v_intercept_fit(points)
        c.check(abs(fit.V - 0.96) <= 0.02,
                f"background-sweep intercept V = {fit.V:.4f} +- {fit.uncertainty:.4f} (0.96 +- 0.02)")
        dt = time.perf_counter() - t0
        c.check(dt < 300, f"runtime {dt:.1f} s < 300 s")


# ------------------------------------------------------------------ 10

def test_criterion_10_hom_algebra():
    with Criterion("10", "HOM algebra self-consistency") as c:
        rng = np.random.default_rng(10)
        worst = 0.0
        for _ in range(1000):
            R = rng.uniform(0.3, 0.7)
            setup = HomSetup(R, 1 - R, rng.uniform(0, 0.1), rng.uniform(0, 0.2))
            V, g2 = rng.uniform(0, 1), rng.uniform(0, 0.2)
            v_raw = vraw_from_areas(PeakAreas(hom_expected_area(V, setup, g2),
                                              hom_expected_area(0.0, setup, g2)))
            worst = max(worst, abs(hom_intrinsic(v_raw, setup, g2).V - V))
        c.check(worst < 1e-10, f"max inversion error {worst:.1e} over 1000 setups")
        exact = all(hom_intrinsic(v, HomSetup.ideal(), 0.0).V == v for v in rng.uniform(0, 1, 100))
        c.check(exact, "ideal setup V == V_raw exactly")


# ------------------------------------------------------------------ 11

def test_criterion_11_budget():
    with Criterion("11", "budget") as c:
        eta, d_eta = total_efficiency(reference_budget())
        c.check(abs(eta - 0.053) <= 0.007, f"total {100 * eta:.2f} +- {100 * d_eta:.2f} % (5.3 +- 0.7 %)")
        r = expected_rate(reference_budget())
        c.check(abs(r.raw_MHz - 2.5) <= 0.4,
                f"raw rate {r.raw_MHz:.3f} +- {r.raw_uncertainty_MHz:.3f} MHz (2.5 +- 0.4)")


# ------------------------------------------------------------------ 12

def test_criterion_12_determinism(tmp_path):
    with Criterion("12", "determinism") as c:
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "seed": 12,
            "source": {"p_click": 0.1, "xi": 0.01, "blink_fraction": 0.03, "quantum_jumps": True},
            "emitter": {"lifetime_ns": 0.64, "gamma_d_per_ns": 0.2},
            "synth": {"n_pulses": 1_100_000, "norm_delay_ps": 1_000_000, "window_ps": 1_200_000},
        }))
        max_workers = max(os.cpu_count() or 1, 8)
        for exp in ("hbt", "hom-co", "hom-cross"):
            for fmt in ("binary", "csv"):
                runs = []
                for i, workers in enumerate((1, 1, max_workers)):
                    out = tmp_path / f"{exp}-{fmt}-{i}"
                    rc = main(["synth", exp, "--config", str(cfg), "--out", str(out),
                               "--format", fmt, "--workers", str(workers)])
                    assert rc == 0
                    runs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
                same = runs[0] == runs[1] == runs[2]
                c.check(same, f"{exp}/{fmt}: {len(runs[0])} files identical (workers 1, 1, {max_workers})")


if __name__ == "__main__":
    import sys
    rc = pytest.main([__file__, "-q", "-p", "no:cacheprovider"])
    sys.exit(rc)
