import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import null_space

from wgsource.bloch import (BlochState, EmitterParams, PulseParams, RabiFitError,
                            TruncatedTrajectoryError, build_generator, emission_probability,
                            evolve_constant, evolve_pulse, fit_rabi, fwhm_to_sigma,
                            pulse_response, rabi_curve, rabi_frequency,
                            steady_state_cw)

GAMMA = 1.0 / 0.64
REFERENCE_EMITTER = EmitterParams(GAMMA, 0.2)
# frozen master-equation value at the reference parameters, confirmed by the
# quantum-jump oracle (1e6 trajectories: 1.00644 +- 0.00011) in test_montecarlo
P_E_PI_REFERENCE = 1.006215


def reference_pulse(theta=math.pi):
    return PulseParams.from_fwhm(theta, 0.026)


def short_pulse(theta, sigma=1e-4):
    return PulseParams(theta=theta, sigma=sigma, t0=6 * sigma)


# ------------------------------------------------------------------ generator

def test_generator_pure_decay_limit():
    m = build_generator(EmitterParams(1.0, 0.0), 0.0, 0.0)
    expected = np.diag([0.0, -0.5, -0.5, -1.0]).astype(complex)
    expected[0, 3] = 1.0
    np.testing.assert_array_equal(m, expected)


@given(gamma=st.floats(1e-3, 50), gamma_d=st.floats(0, 20), omega=st.floats(0, 1e3),
       delta=st.floats(-100, 100))
def test_generator_column_sums_vanish(gamma, gamma_d, omega, delta):
    m = build_generator(EmitterParams(gamma, gamma_d), omega, delta)
    # trace rho_gg + rho_ee is conserved: rows 0 and 3 sum to zero per column
    assert np.max(np.abs(m[0] + m[3])) == 0.0


def test_generator_coherence_decay_entry():
    m = build_generator(REFERENCE_EMITTER, 1.0, 0.0)
    assert m[1, 1] == pytest.approx(-0.98125, abs=1e-15)
    assert m[2, 2] == pytest.approx(-0.98125, abs=1e-15)


# ------------------------------------------------------------------ pulses

def test_fwhm_conversion_of_intensity_profile():
    sigma = fwhm_to_sigma(0.026)
    # intensity exp(-2 t^2 / sigma^2) falls to one half at t = FWHM / 2
    assert math.exp(-2 * (0.013 / sigma) ** 2) == pytest.approx(0.5, rel=1e-12)


def test_pulse_area_integrates_to_theta():
    pulse = reference_pulse(2.3)
    t = np.linspace(*pulse.support, 20001)
    assert np.trapezoid(rabi_frequency(pulse, t), t) == pytest.approx(2.3, rel=1e-10)


def test_invalid_params_rejected():
    with pytest.raises(ValueError):
        EmitterParams(0.0)
    with pytest.raises(ValueError):
        EmitterParams(1.0, -0.1)
    with pytest.raises(ValueError):
        PulseParams(1.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        PulseParams(1.0, 0.01, 0.0, shape="lorentzian")


# ------------------------------------------------------------------ evolution

def test_zero_area_pulse_leaves_ground_state():
    traj = evolve_pulse(REFERENCE_EMITTER, reference_pulse(0.0))
    assert np.all(traj.rho_ee == 0.0)
    assert emission_probability(traj, REFERENCE_EMITTER) == 0.0


@pytest.mark.parametrize("theta", [math.pi / 2, math.pi, 2 * math.pi, 3.7])
def test_area_theorem_without_decay(theta):
    em = EmitterParams(1e-9, 0.0)
    pulse = short_pulse(theta, sigma=1e-3)
    traj = evolve_pulse(em, pulse, t_end=0.02, tolerance=1e-11)
    assert traj.rho_ee[-1] == pytest.approx(math.sin(theta / 2) ** 2, abs=1e-6)


def test_short_pi_pulse_emits_one_photon():
    em = EmitterParams(GAMMA, 0.0)
    p_e = emission_probability(evolve_pulse(em, short_pulse(math.pi)), em)
    assert abs(p_e - 1.0) < 1e-3


def test_reference_pi_pulse_emission_probability():
    traj = evolve_pulse(REFERENCE_EMITTER, reference_pulse())
    p_e = emission_probability(traj, REFERENCE_EMITTER)
    assert 0.9 < p_e < 1.05
    assert p_e == pytest.approx(P_E_PI_REFERENCE, abs=2e-6)


def test_tolerance_halving_converges():
    a = emission_probability(evolve_pulse(REFERENCE_EMITTER, reference_pulse(), tolerance=1e-9), REFERENCE_EMITTER)
    b = emission_probability(evolve_pulse(REFERENCE_EMITTER, reference_pulse(), tolerance=5e-10), REFERENCE_EMITTER)
    assert abs(a - b) < 1e-9


def test_quadrature_and_trapezoid_agree_roughly():
    traj = evolve_pulse(REFERENCE_EMITTER, reference_pulse())
    q = emission_probability(traj, REFERENCE_EMITTER)
    t = emission_probability(traj, REFERENCE_EMITTER, method="trapezoid")
    assert abs(q - t) < 0.02


def test_truncated_trajectory_rejected():
    pulse = reference_pulse()
    traj = evolve_pulse(REFERENCE_EMITTER, pulse, t_end=pulse.t0 + 1.0)
    with pytest.raises(TruncatedTrajectoryError):
        emission_probability(traj, REFERENCE_EMITTER)


def test_trajectory_csv(tmp_path):
    traj = evolve_pulse(REFERENCE_EMITTER, reference_pulse())
    path = tmp_path / "traj.csv"
    traj.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t_ns,rho_gg,re_rho_ge,im_rho_ge,rho_ee"
    assert len(lines) == len(traj) + 1
    row = [float(v) for v in lines[-1].split(",")]
    assert row[0] == traj.times[-1] and row[4] == traj.rho_ee[-1]


@settings(max_examples=25, deadline=None)
@given(theta=st.floats(0, 4 * math.pi), gamma=st.floats(0.2, 5), gamma_d=st.floats(0, 2),
       fwhm=st.floats(0.005, 0.2), delta=st.floats(-20, 20))
def test_density_matrix_invariants(theta, gamma, gamma_d, fwhm, delta):
    tol = 1e-9
    em = EmitterParams(gamma, gamma_d)
    pulse = PulseParams.from_fwhm(theta, fwhm, delta=delta)
    traj = evolve_pulse(em, pulse, tolerance=tol)
    r = traj.rho
    assert np.max(np.abs(r[:, 0] + r[:, 3] - 1.0)) < 10 * tol
    assert np.max(np.abs(r[:, 2] - np.conj(r[:, 1]))) < 1e-12
    assert np.all(np.abs(r[:, 1]) ** 2 <= (r[:, 0] * r[:, 3]).real + 10 * tol)


@settings(max_examples=20, deadline=None)
@given(theta=st.floats(0, 4 * math.pi))
def test_area_theorem_property(theta):
    em = EmitterParams(1e-9, 0.0)
    traj = evolve_pulse(em, short_pulse(theta, sigma=1e-3), t_end=0.02, tolerance=1e-11)
    assert abs(traj.rho_ee[-1] - math.sin(theta / 2) ** 2) < 1e-4


# ------------------------------------------------------------------ steady state

def test_steady_state_limits():
    em = EmitterParams(GAMMA, 0.3)
    assert steady_state_cw(em, 0.0).rho_ee == 0.0
    assert steady_state_cw(em, 1e5).rho_ee == pytest.approx(0.5, abs=1e-6)


@given(omega=st.floats(1e-3, 100), gamma=st.floats(0.1, 10))
def test_steady_state_saturation_formula(omega, gamma):
    em = EmitterParams(gamma, 0.0)
    ss = steady_state_cw(em, omega)
    expected = (omega ** 2 / 4) / (omega ** 2 / 2 + gamma ** 2 / 4)
    assert ss.rho_ee == pytest.approx(expected, abs=1e-10)
    # independent oracle: dense null space of M, normalised to unit trace
    v = null_space(build_generator(em, omega))[:, 0]
    v = v / (v[0] + v[3])
    assert abs(ss.rho_ee - v[3].real) < 1e-8
    assert abs(ss.rho_ge - v[1]) < 1e-8


@pytest.mark.parametrize("omega,delta,gamma_d", [(1.0, 0.0, 0.2), (5.0, 2.0, 0.0), (0.3, -1.0, 1.0)])
def test_steady_state_matches_long_time_evolution(omega, delta, gamma_d):
    em = EmitterParams(GAMMA, gamma_d)
    traj = evolve_constant(em, omega, delta, t_end=40.0)
    ss = steady_state_cw(em, omega, delta)
    assert np.max(np.abs(traj.rho[-1] - ss.as_vector())) < 1e-6


def test_bloch_state_roundtrip():
    s = BlochState(0.7, 0.3, 0.1 - 0.2j)
    assert s.rho_eg == 0.1 + 0.2j
    assert BlochState.from_vector(s.as_vector()) == s
    assert s.trace == 1.0


# ------------------------------------------------------------------ Rabi curves

def test_rabi_curve_undamped_short_pulse():
    em = EmitterParams(1e-9, 0.0)
    # with negligible decay only the population left at t_end counts
    for theta in (math.pi / 2, math.pi, 2 * math.pi):
        traj = evolve_pulse(em, short_pulse(theta, 1e-3), t_end=0.02, tolerance=1e-11)
        assert abs(traj.rho_ee[-1] - math.sin(theta / 2) ** 2) < 1e-4


def test_rabi_curve_dephasing_damps_3pi():
    # p_e counts re-excitation photons, so compare the oscillation contrast
    # between 2 pi and 3 pi with and without pure dephasing at the same pulse
    pulse = reference_pulse()
    thetas = [2 * math.pi, 3 * math.pi]
    (_, d2), (_, d3) = rabi_curve(REFERENCE_EMITTER, pulse, thetas)
    (_, c2), (_, c3) = rabi_curve(EmitterParams(GAMMA, 0.0), pulse, thetas)
    assert 0 < (d3 - d2) / (c3 - c2) < 1


def test_rabi_curve_first_peak_near_pi():
    thetas = np.linspace(0.8 * math.pi, 1.2 * math.pi, 41)
    curve = rabi_curve(REFERENCE_EMITTER, reference_pulse(), thetas)
    arg = thetas[int(np.argmax([p for _, p in curve]))]
    assert abs(arg / math.pi - 1.0) < 0.05


def test_rabi_curve_requires_sorted_input():
    with pytest.raises(ValueError):
        rabi_curve(REFERENCE_EMITTER, reference_pulse(), [2.0, 1.0])


def test_pulse_response_matches_adaptive():
    thetas = np.array([0.3, math.pi, 2.5 * math.pi])
    fast = pulse_response(REFERENCE_EMITTER, reference_pulse(), thetas)
    slow = [p for _, p in rabi_curve(REFERENCE_EMITTER, reference_pulse(), thetas)]
    np.testing.assert_allclose(fast, slow, atol=1e-6)


# ------------------------------------------------------------------ fitting

POWERS = np.linspace(0.02, 4.0, 40)


@pytest.fixture(scope="module")
def clean_rabi_data():
    pulse = reference_pulse()
    thetas = math.pi * np.sqrt(POWERS / 1.3)
    return 2.5 * np.array([p for _, p in rabi_curve(REFERENCE_EMITTER, pulse, thetas)])


def test_fit_rabi_noise_free_round_trip(clean_rabi_data):
    fit = fit_rabi(POWERS, clean_rabi_data, GAMMA, reference_pulse().sigma)
    assert fit.valid
    assert fit.P_pi == pytest.approx(1.3, rel=1e-2)
    assert fit.gamma_d == pytest.approx(0.2, rel=1e-2)
    assert fit.scale == pytest.approx(2.5, rel=1e-2)


@pytest.mark.slow
def test_fit_rabi_noisy_ensemble(clean_rabi_data):
    sigma = reference_pulse().sigma
    for seed in range(100):
        rng = np.random.default_rng(seed)
        y = clean_rabi_data * (1 + 0.02 * rng.standard_normal(POWERS.size))
        fit = fit_rabi(POWERS, y, GAMMA, sigma)
        assert abs(fit.P_pi / 1.3 - 1) < 0.05, seed


def test_fit_rabi_rejects_degenerate_data():
    with pytest.raises(RabiFitError):
        fit_rabi(POWERS, np.zeros_like(POWERS), GAMMA, 0.022)
    with pytest.raises(ValueError):
        fit_rabi(POWERS[:5], np.ones(5), GAMMA, 0.022)
