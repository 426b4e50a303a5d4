"""Driven, damped two-level system in the rotating frame of the laser.

The density matrix is carried as the vector ``(rho_gg, rho_ge, rho_eg, rho_ee)``
and propagated with ``d rho / dt = M(t) rho``. Times are in ns, rates in ns^-1
and angular frequencies in rad/ns.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from scipy.integrate import simpson, solve_ivp
from scipy.interpolate import RectBivariateSpline
from scipy.optimize import minimize

__all__ = [
    "EmitterParams",
    "PulseParams",
    "BlochState",
    "Trajectory",
    "IntegrationError",
    "TruncatedTrajectoryError",
    "RabiFitError",
    "RabiFit",
    "build_generator",
    "rabi_frequency",
    "default_t_end",
    "evolve_pulse",
    "evolve_constant",
    "emission_probability",
    "steady_state_cw",
    "rabi_curve",
    "pulse_response",
    "fit_rabi",
    "fwhm_to_sigma",
]

SQRT_PI = math.sqrt(math.pi)


class IntegrationError(RuntimeError):
    """The adaptive integrator could not reach the requested end time."""

    def __init__(self, message, t_fail):
        super().__init__(f"{message} (at t = {t_fail:.6g} ns)")
        self.t_fail = t_fail


class TruncatedTrajectoryError(ValueError):
    pass


class RabiFitError(RuntimeError):
    """Raised when the Rabi fit is degenerate or does not converge.

    ``best`` holds the best-so-far estimate (with ``valid=False``) when one exists.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class EmitterParams:
    gamma: float
    gamma_d: float = 0.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if not self.gamma_d >= 0:
            raise ValueError(f"gamma_d must be >= 0, got {self.gamma_d}")

    @classmethod
    def from_lifetime(cls, lifetime_ns, gamma_d=0.0):
        return cls(gamma=1.0 / lifetime_ns, gamma_d=gamma_d)


def fwhm_to_sigma(intensity_fwhm):
    """Half-width ``sigma`` of the field envelope exp(-t^2/sigma^2) whose
    intensity profile exp(-2 t^2/sigma^2) has the given FWHM."""
    return intensity_fwhm / math.sqrt(2.0 * math.log(2.0))


@dataclass(frozen=True)
class PulseParams:
    theta: float
    sigma: float
    t0: float
    delta: float = 0.0
    shape: str = "gaussian"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if not self.theta >= 0:
            raise ValueError(f"theta must be >= 0, got {self.theta}")
        if self.shape not in ("gaussian", "square"):
            raise ValueError(f"unknown pulse shape {self.shape!r}")

    @classmethod
    def from_fwhm(cls, theta, fwhm, t0=None, delta=0.0):
        """Gaussian pulse from its intensity FWHM (ns); centred at 6 sigma by default."""
        sigma = fwhm_to_sigma(fwhm)
        if t0 is None:
            t0 = 6.0 * sigma
        return cls(theta=theta, sigma=sigma, t0=t0, delta=delta)

    def with_theta(self, theta):
        return PulseParams(theta, self.sigma, self.t0, self.delta, self.shape)

    @property
    def support(self):
        """Interval outside which the drive is negligible (< 1e-15 of peak)."""
        if self.shape == "square":
            return self.t0 - self.sigma, self.t0 + self.sigma
        return self.t0 - 6.0 * self.sigma, self.t0 + 6.0 * self.sigma


def rabi_frequency(pulse, t):
    """Omega(t) in rad/ns; the time integral over the pulse equals ``theta``."""
    t = np.asarray(t, dtype=float)
    if pulse.shape == "square":
        # test-only shape: constant drive on [t0 - sigma, t0 + sigma]
        inside = np.abs(t - pulse.t0) <= pulse.sigma
        return np.where(inside, pulse.theta / (2.0 * pulse.sigma), 0.0)
    return pulse.theta / (SQRT_PI * pulse.sigma) * np.exp(-((t - pulse.t0) / pulse.sigma) ** 2)


@dataclass(frozen=True)
class BlochState:
    rho_gg: float
    rho_ee: float
    rho_ge: complex

    @property
    def rho_eg(self):
        return self.rho_ge.conjugate()

    @property
    def trace(self):
        return self.rho_gg + self.rho_ee

    def as_vector(self):
        return np.array([self.rho_gg, self.rho_ge, self.rho_eg, self.rho_ee], dtype=complex)

    @classmethod
    def ground(cls):
        return cls(1.0, 0.0, 0j)

    @classmethod
    def from_vector(cls, rho):
        return cls(float(rho[0].real), float(rho[3].real), complex(rho[1]))


@dataclass(frozen=True)
class Trajectory:
    """Integration output on the integrator's own (adaptive) time grid.

    ``rho`` has shape (n, 4) in the order (gg, ge, eg, ee). ``emitted`` is the
    running value of gamma * int rho_ee dt, integrated alongside the state.
    """

    times: np.ndarray
    rho: np.ndarray
    emitted: np.ndarray | None = None
    gamma: float | None = None

    def __post_init__(self):
        if self.times.ndim != 1 or self.rho.shape != (self.times.size, 4):
            raise ValueError("times/rho shape mismatch")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")

    def __len__(self):
        return self.times.size

    @property
    def rho_ee(self):
        return self.rho[:, 3].real

    @property
    def rho_gg(self):
        return self.rho[:, 0].real

    @property
    def rho_ge(self):
        return self.rho[:, 1]

    @property
    def states(self):
        return [BlochState.from_vector(r) for r in self.rho]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t_ns", "rho_gg", "re_rho_ge", "im_rho_ge", "rho_ee"])
            for t, r in zip(self.times, self.rho):
                w.writerow([repr(float(t)), repr(float(r[0].real)), repr(float(r[1].real)),
                            repr(float(r[1].imag)), repr(float(r[3].real))])


def build_generator(emitter, omega, delta=0.0):
    """4x4 generator M of the optical Bloch equations at Rabi frequency ``omega``."""
    g, gd = emitter.gamma, emitter.gamma_d
    h = 0.5j * omega
    coh = -(g + 2.0 * gd) / 2.0
    return np.array(
        [
            [0.0, h, -h, g],
            [h, coh + 1j * delta, 0.0, -h],
            [-h, 0.0, coh - 1j * delta, h],
            [0.0, -h, h, -g],
        ],
        dtype=complex,
    )


def _split_generator(emitter, delta):
    """Return (M0, M1) with M(Omega) = M0 + Omega * M1."""
    m0 = build_generator(emitter, 0.0, delta)
    m1 = build_generator(emitter, 1.0, delta) - m0
    return m0, m1


def default_t_end(emitter, pulse):
    # 16 lifetimes leaves rho_ee ~ 1e-7, below the 1e-6 completeness threshold
    return pulse.support[1] + 2.0 * pulse.sigma + 16.0 / emitter.gamma


def _rhs_factory(emitter, pulse):
    m0, m1 = _split_generator(emitter, pulse.delta)
    gamma = emitter.gamma

    def rhs(t, y):
        om = float(rabi_frequency(pulse, t))
        rho = y[:4]
        out = np.empty(5, dtype=complex)
        out[:4] = (m0 + om * m1) @ rho
        out[4] = gamma * rho[3].real
        return out

    return rhs


def evolve_pulse(emitter, pulse, t_end=None, tolerance=1e-9, rho0=None, t_start=0.0):
    """Integrate the Bloch equations through a pulse with an adaptive RK pair.

    The pulse window is integrated with a step cap of sigma/4 so the narrow
    drive is never stepped over; the free decay afterwards is unconstrained.
    Raises :class:`IntegrationError` on step-size underflow.
    """
    if t_end is None:
        t_end = default_t_end(emitter, pulse)
    lo, hi = pulse.support
    if t_end <= pulse.t0 + 5.0 * pulse.sigma:
        raise ValueError("t_end must exceed t0 + 5 sigma")
    y0 = np.zeros(5, dtype=complex)
    y0[:4] = BlochState.ground().as_vector() if rho0 is None else np.asarray(rho0, dtype=complex)
    rhs = _rhs_factory(emitter, pulse)
    atol = tolerance * 1e-3

    segments = []
    t_a = t_start
    if hi > t_a:
        segments.append((t_a, min(hi, t_end), pulse.sigma / 4.0))
        t_a = min(hi, t_end)
    if t_end > t_a:
        segments.append((t_a, t_end, np.inf))

    times, states = [np.array([t_start])], [y0[None, :]]
    y = y0
    for a, b, max_step in segments:
        sol = solve_ivp(rhs, (a, b), y, method="DOP853", rtol=tolerance, atol=atol,
                        max_step=max_step)
        if sol.status != 0:
            raise IntegrationError(sol.message, float(sol.t[-1]))
        times.append(sol.t[1:])
        states.append(sol.y.T[1:])
        y = sol.y[:, -1]
    t = np.concatenate(times)
    ys = np.concatenate(states)
    return Trajectory(times=t, rho=ys[:, :4], emitted=ys[:, 4].real.copy(), gamma=emitter.gamma)


def evolve_constant(emitter, omega, delta, t_end, tolerance=1e-10, rho0=None, n_out=200):
    """Evolve under a constant drive; used to cross-check the CW steady state."""
    m = build_generator(emitter, omega, delta)
    y0 = BlochState.ground().as_vector() if rho0 is None else np.asarray(rho0, dtype=complex)
    t_eval = np.linspace(0.0, t_end, n_out)
    sol = solve_ivp(lambda t, y: m @ y, (0.0, t_end), y0, method="DOP853", rtol=tolerance,
                    atol=tolerance * 1e-3, t_eval=t_eval)
    if sol.status != 0:
        raise IntegrationError(sol.message, float(sol.t[-1]))
    return Trajectory(times=sol.t, rho=sol.y.T)


def emission_probability(traj, emitter, method="quadrature"):
    """Mean emitted photon number gamma * int rho_ee dt over the trajectory.

    ``method="quadrature"`` uses the integral carried by the integrator;
    ``"trapezoid"`` re-integrates rho_ee on the output grid.
    """
    if traj.rho_ee[-1] >= 1e-6:
        raise TruncatedTrajectoryError(
            f"trajectory ends at t = {traj.times[-1]:.4g} ns with rho_ee = {traj.rho_ee[-1]:.3g}; "
            "extend t_end until the emitter has decayed"
        )
    if method == "quadrature" and traj.emitted is not None:
        return float(traj.emitted[-1] - traj.emitted[0])
    return float(emitter.gamma * np.trapezoid(traj.rho_ee, traj.times))


def steady_state_cw(emitter, omega, delta=0.0):
    """Trace-one null vector of M for a monochromatic drive."""
    if omega < 0:
        raise ValueError("omega must be >= 0")
    m = build_generator(emitter, omega, delta)
    a = m.copy()
    a[0, :] = [1.0, 0.0, 0.0, 1.0]
    b = np.array([1.0, 0.0, 0.0, 0.0], dtype=complex)
    try:
        rho = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"degenerate steady-state solve: {exc}") from None
    resid = np.linalg.norm(m @ rho)
    if not np.isfinite(resid) or resid > 1e-10 * max(1.0, np.abs(m).max()):
        raise np.linalg.LinAlgError(f"steady-state residual {resid:.3g} too large")
    return BlochState.from_vector(rho)


def rabi_curve(emitter, pulse, theta_values, tolerance=1e-9):
    """Emission probability vs pulse area, each point from a full adaptive integration."""
    thetas = list(theta_values)
    if any(b < a for a, b in zip(thetas, thetas[1:])):
        raise ValueError("theta_values must be sorted ascending")
    out = []
    for th in thetas:
        traj = evolve_pulse(emitter, pulse.with_theta(th), tolerance=tolerance)
        out.append((th, emission_probability(traj, emitter)))
    return out


def pulse_response(emitter, pulse, thetas, n_steps=1200):
    """Vectorised p_e(theta) with fixed-step RK4 over the pulse window.

    Much faster than :func:`rabi_curve` for many pulse areas. After the window
    the drive is negligible, so the remaining excited population is added as
    its complete free decay.
    """
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    m0, m1 = _split_generator(emitter, pulse.delta)
    lo, hi = pulse.support
    t = np.linspace(lo, hi, n_steps + 1)
    dt = t[1] - t[0]
    unit = rabi_frequency(pulse.with_theta(1.0), t)
    unit_mid = rabi_frequency(pulse.with_theta(1.0), t[:-1] + dt / 2)

    rho = np.zeros((thetas.size, 4), dtype=complex)
    rho[:, 0] = 1.0
    ree = np.empty((n_steps + 1, thetas.size))
    ree[0] = 0.0

    def f(r, om):
        # r: (n, 4), om: (n,)
        return r @ m0.T + om[:, None] * (r @ m1.T)

    for k in range(n_steps):
        o0 = thetas * unit[k]
        om = thetas * unit_mid[k]
        o1 = thetas * unit[k + 1]
        k1 = f(rho, o0)
        k2 = f(rho + 0.5 * dt * k1, om)
        k3 = f(rho + 0.5 * dt * k2, om)
        k4 = f(rho + dt * k3, o1)
        rho = rho + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        ree[k + 1] = rho[:, 3].real

    inside = emitter.gamma * simpson(ree, x=t, axis=0)
    return inside + ree[-1]


@dataclass
class RabiFit:
    P_pi: float
    gamma_d: float
    scale: float
    residual_norm: float
    valid: bool = True
    n_starts: int = 0
    history: list = field(default_factory=list, repr=False)


@lru_cache(maxsize=8)
def _rabi_surface(gamma, sigma, theta_max, gamma_d_max, n_theta=241, n_gd=33):
    thetas = np.linspace(0.0, theta_max, n_theta)
    gds = np.linspace(0.0, gamma_d_max, n_gd)
    pulse = PulseParams(theta=1.0, sigma=sigma, t0=6.0 * sigma)
    # RK4 step must resolve the peak Rabi frequency theta_max / (sqrt(pi) sigma)
    n_steps = int(max(600, 40 * theta_max))
    table = np.array([pulse_response(EmitterParams(gamma, gd), pulse, thetas, n_steps) for gd in gds])
    return RectBivariateSpline(gds, thetas, table, kx=3, ky=3)


def fit_rabi(powers, intensities, gamma, sigma, gamma_d_max=2.0, n_starts=12, max_iter=400):
    """Fit ``scale * p_e(pi * sqrt(P / P_pi); gamma_d)`` to power-dependent intensities.

    ``gamma`` (ns^-1) and ``sigma`` (ns) are held fixed. The scale is eliminated
    in closed form, and the remaining (P_pi, gamma_d) are searched by bounded
    Nelder-Mead from a grid of P_pi starting points.
    """
    p = np.asarray(powers, dtype=float)
    y = np.asarray(intensities, dtype=float)
    if p.shape != y.shape or p.size < 8:
        raise ValueError("need at least 8 (power, intensity) points")
    if np.any(p < 0):
        raise ValueError("powers must be non-negative")
    if not np.any(y != 0) or np.ptp(y) == 0:
        raise RabiFitError("degenerate data: intensities are constant")

    pmax = p.max()
    ppos = p[p > 0]
    lo = max(ppos.min() * 2.0, pmax / 60.0)
    hi = pmax
    theta_max = math.pi * math.sqrt(pmax / lo) * 1.02
    surface = _rabi_surface(float(gamma), float(sigma), round(theta_max, 6), float(gamma_d_max))

    def profile(x):
        ppi, gd = x
        th = math.pi * np.sqrt(p / ppi)
        model = surface.ev(np.full_like(th, gd), th)
        denom = float(model @ model)
        if denom <= 0:
            return np.inf, 0.0
        scale = float(model @ y) / denom
        r = y - scale * model
        return float(r @ r), scale

    best = None
    history = []
    for ppi0 in np.geomspace(lo, hi, n_starts):
        for gd0 in (0.1 * gamma_d_max, 0.4 * gamma_d_max):
            res = minimize(lambda x: profile(x)[0], x0=[ppi0, gd0], method="Nelder-Mead",
                           bounds=[(lo, hi), (0.0, gamma_d_max)],
                           options={"maxiter": max_iter, "xatol": 1e-9, "fatol": 1e-14})
            history.append((res.x.copy(), res.fun, res.success))
            if best is None or res.fun < best.fun:
                best = res
    ss, scale = profile(best.x)
    fit = RabiFit(P_pi=float(best.x[0]), gamma_d=float(best.x[1]), scale=scale,
                  residual_norm=math.sqrt(ss), n_starts=len(history), history=history)
    if not best.success or scale <= 0:
        fit.valid = False
        raise RabiFitError(f"Rabi fit did not converge: {best.message}", best=fit)
    return fit
