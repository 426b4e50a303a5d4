"""Closed-form photon statistics: impurity <-> g2(0), HOM visibility
corrections, the background-sweep intercept method and the blinking model."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

__all__ = [
    "HomSetup",
    "PeakAreas",
    "HomCorrection",
    "InterceptFit",
    "g2_from_xi",
    "xi_from_g2",
    "vraw_from_areas",
    "hom_expected_area",
    "hom_intrinsic",
    "hom_raw_visibility",
    "v_intercept_fit",
    "blinking_fraction",
    "bunching_amplitude",
    "blinking_envelope",
]


@dataclass(frozen=True)
class HomSetup:
    R: float = 0.5
    T: float = 0.5
    epsilon: float = 0.0
    eta_opt: float = 0.0

    def __post_init__(self):
        for name in ("R", "T", "epsilon", "eta_opt"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if abs(self.R + self.T - 1.0) > 1e-6:
            raise ValueError(f"R + T must equal 1, got {self.R + self.T}")

    @classmethod
    def ideal(cls):
        return cls(0.5, 0.5, 0.0, 0.0)

    @classmethod
    def reference(cls, epsilon=0.005):
        """Measured beamsplitter and optical efficiency; epsilon is only bounded
        (1 - epsilon > 0.95) by the measurement, default chosen inside that bound."""
        return cls(R=0.476, T=0.524, epsilon=epsilon, eta_opt=0.053)


@dataclass(frozen=True)
class PeakAreas:
    A_parallel: float
    A_perp: float
    A_zero: float = 0.0
    A_inf: float = 0.0

    def __post_init__(self):
        for name in ("A_parallel", "A_perp", "A_zero", "A_inf"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


class HomCorrection(NamedTuple):
    V: float
    out_of_range: bool


class InterceptFit(NamedTuple):
    V: float
    intercept: float
    slope: float
    uncertainty: float


def g2_from_xi(xi):
    if not 0.0 <= xi <= 1.0:
        raise ValueError(f"xi must lie in [0, 1], got {xi}")
    return 2.0 * xi - xi * xi


def xi_from_g2(g2):
    if not 0.0 <= g2 <= 1.0:
        raise ValueError(f"g2 must lie in [0, 1], got {g2}")
    # 1 - sqrt(1 - g2) loses precision for small g2
    return g2 / (1.0 + math.sqrt(1.0 - g2))


def vraw_from_areas(areas):
    if areas.A_perp <= 0:
        raise ValueError("A_perp must be > 0")
    return (areas.A_perp - areas.A_parallel) / areas.A_perp


def hom_expected_area(V, setup, g2):
    """Normalised zero-delay coincidence area after the delay interferometer."""
    if not 0.0 <= V <= 1.0:
        raise ValueError(f"V must lie in [0, 1], got {V}")
    R, T = setup.R, setup.T
    multi = 1.0 + (2.0 - setup.eta_opt) * g2
    return (R ** 3 * T + R * T ** 3) * multi - 2.0 * R * R * T * T * (1.0 - setup.epsilon) ** 2 * V


def hom_raw_visibility(V, setup, g2):
    """V_raw expected for intrinsic visibility V (forward model of hom_intrinsic)."""
    a_par = hom_expected_area(V, setup, g2)
    a_perp = hom_expected_area(0.0, setup, g2)
    return vraw_from_areas(PeakAreas(A_parallel=a_par, A_perp=a_perp))


def hom_intrinsic(V_raw, setup, g2):
    """Intrinsic visibility corrected for g2(0) and setup imperfections.

    Values above 1 are returned unclamped with ``out_of_range=True``.
    """
    if not 0.0 <= V_raw <= 1.0:
        raise ValueError(f"V_raw must lie in [0, 1], got {V_raw}")
    if setup.epsilon >= 1.0:
        raise ValueError("epsilon = 1 leaves no interference to correct")
    R, T = setup.R, setup.T
    num = (1.0 + (2.0 - setup.eta_opt) * g2) * (R * R + T * T) * V_raw
    V = num / (2.0 * R * T * (1.0 - setup.epsilon) ** 2)
    return HomCorrection(V, not 0.0 <= V <= 1.0)


def v_intercept_fit(points):
    """Straight-line fit of (g2, 1 - V_raw); the intrinsic V is 1 - intercept.

    The uncertainty is the intercept standard error from the OLS covariance.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
        raise ValueError("need at least 3 (g2, 1 - V_raw) points")
    x, y = pts[:, 0], pts[:, 1]
    X = np.column_stack([np.ones_like(x), x])
    if np.linalg.matrix_rank(X) < 2:
        raise np.linalg.LinAlgError("rank-deficient fit: g2 values are not distinct")
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    dof = x.size - 2
    s2 = float(resid @ resid) / dof if dof > 0 else 0.0
    cov = s2 * np.linalg.inv(X.T @ X)
    intercept, slope = float(coef[0]), float(coef[1])
    return InterceptFit(1.0 - intercept, intercept, slope, math.sqrt(cov[0, 0]))


def blinking_fraction(b):
    """Dark-state fraction of a two-state telegraph emitter with g2 bunching
    amplitude ``b`` (g2(tau) = 1 + b exp(-lambda |tau|))."""
    if b < 0:
        raise ValueError("bunching amplitude must be >= 0")
    if math.isinf(b):
        return 1.0
    return b / (1.0 + b)


def bunching_amplitude(dark_fraction):
    """Inverse of :func:`blinking_fraction`."""
    if not 0.0 <= dark_fraction < 1.0:
        raise ValueError("dark fraction must lie in [0, 1)")
    return dark_fraction / (1.0 - dark_fraction)


def blinking_envelope(tau, b, lambda_rate):
    if not lambda_rate > 0:
        raise ValueError("lambda_rate must be > 0")
    return 1.0 + b * np.exp(-lambda_rate * np.abs(tau))
