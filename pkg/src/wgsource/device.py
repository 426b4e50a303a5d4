"""Dual-mode waveguide transport: beta factors, pump suppression and impurity."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from . import bloch

__all__ = [
    "ModeProfile",
    "DeviceParams",
    "FilterSection",
    "FilterChain",
    "DIVERGENT",
    "OffsetError",
    "NoRootError",
    "beta_at",
    "pump_suppression",
    "impurity_simplified",
    "impurity_exact",
    "impurity_vs_power",
    "impurity_map",
    "extract_beta_c",
    "calibrate_analytic_profiles",
    "default_profiles",
    "default_device",
    "load_profile_csv",
    "load_transmission_csv",
    "write_impurity_map_csv",
]

# Sentinel for a divergent impurity (beta_E * beta_C == 0); serialised as "inf".
DIVERGENT = math.inf

REFERENCE_T_P = 2e-5
REFERENCE_XI_LOW_POWER = 1.7e-3
REFERENCE_BETA_C = 0.80
REFERENCE_OFFSET_NM = 20.0


class OffsetError(ValueError):
    pass


class NoRootError(ValueError):
    pass


@dataclass(frozen=True)
class ModeProfile:
    """Transverse amplitude profile, normalised to max |u| = 1.

    ``kind`` is ``"even"``/``"odd"`` (hard-wall cosine / sine of width
    ``effective_width``) or ``"tabulated"`` (linear interpolation of
    ``samples``). Analytic profiles vanish outside |x| < effective_width / 2.
    """

    kind: str
    effective_width: float = 0.0
    samples: tuple = ()

    def __post_init__(self):
        if self.kind in ("even", "odd"):
            if not self.effective_width > 0:
                raise ValueError("analytic profiles need effective_width > 0")
        elif self.kind == "tabulated":
            if len(self.samples) < 2:
                raise ValueError("tabulated profile needs at least two samples")
            xs = np.array([s[0] for s in self.samples], dtype=float)
            if np.any(np.diff(xs) <= 0):
                raise ValueError("tabulated offsets must be strictly increasing")
            amps = np.array([s[1] for s in self.samples], dtype=float)
            peak = np.abs(amps).max()
            if peak == 0:
                raise ValueError("tabulated profile is identically zero")
            object.__setattr__(self, "samples",
                               tuple((float(x), float(a) / peak) for x, a in zip(xs, amps)))
        else:
            raise ValueError(f"unknown profile kind {self.kind!r}")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "tabulated":
            xs = np.array([s[0] for s in self.samples])
            amps = np.array([s[1] for s in self.samples])
            return np.interp(x, xs, amps, left=0.0, right=0.0)
        w = self.effective_width
        inside = np.abs(x) < w / 2
        if self.kind == "even":
            u = np.cos(math.pi * x / w)
        else:
            u = np.sin(2.0 * math.pi * x / w)
        return np.where(inside, u, 0.0)


@dataclass(frozen=True)
class DeviceParams:
    """Transmittances of the photonic-crystal (T_E, T_C) and taper filter
    (T_Ef, T_Cf) sections, peak beta factors, and physical waveguide width (nm)."""

    T_E: float = 1.0
    T_C: float = 2e-5
    T_Ef: float = 1e-6
    T_Cf: float = 1.0
    B_C: float = 0.95
    B_E: float = 0.05
    width: float = 450.0

    def __post_init__(self):
        for name in ("T_E", "T_C", "T_Ef", "T_Cf", "B_C", "B_E"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if not self.width > 0:
            raise ValueError("width must be > 0")


@dataclass(frozen=True)
class FilterSection:
    t_E: float
    t_C: float
    name: str = ""

    def __post_init__(self):
        for v in (self.t_E, self.t_C):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"section transmittance must lie in [0, 1], got {v}")


@dataclass(frozen=True)
class FilterChain:
    sections: tuple = ()
    split_E: float = 0.5
    split_C: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "sections", tuple(self.sections))
        for v in (self.split_E, self.split_C):
            if not 0.0 <= v <= 1.0:
                raise ValueError("splitter fractions must lie in [0, 1]")

    @classmethod
    def from_device(cls, params):
        return cls((FilterSection(params.T_E, params.T_C, "photonic crystal"),
                    FilterSection(params.T_Ef, params.T_Cf, "taper filter")))

    def mode_transmittance(self):
        t_e = math.prod(s.t_E for s in self.sections)
        t_c = math.prod(s.t_C for s in self.sections)
        return t_e, t_c


def beta_at(profile_E, profile_C, params, offset):
    """(beta_E, beta_C) at a transverse emitter offset in nm."""
    if not abs(offset) < params.width / 2:
        raise OffsetError(f"offset {offset} nm lies outside the {params.width} nm waveguide")
    u_e = float(profile_E(offset))
    u_c = float(profile_C(offset))
    return params.B_E * u_e * u_e, params.B_C * u_c * u_c


def pump_suppression(chain_or_params):
    """End-to-end pump transmittance T_p (residual laser / input laser)."""
    if isinstance(chain_or_params, DeviceParams):
        p = chain_or_params
        return 0.5 * (p.T_E * p.T_Ef + p.T_C * p.T_Cf)
    chain = chain_or_params
    t_e, t_c = chain.mode_transmittance()
    return chain.split_E * t_e + chain.split_C * t_c


def impurity_simplified(T_p, beta_E, beta_C):
    """Low-power impurity 2 T_p / (beta_E beta_C); DIVERGENT when the product is zero."""
    if T_p < 0 or beta_E < 0 or beta_C < 0:
        raise ValueError("T_p and beta factors must be non-negative")
    prod = beta_E * beta_C
    if prod == 0:
        return DIVERGENT
    return 2.0 * T_p / prod


def impurity_exact(params, beta_E, beta_C):
    """Impurity from the full single-photon intensity, keeping the pump that
    leaks through the photonic crystal in mode C and the emission routed into
    mode E. Photons emitted into E reach the output through T_Ef, those in C
    through T_Cf.
    """
    if beta_E < 0 or beta_C < 0:
        raise ValueError("beta factors must be non-negative")
    excitation = params.T_E * beta_E + params.T_C * beta_C
    collection = beta_C * params.T_Cf + beta_E * params.T_Ef
    i_sp = 0.5 * excitation * collection
    i_r = pump_suppression(params)
    if i_sp == 0:
        return DIVERGENT
    return i_r / i_sp


def _linear_coefficient(emitter, pulse, theta_probe=1e-2):
    pe = bloch.emission_probability(
        bloch.evolve_pulse(emitter, pulse.with_theta(theta_probe), tolerance=1e-11), emitter)
    return pe / theta_probe ** 2


def impurity_vs_power(T_p, beta_E, beta_C, emitter, pulse, powers, P_pi=1.0, tolerance=1e-9):
    """Impurity as a function of pump power.

    The residual laser grows linearly with P while the emitted intensity follows
    p_e(theta), theta = pi sqrt(P / P_pi); the low-power value is the
    simplified impurity. Returns a list of (P, theta, p_e, xi).
    """
    powers = [float(p) for p in powers]
    if any(p <= 0 for p in powers):
        raise ValueError("powers must be > 0")
    xi0 = impurity_simplified(T_p, beta_E, beta_C)
    k = _linear_coefficient(emitter, pulse)
    rows = []
    for p in powers:
        theta = math.pi * math.sqrt(p / P_pi)
        pe = bloch.emission_probability(
            bloch.evolve_pulse(emitter, pulse.with_theta(theta), tolerance=tolerance), emitter)
        xi = xi0 * k * theta ** 2 / pe if pe > 0 else DIVERGENT
        rows.append((p, theta, pe, xi))
    return rows


def impurity_map(params, profile_E, profile_C, offsets, T_p=None):
    """Per-offset (offset, beta_E, beta_C, xi) using the simplified impurity."""
    if T_p is None:
        T_p = pump_suppression(params)
    rows = []
    for x in offsets:
        b_e, b_c = beta_at(profile_E, profile_C, params, x)
        rows.append((float(x), b_e, b_c, impurity_simplified(T_p, b_e, b_c)))
    return rows


def extract_beta_c(xi_measured, T_p, profile_E, profile_C, params, n_scan=2000):
    """Invert the low-power impurity along the beta curves.

    Scans x in (0, width/2) for the first offset (closest to the centre) where
    xi(x) = xi_measured and refines it with Brent's method. Returns (beta_C, x).
    """
    if xi_measured <= 2.0 * T_p:
        raise NoRootError("xi_measured must exceed 2 T_p for beta factors <= 1")

    def resid(x):
        b_e, b_c = beta_at(profile_E, profile_C, params, x)
        prod = b_e * b_c
        # compare in log-product space to stay finite near beta_E = 0
        return math.log(max(prod, 1e-300)) - math.log(2.0 * T_p / xi_measured)

    half = params.width / 2
    xs = np.linspace(half * 1e-6, half * (1 - 1e-9), n_scan)
    vals = np.array([resid(x) for x in xs])
    idx = np.nonzero((vals[:-1] < 0) & (vals[1:] >= 0))[0]
    if idx.size == 0:
        raise NoRootError("no offset in (0, width/2) reproduces the measured impurity")
    i = idx[0]
    x = brentq(resid, xs[i], xs[i + 1], xtol=1e-10)
    return beta_at(profile_E, profile_C, params, x)[1], x


def calibrate_analytic_profiles(B_C=0.95, T_p=REFERENCE_T_P, xi=REFERENCE_XI_LOW_POWER,
                                beta_c=REFERENCE_BETA_C, offset=REFERENCE_OFFSET_NM):
    """Solve for (w_eff, B_E) so that beta_C(offset) = beta_c and the
    low-power impurity at that offset equals ``xi``, for a chosen peak B_C."""
    if not beta_c < B_C <= 1.0:
        raise ValueError("peak B_C must exceed the anchored beta_C")
    arg = math.acos(math.sqrt(beta_c / B_C))
    w_eff = math.pi * offset / arg
    beta_e = 2.0 * T_p / (xi * beta_c)
    B_E = beta_e / math.sin(2.0 * math.pi * offset / w_eff) ** 2
    if B_E > 1:
        raise ValueError("calibration requires B_E > 1")
    return {"B_C": B_C, "B_E": B_E, "effective_width_nm": w_eff}


def _default_config():
    with resources.files("wgsource").joinpath("data/default_device.json").open() as fh:
        return json.load(fh)


def default_profiles():
    cfg = _default_config()
    w = cfg["effective_width_nm"]
    return ModeProfile("odd", w), ModeProfile("even", w)


def default_device():
    cfg = _default_config()
    return DeviceParams(T_E=cfg["T_E"], T_C=cfg["T_C"], T_Ef=cfg["T_Ef"], T_Cf=cfg["T_Cf"],
                        B_C=cfg["B_C"], B_E=cfg["B_E"], width=cfg["width_nm"])


def load_profile_csv(path):
    """Read an ``offset_nm,amplitude`` table into a tabulated ModeProfile."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or set(rows[0]) != {"offset_nm", "amplitude"}:
        raise ValueError(f"{path}: expected columns offset_nm,amplitude")
    return ModeProfile("tabulated", samples=tuple((float(r["offset_nm"]), float(r["amplitude"]))
                                                  for r in rows))


def load_transmission_csv(path):
    """Read ``lambda_nm,T_E,T_C``; returns a callable giving (T_E, T_C) at a
    wavelength by linear interpolation (no extrapolation)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or set(rows[0]) != {"lambda_nm", "T_E", "T_C"}:
        raise ValueError(f"{path}: expected columns lambda_nm,T_E,T_C")
    lam = np.array([float(r["lambda_nm"]) for r in rows])
    t_e = np.array([float(r["T_E"]) for r in rows])
    t_c = np.array([float(r["T_C"]) for r in rows])
    if np.any(np.diff(lam) <= 0):
        raise ValueError("wavelengths must be strictly increasing")

    def at(wavelength):
        if not lam[0] <= wavelength <= lam[-1]:
            raise ValueError(f"wavelength {wavelength} nm outside tabulated range")
        return float(np.interp(wavelength, lam, t_e)), float(np.interp(wavelength, lam, t_c))

    return at


def _fmt(v):
    return "inf" if math.isinf(v) else repr(float(v))


def write_impurity_map_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["offset_nm", "beta_E", "beta_C", "xi"])
        for x, b_e, b_c, xi in rows:
            w.writerow([_fmt(x), _fmt(b_e), _fmt(b_c), _fmt(xi)])
