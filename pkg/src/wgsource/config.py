"""Run configuration: one JSON document with a section per component.

Every physical quantity carries its unit in the key name (``lifetime_ns``,
``fwhm_ns``, ``rep_rate_MHz`` ...). Unknown keys are rejected at every level,
and each section is turned into the corresponding validated dataclass at load
time, so a bad file fails before any computation starts.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .bloch import EmitterParams, PulseParams, fwhm_to_sigma
from .budget import EfficiencyBudget, reference_budget
from .device import DeviceParams, ModeProfile, default_device, default_profiles, load_profile_csv
from .montecarlo.synth import REFERENCE_REP_PERIOD_NS, SourceModel
from .photonstats import HomSetup

__all__ = ["ConfigError", "RunConfig", "load_config", "SECTIONS"]


class ConfigError(ValueError):
    """Invalid or inconsistent configuration document."""


_EMITTER_KEYS = {"lifetime_ns", "gamma_per_ns", "gamma_d_per_ns"}
_PULSE_KEYS = {"theta_rad", "theta_pi", "fwhm_ns", "sigma_ns", "t0_ns", "detuning_rad_per_ns", "shape"}
_DEVICE_KEYS = {"T_E", "T_C", "T_Ef", "T_Cf", "B_C", "B_E", "width_nm"}
_PROFILE_KEYS = {"kind", "effective_width_nm", "E_csv", "C_csv"}
_SOURCE_KEYS = {"p_click", "xi", "blink_rate_per_us", "blink_fraction", "rep_rate_MHz", "V",
                "deadtime_ns", "quantum_jumps", "workers"}
_HOM_KEYS = {"R", "T", "epsilon", "eta_opt"}
_RABI_KEYS = {"P_pi", "powers", "T_p", "beta_E", "beta_C"}
_MAP_KEYS = {"offset_min_nm", "offset_max_nm", "n_offsets", "T_p"}
_SYNTH_KEYS = {"n_pulses", "bin_width_ps", "window_ps", "norm_delay_ps"}

SECTIONS = {
    "emitter": _EMITTER_KEYS,
    "pulse": _PULSE_KEYS,
    "device": _DEVICE_KEYS,
    "profiles": _PROFILE_KEYS,
    "source": _SOURCE_KEYS,
    "hom": _HOM_KEYS,
    "budget": None,  # validated by EfficiencyBudget.from_mapping
    "rabi": _RABI_KEYS,
    "impurity_map": _MAP_KEYS,
    "synth": _SYNTH_KEYS,
}
_TOP_KEYS = set(SECTIONS) | {"seed", "out_dir"}


def _check_keys(where, got, allowed):
    extra = set(got) - allowed
    if extra:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(sorted(extra))}")


@dataclass(frozen=True)
class RunConfig:
    emitter: EmitterParams
    pulse: PulseParams
    device: DeviceParams
    profile_E: ModeProfile
    profile_C: ModeProfile
    source: SourceModel
    workers: int
    hom: HomSetup
    budget: EfficiencyBudget
    rabi: dict = field(default_factory=dict)
    impurity_map: dict = field(default_factory=dict)
    synth: dict = field(default_factory=dict)
    seed: int | None = None
    out_dir: str | None = None

    @classmethod
    def from_dict(cls, doc, base_dir="."):
        if not isinstance(doc, dict):
            raise ConfigError("configuration must be a JSON object")
        _check_keys("config", doc, _TOP_KEYS)
        for name, keys in SECTIONS.items():
            sec = doc.get(name, {})
            if not isinstance(sec, dict):
                raise ConfigError(f"{name}: section must be an object")
            if keys is not None:
                _check_keys(name, sec, keys)
        try:
            return cls._build(doc, Path(base_dir))
        except ConfigError:
            raise
        except (ValueError, TypeError, KeyError, OSError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def _build(cls, doc, base):
        e = doc.get("emitter", {})
        if "lifetime_ns" in e and "gamma_per_ns" in e:
            raise ConfigError("emitter: give lifetime_ns or gamma_per_ns, not both")
        gamma = float(e["gamma_per_ns"]) if "gamma_per_ns" in e else 1.0 / float(e.get("lifetime_ns", 0.64))
        emitter = EmitterParams(gamma, float(e.get("gamma_d_per_ns", 0.0)))

        p = doc.get("pulse", {})
        if "theta_rad" in p and "theta_pi" in p:
            raise ConfigError("pulse: give theta_rad or theta_pi, not both")
        theta = float(p["theta_rad"]) if "theta_rad" in p else math.pi * float(p.get("theta_pi", 1.0))
        if "fwhm_ns" in p and "sigma_ns" in p:
            raise ConfigError("pulse: give fwhm_ns or sigma_ns, not both")
        sigma = float(p["sigma_ns"]) if "sigma_ns" in p else fwhm_to_sigma(float(p.get("fwhm_ns", 0.026)))
        shape = p.get("shape", "gaussian")
        t0 = float(p["t0_ns"]) if "t0_ns" in p else 6.0 * sigma
        pulse = PulseParams(theta, sigma, t0, float(p.get("detuning_rad_per_ns", 0.0)), shape)

        d = doc.get("device", {})
        base_dev = default_device()
        device = DeviceParams(
            T_E=float(d.get("T_E", base_dev.T_E)), T_C=float(d.get("T_C", base_dev.T_C)),
            T_Ef=float(d.get("T_Ef", base_dev.T_Ef)), T_Cf=float(d.get("T_Cf", base_dev.T_Cf)),
            B_C=float(d.get("B_C", base_dev.B_C)), B_E=float(d.get("B_E", base_dev.B_E)),
            width=float(d.get("width_nm", base_dev.width)))

        pr = doc.get("profiles", {})
        kind = pr.get("kind", "default")
        if kind == "default":
            prof_E, prof_C = default_profiles()
        elif kind == "analytic":
            w = float(pr["effective_width_nm"])
            prof_E, prof_C = ModeProfile("odd", w), ModeProfile("even", w)
        elif kind == "tabulated":
            prof_E = load_profile_csv(base / pr["E_csv"])
            prof_C = load_profile_csv(base / pr["C_csv"])
        else:
            raise ConfigError(f"profiles: unknown kind {kind!r}")

        s = doc.get("source", {})
        workers = int(s.get("workers", 1))
        if workers < 1:
            raise ConfigError("source: workers must be >= 1")
        rep_rate = float(s.get("rep_rate_MHz", 1e3 / REFERENCE_REP_PERIOD_NS))
        if rep_rate <= 0:
            raise ConfigError("source: rep_rate_MHz must be > 0")
        jumps = s.get("quantum_jumps", False)
        if not isinstance(jumps, bool):
            raise ConfigError("source: quantum_jumps must be true or false")
        source = SourceModel(
            p_click=float(s.get("p_click", 0.05)), xi=float(s.get("xi", 0.0)),
            blink_rate=float(s.get("blink_rate_per_us", 0.25)),
            blink_fraction=float(s.get("blink_fraction", 0.0)),
            rep_period=1e3 / rep_rate, V=float(s.get("V", 1.0)),
            deadtime=float(s.get("deadtime_ns", 100.0)), lifetime=1.0 / emitter.gamma,
            gamma_d=emitter.gamma_d, pulse=pulse if jumps else None)

        h = doc.get("hom", {})
        reference = HomSetup.reference()
        hom = HomSetup(R=float(h.get("R", reference.R)), T=float(h.get("T", reference.T)),
                       epsilon=float(h.get("epsilon", reference.epsilon)),
                       eta_opt=float(h.get("eta_opt", reference.eta_opt)))

        budget = EfficiencyBudget.from_mapping(doc["budget"]) if "budget" in doc else reference_budget()

        seed = doc.get("seed")
        if seed is not None:
            if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
                raise ConfigError("seed must be an integer in [0, 2^64)")
        return cls(emitter, pulse, device, prof_E, prof_C, source, workers, hom, budget,
                   dict(doc.get("rabi", {})), dict(doc.get("impurity_map", {})),
                   dict(doc.get("synth", {})), seed, doc.get("out_dir"))


def load_config(path=None):
    """Load and validate a JSON config; ``None`` gives the built-in defaults."""
    if path is None:
        return RunConfig.from_dict({})
    path = Path(path)
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return RunConfig.from_dict(doc, base_dir=path.parent)
