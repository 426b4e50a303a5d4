"""End-to-end efficiency ledger of the source and the detected-rate estimate."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple

__all__ = [
    "OPTICAL_FACTORS",
    "Factor",
    "EfficiencyBudget",
    "RateEstimate",
    "MissingFactorError",
    "total_efficiency",
    "expected_rate",
    "deadtime_corrected_rate",
    "propagation_transmission",
    "reference_budget",
    "budget_report",
    "budget_csv",
]

OPTICAL_FACTORS = ("eta_Y", "eta_ZPL", "eta_blink", "beta_C", "eta_p", "T_optics", "eta_f", "eta_s")


class MissingFactorError(KeyError):
    pass


@dataclass(frozen=True)
class Factor:
    value: float
    uncertainty: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"efficiency factor must lie in [0, 1], got {self.value}")
        if self.uncertainty < 0:
            raise ValueError("uncertainty must be >= 0")

    @property
    def relative(self):
        return self.uncertainty / self.value if self.value else 0.0


class RateEstimate(NamedTuple):
    raw_MHz: float
    raw_uncertainty_MHz: float
    corrected_MHz: float


@dataclass(frozen=True)
class EfficiencyBudget:
    factors: Mapping[str, Factor]
    eta_det: Factor = Factor(1.0)
    rep_rate_MHz: float = 72.5
    deadtime_ns: float = 0.0

    def __post_init__(self):
        unknown = set(self.factors) - set(OPTICAL_FACTORS)
        if unknown:
            raise ValueError(f"unknown efficiency factor(s): {', '.join(sorted(unknown))}")
        if self.rep_rate_MHz <= 0:
            raise ValueError("rep_rate_MHz must be > 0")
        if self.deadtime_ns < 0:
            raise ValueError("deadtime_ns must be >= 0")

    @classmethod
    def from_mapping(cls, cfg):
        """Build from a config block; every key must be a known name."""
        cfg = dict(cfg)
        allowed = {"factors", "eta_det", "rep_rate_MHz", "deadtime_ns"}
        extra = set(cfg) - allowed
        if extra:
            raise ValueError(f"unknown budget key(s): {', '.join(sorted(extra))}")

        def factor(v):
            if isinstance(v, Mapping):
                bad = set(v) - {"value", "uncertainty"}
                if bad:
                    raise ValueError(f"unknown factor field(s): {', '.join(sorted(bad))}")
                return Factor(float(v["value"]), float(v.get("uncertainty", 0.0)))
            return Factor(float(v))

        factors = {k: factor(v) for k, v in cfg.get("factors", {}).items()}
        return cls(
            factors=factors,
            eta_det=factor(cfg.get("eta_det", 1.0)),
            rep_rate_MHz=float(cfg.get("rep_rate_MHz", 72.5)),
            deadtime_ns=float(cfg.get("deadtime_ns", 0.0)),
        )


def reference_budget():
    f = Factor
    return EfficiencyBudget(
        factors={
            "eta_Y": f(0.91, 0.01),
            "eta_ZPL": f(0.915, 0.005),
            "eta_blink": f(0.97, 0.0),
            "beta_C": f(0.80, 0.05),
            "eta_p": f(0.85, 0.05),
            "T_optics": f(0.51, 0.02),
            "eta_f": f(0.24, 0.02),
            "eta_s": f(0.80, 0.01),
        },
        eta_det=f(0.65, 0.05),
        rep_rate_MHz=72.5,
        deadtime_ns=100.0,
    )


def total_efficiency(budget):
    """Product of the eight optical factors with first-order relative-quadrature error."""
    for name in OPTICAL_FACTORS:
        if name not in budget.factors:
            raise MissingFactorError(f"missing efficiency factor {name!r}")
    fs = [budget.factors[n] for n in OPTICAL_FACTORS]
    value = math.prod(f.value for f in fs)
    if value == 0:
        return 0.0, 0.0
    rel = math.sqrt(sum(f.relative ** 2 for f in fs))
    return value, value * rel


def deadtime_corrected_rate(rate_MHz, deadtime_ns):
    """Non-paralyzable detector: m = n / (1 + n tau)."""
    return rate_MHz / (1.0 + rate_MHz * deadtime_ns * 1e-3)


def expected_rate(budget):
    eta, d_eta = total_efficiency(budget)
    raw = eta * budget.eta_det.value * budget.rep_rate_MHz
    if raw == 0:
        return RateEstimate(0.0, 0.0, 0.0)
    rel = math.hypot(d_eta / eta, budget.eta_det.relative)
    return RateEstimate(raw, raw * rel, deadtime_corrected_rate(raw, budget.deadtime_ns))


def propagation_transmission(length_um, loss_db_per_mm):
    if length_um < 0 or loss_db_per_mm < 0:
        raise ValueError("length and loss must be >= 0")
    return 10.0 ** (-loss_db_per_mm * (length_um * 1e-3) / 10.0)


def _rows(budget):
    rows = [(n, budget.factors[n].value, budget.factors[n].uncertainty) for n in OPTICAL_FACTORS]
    eta, d_eta = total_efficiency(budget)
    rows.append(("total", eta, d_eta))
    rows.append(("eta_det", budget.eta_det.value, budget.eta_det.uncertainty))
    rate = expected_rate(budget)
    rows.append(("expected_rate_MHz", rate.raw_MHz, rate.raw_uncertainty_MHz))
    rows.append(("deadtime_corrected_rate_MHz", rate.corrected_MHz, 0.0))
    return rows


def budget_csv(budget):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["factor", "value", "uncertainty"])
    for name, v, u in _rows(budget):
        w.writerow([name, repr(float(v)), repr(float(u))])
    return buf.getvalue()


def budget_report(budget):
    lines = [f"{'factor':<30}{'value':>12}{'uncertainty':>14}"]
    for name, v, u in _rows(budget):
        lines.append(f"{name:<30}{v:>12.4f}{u:>14.4f}")
    lines.append(f"{'rep_rate_MHz':<30}{budget.rep_rate_MHz:>12.4f}")
    lines.append(f"{'deadtime_ns':<30}{budget.deadtime_ns:>12.4f}")
    return "\n".join(lines)
