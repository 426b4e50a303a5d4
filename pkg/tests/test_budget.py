import pytest
from hypothesis import given, strategies as st

from wgsource.budget import (OPTICAL_FACTORS, EfficiencyBudget, Factor, MissingFactorError,
                             budget_csv, budget_report, deadtime_corrected_rate, expected_rate,
                             reference_budget, propagation_transmission, total_efficiency)

factor_values = st.floats(0.05, 1.0)


def make_budget(values, rel=0.0, **kw):
    return EfficiencyBudget({n: Factor(v, v * rel) for n, v in zip(OPTICAL_FACTORS, values)}, **kw)


def test_all_ones():
    assert total_efficiency(make_budget([1.0] * 8)) == (1.0, 0.0)


def test_any_zero_gives_zero():
    vals = [0.9] * 8
    vals[3] = 0.0
    assert total_efficiency(make_budget(vals))[0] == 0.0
    assert expected_rate(make_budget(vals)).raw_MHz == 0.0


def test_reference_total():
    eta, err = total_efficiency(reference_budget())
    assert abs(eta - 0.053) <= 0.007
    assert err == pytest.approx(0.007, abs=0.001)


def test_reference_expected_rate():
    r = expected_rate(reference_budget())
    assert r.raw_MHz == pytest.approx(2.5, abs=0.1)
    assert r.raw_uncertainty_MHz == pytest.approx(0.4, abs=0.05)
    assert r.corrected_MHz == pytest.approx(2.0, abs=0.05)


def test_zero_deadtime_leaves_rate():
    b = reference_budget()
    b0 = EfficiencyBudget(b.factors, b.eta_det, b.rep_rate_MHz, 0.0)
    r = expected_rate(b0)
    assert r.corrected_MHz == r.raw_MHz


def test_deadtime_arithmetic():
    assert deadtime_corrected_rate(2.5, 100.0) == pytest.approx(2.5 / 1.25)


@given(st.floats(0, 1e4), st.floats(1e-3, 10), st.floats(1, 1000))
def test_deadtime_monotone_and_bounded(n, dn, tau):
    m = deadtime_corrected_rate(n, tau)
    assert m < 1e3 / tau
    assert deadtime_corrected_rate(n + dn, tau) > m


def test_missing_factor_named():
    b = EfficiencyBudget({n: Factor(0.5) for n in OPTICAL_FACTORS if n != "eta_f"})
    with pytest.raises(MissingFactorError, match="eta_f"):
        total_efficiency(b)


def test_unknown_factor_rejected():
    with pytest.raises(ValueError, match="eta_typo"):
        EfficiencyBudget({"eta_typo": Factor(0.5)})
    with pytest.raises(ValueError):
        EfficiencyBudget.from_mapping({"factors": {}, "rep_rate": 72.5})


def test_factor_validation():
    with pytest.raises(ValueError):
        Factor(1.2)
    with pytest.raises(ValueError):
        Factor(0.5, -0.1)


@given(st.lists(factor_values, min_size=8, max_size=8), st.permutations(range(8)))
def test_permutation_invariant(vals, perm):
    a = total_efficiency(make_budget(vals, rel=0.05))
    # permuting which factor carries which value leaves the product unchanged
    b = total_efficiency(make_budget([vals[i] for i in perm], rel=0.05))
    assert a[0] == pytest.approx(b[0], rel=1e-12)
    assert a[1] == pytest.approx(b[1], rel=1e-12)


@given(st.lists(factor_values, min_size=8, max_size=8), st.lists(factor_values, min_size=8, max_size=8))
def test_multiplicative_composition(a, b):
    ab = [x * y for x, y in zip(a, b)]
    assert total_efficiency(make_budget(ab))[0] == pytest.approx(
        total_efficiency(make_budget(a))[0] * total_efficiency(make_budget(b))[0], rel=1e-12)


@given(st.lists(factor_values, min_size=8, max_size=8), st.floats(0.001, 0.2))
def test_doubling_relative_uncertainty(vals, rel):
    v1, e1 = total_efficiency(make_budget(vals, rel=rel))
    v2, e2 = total_efficiency(make_budget(vals, rel=2 * rel))
    assert e2 / v2 == pytest.approx(2 * e1 / v1, rel=1e-12)


def test_propagation_examples():
    assert propagation_transmission(0.0, 10.5) == 1.0
    assert propagation_transmission(100.0, 10.5) == pytest.approx(10 ** -0.105)
    assert propagation_transmission(100.0, 10.5) == pytest.approx(0.785, abs=5e-4)
    assert propagation_transmission(1000.0, 10.0) == pytest.approx(0.1)
    with pytest.raises(ValueError):
        propagation_transmission(-1.0, 1.0)


def test_from_mapping_round_trip():
    cfg = {"factors": {n: {"value": 0.9, "uncertainty": 0.01} for n in OPTICAL_FACTORS},
           "eta_det": {"value": 0.65, "uncertainty": 0.05}, "rep_rate_MHz": 80.0,
           "deadtime_ns": 50.0}
    b = EfficiencyBudget.from_mapping(cfg)
    assert total_efficiency(b)[0] == pytest.approx(0.9 ** 8)
    assert b.rep_rate_MHz == 80.0 and b.deadtime_ns == 50.0


def test_csv_and_report():
    b = reference_budget()
    lines = budget_csv(b).splitlines()
    assert lines[0] == "factor,value,uncertainty"
    assert [ln.split(",")[0] for ln in lines[1:9]] == list(OPTICAL_FACTORS)
    total = dict((r.split(",")[0], float(r.split(",")[1])) for r in lines[1:])["total"]
    assert total == total_efficiency(b)[0]
    report = budget_report(b)
    assert "expected_rate_MHz" in report and "2.5343" in report
