import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from conftest import PHI
from escape_lab.battery import default_battery, sqrt2_minus_1_code
from escape_lab.errors import DomainError, PreconditionError, ResourceError
from escape_lab.experiments import (
    EXTRAPOLATION_FALLBACK,
    NONNESTED_HOLES,
    THETA_GE_HALF,
    adapted_system_check,
    check_nested,
    extremal_index_analytic,
    extremal_index_empirical,
    fit_decay_ratio,
    geometric_extrapolate,
    gibbs_markov_theta,
    local_escape_experiment,
    local_escape_iterate,
    phi_coefficient,
    phi_function,
    s_of_n,
    suggest_iterate_power,
    theta_power_check,
)
from escape_lab.sft import CylinderSet, PointCode, Sft, cylinder_of_point

FULL = Sft.full_shift(2)
GOLD = Sft.golden_mean()
X0 = PointCode.periodic("0")
X01 = PointCode.periodic("01")


def test_extremal_index_analytic_examples(bern, parry):
    assert extremal_index_analytic(bern, X0) == pytest.approx(0.5, abs=1e-15)
    assert extremal_index_analytic(bern, X01) == pytest.approx(0.25, abs=1e-15)
    assert extremal_index_analytic(parry, X0) == pytest.approx(1 / PHI, abs=1e-14)
    with pytest.raises(DomainError):
        extremal_index_analytic(bern, sqrt2_minus_1_code())


def test_extremal_index_empirical_examples(bern, parry):
    for n in range(1, 21):
        assert abs(extremal_index_empirical(bern, X0, n) - 0.5) <= 1e-15
    for n in range(2, 21, 2):
        assert extremal_index_empirical(bern, X01, n) == pytest.approx(0.25, abs=1e-15)
    assert extremal_index_empirical(parry, X0, 10) == pytest.approx(1 / PHI, abs=1e-10)
    with pytest.raises(DomainError):
        extremal_index_empirical(bern, X0, 3, U=CylinderSet(FULL, 3, []))


def test_gibbs_markov_examples(bern, parry, chain):
    assert gibbs_markov_theta(bern, X0) == pytest.approx(0.5, abs=1e-15)
    assert gibbs_markov_theta(parry, X0) == pytest.approx(1 / PHI, abs=1e-14)
    assert gibbs_markov_theta(chain, X01) == pytest.approx(0.12, abs=1e-15)


def test_empirical_theta_converges_monotonically_on_battery():
    for system in default_battery():
        for x in system.periodic.values():
            theta = extremal_index_analytic(system.gibbs, x)
            errs = [abs(extremal_index_empirical(system.gibbs, x, n) - theta) for n in range(4, 16)]
            assert all(b <= a + 1e-15 for a, b in zip(errs, errs[1:]))
            assert errs[-1] < 1e-6


def test_theta_power_examples(bern, parry):
    for u, ratio, _ in theta_power_check(bern, X0, 6, 10):
        assert ratio == pytest.approx(2.0**-u, abs=1e-15)
    assert theta_power_check(parry, X0, 8, 0)[0][1] == 1.0
    for u, ratio, ref in theta_power_check(parry, X0, 8, 5):
        assert ratio == pytest.approx(ref, abs=1e-9)


def test_local_escape_examples(bern):
    rep = local_escape_experiment(bern, X0, range(2, 15))
    ratios = [r.ratio for r in rep.rows]
    assert all(b < a for a, b in zip(ratios, ratios[1:]))
    assert rep.rho_limit == pytest.approx(0.5, abs=0.02)
    rep = local_escape_experiment(bern, X01, range(2, 15))
    assert rep.rho_limit == pytest.approx(0.75, abs=0.02)
    assert rep.predicted == pytest.approx(0.75)
    assert rep.period == 2


def test_local_escape_nonperiodic_rows_stay_in_band(bern):
    rep = local_escape_experiment(bern, sqrt2_minus_1_code(), range(2, 15))
    assert rep.theta_analytic is None and rep.predicted == 1.0
    tail = [r.ratio for r in rep.rows if r.n >= 8]
    assert all(0.85 < v < 1.05 for v in tail)
    assert abs(rep.rows[-1].ratio - 1) < 0.01


def test_theta_guard(parry):
    rep = local_escape_experiment(parry, X0, range(2, 10))
    assert THETA_GE_HALF in rep.warnings
    assert rep.predicted is None


def test_iterate_clears_the_guard(parry):
    assert suggest_iterate_power(1 / PHI, 1) == 2
    rep = local_escape_iterate(parry, X0, range(2, 12))
    assert rep.iterate_power == 2
    assert rep.theta_analytic == pytest.approx(1 / PHI**2, abs=1e-12)
    assert THETA_GE_HALF not in rep.warnings
    assert rep.rho_limit == pytest.approx(1 - 1 / PHI**2, abs=0.03)


def test_report_serialisation(bern):
    rep = local_escape_experiment(bern, X01, range(2, 6), hitting=True)
    data = json.loads(json.dumps(rep.to_json()))
    assert [r["n"] for r in data["rows"]] == [2, 3, 4, 5]
    lines = rep.to_csv().splitlines()
    assert lines[0].startswith("n,mu,rho,ratio")
    assert len(lines) == 5


def test_parallel_rows_match_serial(parry):
    a = local_escape_experiment(parry, X01, range(2, 10), workers=1)
    b = local_escape_experiment(parry, X01, range(2, 10), workers=4)
    assert a.to_json() == b.to_json()


def test_user_holes_must_nest(bern):
    holes = {2: CylinderSet.cylinder(FULL, "00"), 3: CylinderSet.cylinder(FULL, "010")}
    with pytest.raises(PreconditionError, match=NONNESTED_HOLES):
        local_escape_experiment(bern, X0, [2, 3], holes=holes)
    good = {n: CylinderSet(FULL, n, [(0,) * n, (0,) * (n - 1) + (1,)]) for n in (3, 4, 5)}
    assert check_nested(X0, good) == [2, 3, 4]
    rep = local_escape_experiment(bern, X0, [3, 4, 5], holes=good)
    assert len(rep.rows) == 3


def test_code_too_short(bern):
    with pytest.raises(PreconditionError):
        local_escape_experiment(bern, PointCode.truncated("0101"), range(2, 8))


def test_geometric_extrapolation():
    vals = [0.5 + 0.3 * 0.6**n for n in range(6)]
    limit, q, fallback = geometric_extrapolate(vals)
    assert limit == pytest.approx(0.5, abs=1e-12) and q == pytest.approx(0.6) and not fallback
    limit, q, fallback = geometric_extrapolate([1, 2, 4])
    assert fallback and limit == 4


def test_fallback_warning_recorded(bern):
    holes = {n: CylinderSet.cylinder(FULL, (0,) * n) for n in (2, 3)}
    rep = local_escape_experiment(bern, X0, [2, 3], holes=holes)
    assert EXTRAPOLATION_FALLBACK in rep.warnings


def test_s_of_n():
    assert s_of_n(0.01) == 10
    assert s_of_n(1e-9) == 10**4
    assert s_of_n(0.5) == 1


def test_phi_examples(bern, parry):
    for k in range(1, 6):
        assert phi_coefficient(bern, 4, 4, k).value <= 1e-14
        assert phi_coefficient(bern, 3, 3, k, over="unions").value <= 1e-14
    assert phi_coefficient(parry, 3, 3, 0).value <= 1
    ks = list(range(1, 9))
    vals = [phi_coefficient(parry, 4, 4, k).value for k in ks]
    assert fit_decay_ratio(ks, vals) == pytest.approx(1 / PHI**2, abs=0.05)
    with pytest.raises(ResourceError):
        phi_coefficient(parry, 12, 12, 1, budget=100)
    with pytest.raises(DomainError):
        phi_coefficient(parry, 2, 2, 1, over="bogus")


def test_phi_cylinders_match_bruteforce(system):
    g, G, pi, P = system
    for k in (0, 1, 3):
        est = phi_coefficient(g, 3, 3, k).value
        brute = max(oracles.phi_bruteforce(pi, P, n, j, k) for n in (1, 2, 3) for j in (1, 2, 3))
        assert est == pytest.approx(brute, abs=1e-13)


def test_phi_union_sup_dominates_cylinders(system):
    g = system[0]
    for k in range(0, 5):
        assert phi_function(g)(k) >= phi_coefficient(g, 3, 3, k).value - 1e-13


def test_adapted_system_examples(bern, parry):
    holes = {n: CylinderSet.cylinder(FULL, (0,) * n) for n in range(2, 11)}
    diag = adapted_system_check(bern, X0, holes, J=0.5, k_max=3)
    assert diag.nested and diag.property5_max_error == 0.0
    holes = {n: CylinderSet.cylinder(GOLD, (0,) * n) for n in (8, 9, 10)}
    diag = adapted_system_check(parry, X0, holes, J=0.5, k_max=3)
    assert diag.property5_max_error <= 1e-9
    assert diag.property5_tuples > 0


@given(st.lists(st.integers(0, 1), min_size=1, max_size=4))
def test_gibbs_markov_equals_analytic_on_random_cycles(cycle):
    from escape_lab.battery import markov_chain

    g = markov_chain()
    x = PointCode.periodic(cycle)
    assert gibbs_markov_theta(g, x) == pytest.approx(extremal_index_analytic(g, x), abs=1e-12)
