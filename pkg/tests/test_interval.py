import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from escape_lab.battery import doubling_map, slopes_3_3half_map
from escape_lab.errors import DomainError, PreconditionError
from escape_lab.escape import Hole, survival_exact
from escape_lab.interval import (
    IntervalMarkovMap,
    acim_density,
    ball_brackets,
    ball_escape_experiment,
    ball_return_ratio,
    cylinder_intervals,
    deriv_product,
    itinerary,
    point_code,
    point_of_itinerary,
    survival_mc_interval,
)
from escape_lab.sft import CylinderSet, PointCode
from escape_lab.thermo import cylinder_measure, gibbs_state, pressure

D = doubling_map()
S = slopes_3_3half_map()


def three_branch():
    # cells [0,1/4), [1/4,1/2), [1/2,1); the middle branch covers only the first two
    return IntervalMarkovMap([0, F(1, 4), F(1, 2), 1], [4, 2, 2], [0, F(-1, 2), -1])


def test_to_sft_examples():
    sft, f = D.to_sft()
    assert sft.transition.tolist() == [[1, 1], [1, 1]]
    assert f((0,)) == pytest.approx(-math.log(2))
    assert pressure(sft, f) == pytest.approx(0, abs=1e-13)
    sft, f = S.to_sft()
    assert sft.transition.tolist() == [[1, 1], [1, 1]]
    assert (f((0,)), f((1,))) == pytest.approx((-math.log(3), -math.log(1.5)))
    assert pressure(sft, f) == pytest.approx(0, abs=1e-13)
    G = three_branch().transition
    assert G.tolist() == [[1, 1, 1], [1, 1, 0], [1, 1, 1]]
    assert pressure(*three_branch().to_sft()) == pytest.approx(0, abs=1e-12)


def test_validation():
    with pytest.raises(DomainError, match="Markov"):
        IntervalMarkovMap([0, F(1, 2), 1], [2, 2], [F(1, 10), -1])
    with pytest.raises(DomainError, match="expanding"):
        IntervalMarkovMap([0, 1], [1], [0])
    with pytest.raises(DomainError):
        IntervalMarkovMap([0, F(1, 2)], [2], [0])
    with pytest.raises(DomainError):
        IntervalMarkovMap.from_json({"breakpoints": [0, 1], "slopes": [2]})


def test_float_maps_are_supported():
    T = IntervalMarkovMap([0.0, 0.5, 1.0], [2.0, 2.0], [0.0, -1.0])
    assert not T.exact
    assert itinerary(T, 1 / 3, 6) == (0, 1, 0, 1, 0, 1)


def test_itinerary_examples():
    assert itinerary(D, F(1, 3), 6) == (0, 1, 0, 1, 0, 1)
    assert itinerary(D, 0, 8) == (0,) * 8
    assert itinerary(S, 0, 5) == (0,) * 5
    lo, hi = point_of_itinerary(S, (0,) * 6)
    assert (lo, hi) == (0, F(1, 3**6))
    assert point_of_itinerary(D, (0, 1, 1)) == (F(3, 8), F(1, 2))


def test_breakpoint_ties_go_right_and_are_flagged():
    it = itinerary(D, F(1, 2), 3)
    assert tuple(it) == (1, 0, 0)
    assert it.ties == (0,)


def test_point_code_detects_cycles():
    assert point_code(D, F(1, 3), 10) == PointCode.periodic("01")
    assert point_code(D, F(1, 7), 10) == PointCode.periodic("001")
    assert point_code(D, F(3, 4), 10) == PointCode((1, 1), (0,))


def test_deriv_product_examples():
    assert deriv_product(D, F(1, 5), 3) == 8
    assert deriv_product(S, 0, 2) == 9
    # 1/7 -> 3/7 -> 1/7 is the orbit coded 01
    assert point_code(S, F(1, 7), 4) == PointCode.periodic("01")
    assert deriv_product(S, F(1, 7), 2) == pytest.approx(4.5)
    with pytest.raises(DomainError):
        deriv_product(D, F(1, 4), 3)


def test_cylinder_lengths_are_conformal():
    for T in (D, S, three_branch()):
        sft, f = T.to_sft()
        for w in sft.words(4):
            lo, hi = T.cylinder_interval(w)
            expected = math.exp(sum(f(w[i : i + 1]) for i in range(3))) * float(
                T.breakpoints[w[-1] + 1] - T.breakpoints[w[-1]]
            )
            assert float(hi - lo) == pytest.approx(expected, rel=1e-12)


def test_acim_masses_match_gibbs_cylinders():
    T = three_branch()
    sft, f = T.to_sft()
    g = gibbs_state(sft, f)
    h = acim_density(T, g)
    for w in sft.words(4):
        lo, hi = T.cylinder_interval(w)
        j = next(j for j in range(T.k) if T.breakpoints[j] <= lo < T.breakpoints[j + 1])
        assert h[j] * float(hi - lo) == pytest.approx(cylinder_measure(g, w), rel=1e-10)


def test_ball_bracket_examples():
    bh = ball_brackets(D, 0, F(1, 4), 4)
    assert bh.inner_length <= 0.5 <= bh.outer_length
    assert bh.outer_length - bh.inner_length <= 2 * 2**-4
    bh = ball_brackets(D, 0, F(1, 8), 3)
    assert bh.inner == bh.outer
    bh = ball_brackets(D, F(1, 3), 0.05, 8)
    assert bh.outer_length - bh.inner_length <= 2 * 2**-8 + 1e-15
    with pytest.raises(PreconditionError, match="try n"):
        ball_brackets(D, F(1, 3), F(1, 100), 3)


@given(st.fractions(0, 1, max_denominator=97), st.fractions(F(1, 200), F(1, 5), max_denominator=211))
def test_ball_brackets_sandwich_the_ball(x, r):
    for T in (D, S):
        n = 10 if T is D else 14
        try:
            bh = ball_brackets(T, x, r, n)
        except PreconditionError:
            continue
        ball = [(x - r, x + r)]
        if T.circle:
            ball = [(x - r + s, x + r + s) for s in (-1, 0, 1)]
        for lo, hi in cylinder_intervals(T, bh.inner):
            assert any(a <= lo and hi <= b for a, b in ball)
        covered = sorted(cylinder_intervals(T, bh.outer))
        # every point of the ball inside [0, 1] is in some outer interval
        pts = [x + r * F(i, 7) for i in range(-7, 8)]
        for p in pts:
            if T.circle:
                p = p % 1
            elif not 0 <= p <= 1:
                continue
            assert any(lo <= p <= hi for lo, hi in covered)
        assert bh.inner.issubset(bh.outer)


def test_bracket_rates_are_ordered():
    rep = ball_escape_experiment(D, F(1, 3), [F(1, 2**k) for k in range(3, 8)])
    for row in rep.rows:
        assert row.rho_lo <= row.rho_hi + 1e-15
        assert row.mu_lo <= row.mu_hi
        assert row.ratio_lo <= row.ratio_hi + 1e-12


def test_ball_escape_report_fields():
    rep = ball_escape_experiment(S, 0, [F(1, 8), F(1, 16)])
    assert rep.period == 1 and rep.theta == pytest.approx(1 / 3)
    assert rep.predicted == pytest.approx(2 / 3)
    assert rep.to_csv().splitlines()[0] == "r,n,mu_lo,mu_hi,rho_lo,rho_hi,ratio_lo,ratio_hi"
    with pytest.raises(PreconditionError):
        ball_escape_experiment(S, 0, [F(1, 16), F(1, 8)])


@pytest.mark.parametrize("T,x,m", [(D, 0, 1), (D, F(1, 3), 2), (S, 0, 1)])
def test_ball_theta_matches_derivative(T, x, m):
    target = 1 / deriv_product(T, x, m)
    for r in (F(1, 100), F(1, 1000), F(1, 10000)):
        assert ball_return_ratio(T, x, r, m) == pytest.approx(target, abs=1e-12)


def test_interval_mc_matches_sft_for_markov_hole():
    sft, f = S.to_sft()
    g = gibbs_state(sft, f)
    U = CylinderSet(sft, 3, [(0, 1, 1), (1, 0, 0)])
    exact = survival_exact(g, Hole(U), 20).values
    mc = survival_mc_interval(S, cylinder_intervals(S, U), 20, 100_000, seed=4)
    inside = (exact >= mc.ci_low - 1e-12) & (exact <= mc.ci_high + 1e-12)
    assert inside.mean() >= 0.9


def test_interval_mc_cell_frequencies_within_4_sigma():
    T = three_branch()
    g = gibbs_state(*T.to_sft())
    h = acim_density(T, g)
    rng = np.random.default_rng(0)
    from escape_lab.interval import _float_step, _sample_acim

    x = _sample_acim(T, h, 200_000, rng)
    for _ in range(10):
        x = _float_step(T, x)
    a = np.array([float(v) for v in T.breakpoints])
    for j in range(T.k):
        p = cylinder_measure(g, (j,))
        freq = np.mean((x >= a[j]) & (x < a[j + 1]))
        assert abs(freq - p) <= 4 * math.sqrt(p * (1 - p) / len(x))


def test_map_json_round_trip():
    data = S.to_json()
    assert data["slopes"] == ["3", "3/2"]
    T = IntervalMarkovMap.from_json(data)
    assert T.slopes == S.slopes and T.offsets == S.offsets and T.circle == S.circle
