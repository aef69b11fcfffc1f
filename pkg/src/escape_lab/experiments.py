"""Localized escape rates, extremal indices and mixing diagnostics."""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from .errors import DomainError, PreconditionError, ResourceError
from .escape import Hole, escape_rate_spectral, hitting_ratio
from .sft import (
    CylinderSet,
    PointCode,
    cylinder_of_point,
    minimal_period,
    outer_approx,
    periodic_intersection,
    set_period,
    shift_intersection,
)
from .thermo import GibbsData, cylinder_measure, ergodic_sum, gibbs_state, iterate_point, iterate_system, measure_of_set

THETA_GE_HALF = "THETA_GE_HALF"
NONNESTED_HOLES = "NONNESTED_HOLES"
EXTRAPOLATION_FALLBACK = "EXTRAPOLATION_FALLBACK"

S_CAP = 10**4


def _period_or_raise(x: PointCode) -> int:
    m = minimal_period(x)
    if m is None:
        raise DomainError("extremal index needs a periodic point")
    return m


def extremal_index_analytic(g: GibbsData, x: PointCode) -> float:
    """``exp(f^m(x) - m P(f))`` at a point of minimal period ``m``."""
    m = _period_or_raise(x)
    x = x.reduced()
    return math.exp(ergodic_sum(g.potential, x, m) - m * g.pressure)


def extremal_index_empirical(
    g: GibbsData, x: PointCode, n: int, m: int | None = None, U: CylinderSet | None = None
) -> float:
    """``mu(U_n and T^{-m} U_n) / mu(U_n)``, exact."""
    if m is None:
        m = _period_or_raise(x)
    if U is None:
        U = CylinderSet.cylinder(g.sft, cylinder_of_point(x, n))
    mu = measure_of_set(g, U)
    if mu <= 0:
        raise DomainError("hole has zero measure")
    return measure_of_set(g, periodic_intersection(g.sft, U, m, 1)) / mu


def jacobian(g: GibbsData, y: Sequence[int]) -> float:
    """``g(y) = d mu / d(mu o T)`` from the first ``L + 1`` symbols of ``y``."""
    L = g.state_length
    w = tuple(y[: L + 1])
    return cylinder_measure(g, w) / cylinder_measure(g, w[1:])


def gibbs_markov_theta(g: GibbsData, x: PointCode) -> float:
    """``g_m(x)``: the Jacobian multiplied along the periodic orbit."""
    m = _period_or_raise(x)
    x = x.reduced()
    L = g.state_length
    s = x.symbols(m + L + 1)
    return math.prod(jacobian(g, s[i : i + L + 1]) for i in range(m))


def geometric_extrapolate(values: Sequence[float]):
    """Three-point fit ``a_n = a + c q^n`` on the last three values.

    Returns ``(limit, q, fallback)``; when ``|q| >= 1`` (or the fit is
    undefined) the last value is returned and ``fallback`` is True.
    """
    if len(values) < 3:
        return float(values[-1]), math.nan, True
    a0, a1, a2 = (float(v) for v in values[-3:])
    d1, d2 = a1 - a0, a2 - a1
    if d1 == 0:
        return a2, 0.0, d2 != 0
    q = d2 / d1
    if not math.isfinite(q) or abs(q) >= 1:
        return a2, q, True
    return a2 + d2 * q / (1 - q), q, False


def s_of_n(mu: float) -> int:
    return max(1, min(int(math.floor(0.1 / mu)), S_CAP))


@dataclass
class EscapeRow:
    n: int
    mu: float
    rho: float
    ratio: float
    set_period: int
    theta_empirical: float | None = None
    hitting_s: int | None = None
    hitting_ratio: float | None = None


@dataclass
class EscapeReport:
    center: PointCode
    rows: list
    theta_analytic: float | None
    rho_limit: float
    extrapolation_q: float
    predicted: float | None
    period: int | None
    warnings: list = field(default_factory=list)
    iterate_power: int = 1
    label: str = ""

    @property
    def theta_empirical(self) -> list:
        return [(r.n, r.theta_empirical) for r in self.rows if r.theta_empirical is not None]

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "center": self.center.to_json(),
            "period": self.period,
            "iterate_power": self.iterate_power,
            "theta_analytic": self.theta_analytic,
            "rho_limit": self.rho_limit,
            "extrapolation_q": None if math.isnan(self.extrapolation_q) else self.extrapolation_q,
            "predicted": self.predicted,
            "warnings": list(self.warnings),
            "rows": [
                {
                    "n": r.n,
                    "mu": r.mu,
                    "rho": r.rho,
                    "ratio": r.ratio,
                    "set_period": r.set_period,
                    "theta_empirical": r.theta_empirical,
                    "hitting_s": r.hitting_s,
                    "hitting_ratio": r.hitting_ratio,
                }
                for r in self.rows
            ],
        }

    def to_csv(self) -> str:
        out = ["n,mu,rho,ratio,set_period,theta_empirical,hitting_s,hitting_ratio"]
        for r in self.rows:
            cells = [r.n, r.mu, r.rho, r.ratio, r.set_period, r.theta_empirical, r.hitting_s, r.hitting_ratio]
            out.append(",".join("" if c is None else repr(c) for c in cells))
        return "\n".join(out) + "\n"


def check_nested(x: PointCode, holes: Mapping[int, CylinderSet]) -> list:
    """Properties (1)-(3) of an adapted neighbourhood system, as booleans.

    Returns the contraction depths ``j(n)`` (largest ``j`` with
    ``U_n`` inside ``A_j(x)``); raises when nesting fails.
    """
    ns = sorted(holes)
    for n in ns:
        if holes[n].depth != n:
            raise PreconditionError(f"{NONNESTED_HOLES}: hole for n={n} has depth {holes[n].depth}")
        if x.depth >= n and cylinder_of_point(x, n) not in holes[n]:
            raise PreconditionError(f"{NONNESTED_HOLES}: hole for n={n} does not contain A_n(x)")
    for a, b in zip(ns, ns[1:]):
        if not holes[b].issubset(holes[a]):
            raise PreconditionError(f"{NONNESTED_HOLES}: U_{b} is not inside U_{a}")
    depths = []
    for n in ns:
        depth = n
        for gen in holes[n].generators:
            ref = x.symbols(len(gen))
            common = next((i for i, (p, q) in enumerate(zip(gen, ref)) if p != q), len(gen))
            depth = min(depth, common)
        depths.append(depth)
    return depths


def local_escape_experiment(
    g: GibbsData,
    x: PointCode,
    n_range: Sequence[int],
    holes: Mapping[int, CylinderSet] | None = None,
    hitting: bool = False,
    workers: int = 1,
    label: str = "",
) -> EscapeReport:
    """Exact table of ``rho_{U_n} / mu(U_n)`` along shrinking holes at ``x``.

    Holes default to the cylinders ``A_n(x)``. The limit is estimated by
    three-point geometric extrapolation of the ratio column.
    """
    n_range = sorted(set(int(n) for n in n_range))
    if not n_range:
        raise PreconditionError("empty n range")
    if x.depth < n_range[-1]:
        raise PreconditionError(f"point code has depth {x.depth} < {n_range[-1]}")
    x.validate(g.sft)
    if holes is None:
        holes = {n: CylinderSet.cylinder(g.sft, cylinder_of_point(x, n)) for n in n_range}
    else:
        holes = {n: holes[n] for n in n_range}
        check_nested(x, holes)
    m = minimal_period(x)
    warnings = []
    theta = None
    if m is not None:
        theta = extremal_index_analytic(g, x)
        if theta >= 0.5:
            warnings.append(THETA_GE_HALF)

    def row(n):
        U = holes[n]
        res = escape_rate_spectral(g, Hole(U))
        r = EscapeRow(n, res.mu_U, res.rho, res.rho / res.mu_U, set_period(g.sft, U))
        if m is not None:
            r.theta_empirical = extremal_index_empirical(g, x, n, m, U)
        if hitting:
            r.hitting_s = s_of_n(res.mu_U)
            r.hitting_ratio = hitting_ratio(g, Hole(U), r.hitting_s)
        return r

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            rows = list(pool.map(row, n_range))
    else:
        rows = [row(n) for n in n_range]
    limit, q, fallback = geometric_extrapolate([r.ratio for r in rows])
    if fallback:
        warnings.append(EXTRAPOLATION_FALLBACK)
    if m is None:
        predicted = 1.0
    elif theta < 0.5:
        predicted = 1.0 - theta
    else:
        predicted = None  # the conclusion is not asserted
    return EscapeReport(x, rows, theta, limit, q, predicted, m, warnings, label=label)


def suggest_iterate_power(theta: float, m: int) -> int:
    """Smallest ``p`` for which the extremal index of ``T^p`` at the point is below 1/2."""
    p = 1
    while theta ** (p // math.gcd(m, p)) >= 0.5:
        p += 1
        if p > 64:
            raise DomainError("no iterate below 1/2 within p <= 64")
    return p


def local_escape_iterate(
    g: GibbsData, x: PointCode, n_range: Sequence[int], p: int | None = None, **kwargs
) -> EscapeReport:
    """Rerun :func:`local_escape_experiment` for ``T^p`` in the ``p``-block coding."""
    m = _period_or_raise(x)
    if p is None:
        p = suggest_iterate_power(extremal_index_analytic(g, x), m)
    sft_p, f_p, blocks = iterate_system(g.sft, g.potential, p)
    g_p = gibbs_state(sft_p, f_p)
    report = local_escape_experiment(g_p, iterate_point(x, p, blocks), n_range, **kwargs)
    report.iterate_power = p
    return report


def theta_power_check(g: GibbsData, x: PointCode, n: int, u_max: int) -> list:
    """``(u, mu(U_{n,u}) / mu(U_n), theta**u)`` for ``u = 0..u_max``."""
    m = _period_or_raise(x)
    theta = extremal_index_analytic(g, x)
    U = CylinderSet.cylinder(g.sft, cylinder_of_point(x, n))
    mu = measure_of_set(g, U)
    return [
        (u, measure_of_set(g, periodic_intersection(g.sft, U, m, u)) / mu, theta**u) for u in range(u_max + 1)
    ]


def _state_law_after(g: GibbsData, a: tuple, k: int) -> np.ndarray:
    """Law of the ``L``-word state at offset ``len(a) + k`` given ``[a]``."""
    L = g.state_length
    S = len(g.states)
    n = len(a)
    start = np.zeros(S)
    if n >= L:
        start[g.index[a[-L:]]] = 1.0
        steps = k + L
    else:
        for s in g.sft.extensions(a, L):
            start[g.index[s]] = cylinder_measure(g, s)
        start /= start.sum()
        steps = k + n
    return start @ np.linalg.matrix_power(g.transition, steps)


def phi_function(g: GibbsData):
    """Exact left phi-mixing coefficient as a function of the gap ``k``.

    For a Markov measure the supremum over ``B`` is the total-variation
    distance between the conditional law of the state at the start of ``B``
    and the stationary law, and unions of ``A``-cylinders never exceed
    single cylinders; so the supremum is a finite maximum.
    """
    L = g.state_length
    pi = g.stationary
    short = [w for n in range(1, L) for w in g.sft.words(n)]

    @lru_cache(maxsize=None)
    def phi(k: int) -> float:
        if k < 0:
            return 1.0
        Pk = np.linalg.matrix_power(g.transition, k + L)
        best = float(0.5 * np.abs(Pk - pi[None, :]).sum(axis=1).max())
        for a in short:
            best = max(best, float(0.5 * np.abs(_state_law_after(g, a, k) - pi).sum()))
        return min(best, 1.0)

    return phi


@dataclass
class PhiEstimate:
    k: int
    value: float
    over: str
    spectral_ratio: float

    def to_json(self) -> dict:
        return {"k": self.k, "phi": self.value, "over": self.over, "spectral_ratio": self.spectral_ratio}


def phi_coefficient(
    g: GibbsData, n_max: int, j_max: int, k: int, over: str = "cylinders", budget: int = 10**7
) -> PhiEstimate:
    """Estimate of the left phi-mixing coefficient at gap ``k``.

    ``over="cylinders"`` takes the maximum over single ``n``-cylinders ``A``
    (``n <= n_max``) and single ``j``-cylinders ``B`` (``j <= j_max``), which
    is a lower bound for the coefficient; ``over="unions"`` returns the
    exact supremum over all of ``sigma(A^n)`` and all future events.
    The ratio ``|lambda_2| / lambda_1`` is reported alongside as the rate
    of the spectral upper bound.
    """
    ratio = g.second_eigenvalue_ratio()
    if over == "unions":
        return PhiEstimate(k, phi_function(g)(k), over, ratio)
    if over != "cylinders":
        raise DomainError("over must be 'cylinders' or 'unions'")
    sft = g.sft
    A_words = [w for n in range(1, n_max + 1) for w in sft.words(n)]
    B_words = [w for j in range(1, j_max + 1) for w in sft.words(j)]
    if len(A_words) * len(B_words) > budget:
        raise ResourceError(f"{len(A_words) * len(B_words)} cylinder pairs exceed the budget of {budget}")
    L = g.state_length
    S = len(g.states)
    pi = g.stationary
    # nu(B) = law @ weight_B, mu(B) = pi @ weight_B
    weights = np.zeros((len(B_words), S))
    for i, b in enumerate(B_words):
        if len(b) >= L:
            s = g.index[b[:L]]
            weights[i, s] = cylinder_measure(g, b) / pi[s]
        else:
            for s in sft.extensions(b, L):
                weights[i, g.index[s]] = 1.0
    mu_B = weights @ pi
    best = 0.0
    seen = set()
    for a in A_words:
        key = a[-L:] if len(a) >= L else a
        if key in seen:
            continue
        seen.add(key)
        law = _state_law_after(g, a, k)
        best = max(best, float(np.abs(weights @ law - mu_B).max()))
    return PhiEstimate(k, best, over, ratio)


def fit_decay_ratio(ks: Sequence[int], values: Sequence[float]) -> float:
    """``exp`` of the least-squares slope of ``log(value)`` against ``k``."""
    ks = np.asarray(ks, dtype=float)
    vals = np.asarray(values, dtype=float)
    keep = vals > 1e-300
    if keep.sum() < 2:
        return 0.0
    slope = np.polyfit(ks[keep], np.log(vals[keep]), 1)[0]
    return float(math.exp(slope))


@dataclass
class AdaptedDiagnostics:
    nested: bool
    contains_center: bool
    contraction_depths: list
    gamma_fits: dict
    property5_max_error: float | None
    property5_tuples: int

    def to_json(self) -> dict:
        return {
            "nested": self.nested,
            "contains_center": self.contains_center,
            "contraction_depths": self.contraction_depths,
            "gamma_fits": {str(n): v for n, v in self.gamma_fits.items()},
            "property5_max_error": self.property5_max_error,
            "property5_tuples": self.property5_tuples,
        }


def adapted_system_check(
    g: GibbsData,
    x: PointCode,
    holes: Mapping[int, CylinderSet],
    J: float = 0.5,
    K: float = 1.0,
    k_max: int = 3,
) -> AdaptedDiagnostics:
    """Check Properties (1)-(3) exactly and report (4)-(5) as diagnostics.

    Property (4) is summarised by a least-squares fit of
    ``log mu(U_n^j)`` against ``log j`` for ``j <= K n`` (the returned
    exponent is minus the slope). Property (5) is the maximum over index
    tuples ``0 = i_0 < ... < i_k <= J n`` (multiples of the period,
    ``k <= k_max``) of ``|mu(intersection) / mu(U_{n, i_k/m}) - 1|``.
    """
    depths = check_nested(x, holes)
    gamma = {}
    for n, U in sorted(holes.items()):
        js = list(range(1, max(2, int(K * n)) + 1))
        js = [j for j in js if j <= n]
        mus = [measure_of_set(g, outer_approx(g.sft, U, j, "left")) for j in js]
        if len(js) >= 2 and all(v > 0 for v in mus):
            gamma[n] = float(-np.polyfit(np.log(js), np.log(mus), 1)[0])
    m = minimal_period(x)
    worst = None
    count = 0
    if m is not None:
        worst = 0.0
        for n, U in sorted(holes.items()):
            mults = list(range(m, int(J * n) + 1, m))
            for size in range(1, min(k_max, len(mults)) + 1):
                for rest in itertools.combinations(mults, size):
                    offsets = (0,) + rest
                    inter = measure_of_set(g, shift_intersection(g.sft, U, offsets))
                    ref = measure_of_set(g, periodic_intersection(g.sft, U, m, rest[-1] // m))
                    worst = max(worst, abs(inter / ref - 1.0))
                    count += 1
    return AdaptedDiagnostics(True, True, depths, gamma, worst, count)
