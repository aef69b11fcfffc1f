"""Piecewise-linear expanding Markov maps of the unit interval.

Branch ``i`` acts on ``[a_i, a_{i+1})`` as ``T(x) = slope_i * x + offset_i``.
When every breakpoint, slope and offset is rational (ints, ``Fraction`` or
strings such as ``"1/3"``) all geometry is done in exact rational
arithmetic; otherwise floats are used with a small padding on
containment tests.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Sequence

import numpy as np

from .errors import DomainError, PreconditionError
from .escape import Hole, MC_CHUNK, SurvivalCurve, escape_rate_spectral, wilson_interval
from .experiments import THETA_GE_HALF
from .sft import CylinderSet, PointCode, Sft
from .thermo import GibbsData, Potential, cylinder_measure, gibbs_state

FLOAT_PAD = 1e-14


def _coerce(values, exact: bool):
    if exact:
        return tuple(Fraction(v) for v in values)
    return tuple(float(v) for v in values)


def _is_rational(v) -> bool:
    if isinstance(v, (bool, np.bool_)):
        return False
    if isinstance(v, (Rational, np.integer)):
        return True
    if isinstance(v, str):
        try:
            Fraction(v)
        except ValueError:
            return False
        return True
    return False


class Itinerary(tuple):
    """A word of cell indices; ``ties`` lists steps that landed on a breakpoint."""

    ties: tuple = ()

    def __new__(cls, symbols, ties=()):
        obj = super().__new__(cls, symbols)
        obj.ties = tuple(ties)
        return obj


class IntervalMarkovMap:
    """Piecewise-linear expanding Markov map ``T`` of ``[0, 1]``."""

    def __init__(self, breakpoints, slopes, offsets, circle: bool = False):
        raw = list(breakpoints) + list(slopes) + list(offsets)
        self.exact = all(_is_rational(v) for v in raw)
        self.breakpoints = _coerce(breakpoints, self.exact)
        self.slopes = _coerce(slopes, self.exact)
        self.offsets = _coerce(offsets, self.exact)
        self.circle = bool(circle)
        k = len(self.slopes)
        if len(self.breakpoints) != k + 1 or len(self.offsets) != k:
            raise DomainError("need k + 1 breakpoints and k slopes and offsets")
        if k < 1:
            raise DomainError("need at least one branch")
        a = self.breakpoints
        if a[0] != 0 or a[-1] != 1 or any(b <= c for c, b in zip(a, a[1:])):
            raise DomainError("breakpoints must increase from 0 to 1")
        if min(abs(s) for s in self.slopes) <= 1:
            raise DomainError("every branch must be expanding (|slope| > 1)")
        self._transition = self._markov_matrix()

    @classmethod
    def doubling(cls) -> "IntervalMarkovMap":
        return cls([0, Fraction(1, 2), 1], [2, 2], [0, -1], circle=True)

    @classmethod
    def full_branched(cls, breakpoints, circle: bool = False) -> "IntervalMarkovMap":
        """Increasing branches, each mapping its cell onto ``[0, 1]``."""
        exact = all(_is_rational(v) for v in breakpoints)
        a = _coerce(breakpoints, exact)
        slopes = [1 / (b - c) for c, b in zip(a, a[1:])]
        offsets = [-s * c for s, c in zip(slopes, a)]
        return cls(a, slopes, offsets, circle)

    @property
    def k(self) -> int:
        return len(self.slopes)

    def _close(self, u, v) -> bool:
        return u == v if self.exact else abs(u - v) <= 1e-12

    def branch_image(self, i: int) -> tuple:
        """Closed image interval ``(lo, hi)`` of branch ``i``."""
        a, b = self.breakpoints[i], self.breakpoints[i + 1]
        u = self.slopes[i] * a + self.offsets[i]
        v = self.slopes[i] * b + self.offsets[i]
        return (u, v) if u <= v else (v, u)

    def _markov_matrix(self) -> np.ndarray:
        G = np.zeros((self.k, self.k), dtype=np.int8)
        for i in range(self.k):
            lo, hi = self.branch_image(i)
            ends = []
            for e in (lo, hi):
                j = next((j for j, a in enumerate(self.breakpoints) if self._close(a, e)), None)
                if j is None:
                    raise DomainError(f"branch {i} image endpoint {e} is not a breakpoint: map is not Markov")
                ends.append(j)
            if ends[0] >= ends[1]:
                raise DomainError(f"branch {i} has a degenerate image")
            G[i, ends[0] : ends[1]] = 1
        return G

    @property
    def transition(self) -> np.ndarray:
        return self._transition.copy()

    def to_sft(self) -> tuple:
        """The coding shift and the potential ``-log|T'|`` (range 1)."""
        sft = Sft(self._transition)
        f = Potential.from_symbol_values(sft, [-math.log(abs(float(s))) for s in self.slopes])
        return sft, f

    def cell(self, x) -> tuple:
        """Index of the cell containing ``x`` and whether ``x`` is an interior breakpoint."""
        a = self.breakpoints
        j = bisect.bisect_right(a, x) - 1
        j = min(max(j, 0), self.k - 1)
        tie = 0 < j and x == a[j]
        return j, tie

    def __call__(self, x):
        j, _ = self.cell(x)
        y = self.slopes[j] * x + self.offsets[j]
        if self.exact:
            return min(max(y, Fraction(0)), Fraction(1))
        return min(max(y, 0.0), 1.0)

    def _num(self, x):
        if self.exact:
            return Fraction(x)
        return float(Fraction(x)) if isinstance(x, str) else float(x)

    def cylinder_interval(self, w: Sequence[int]) -> tuple:
        """Closure ``(lo, hi)`` of the set of points with itinerary prefix ``w``."""
        if not w:
            return self.breakpoints[0], self.breakpoints[-1]
        lo, hi = self.breakpoints[w[-1]], self.breakpoints[w[-1] + 1]
        for i in reversed(range(len(w) - 1)):
            s, c = self.slopes[w[i]], self.offsets[w[i]]
            if not self._transition[w[i], w[i + 1]]:
                raise DomainError(f"word {tuple(w)} is not admissible")
            u, v = (lo - c) / s, (hi - c) / s
            lo, hi = (u, v) if u <= v else (v, u)
        return lo, hi

    def deriv_product(self, x, m: int):
        """``|(T^m)'(x)|``; the orbit must avoid breakpoints."""
        x = self._num(x)
        out = 1
        for _ in range(m):
            j, tie = self.cell(x)
            if tie:
                raise DomainError("orbit hits a breakpoint")
            out *= abs(self.slopes[j])
            x = self(x)
        return float(out)

    def to_json(self) -> dict:
        conv = (lambda v: str(v)) if self.exact else float
        return {
            "breakpoints": [conv(v) for v in self.breakpoints],
            "slopes": [conv(v) for v in self.slopes],
            "offsets": [conv(v) for v in self.offsets],
            "circle": self.circle,
        }

    @classmethod
    def from_json(cls, data: dict) -> "IntervalMarkovMap":
        try:
            return cls(data["breakpoints"], data["slopes"], data["offsets"], data.get("circle", False))
        except KeyError as exc:
            raise DomainError(f"map spec is missing field {exc.args[0]!r}") from None

    def __repr__(self):
        return f"IntervalMarkovMap({self.to_json()})"


def to_sft(T: IntervalMarkovMap) -> tuple:
    return T.to_sft()


def itinerary(T: IntervalMarkovMap, x, n: int) -> Itinerary:
    """First ``n`` cell indices along the orbit of ``x``.

    A point sitting exactly on an interior breakpoint is assigned to the
    cell on its right; such steps are recorded in ``.ties``.
    """
    x = T._num(x)
    out, ties = [], []
    for t in range(n):
        j, tie = T.cell(x)
        out.append(j)
        if tie:
            ties.append(t)
        x = T(x)
    return Itinerary(out, ties)


def point_code(T: IntervalMarkovMap, x, n: int) -> PointCode:
    """Symbolic code of ``x``; periodic when an exact orbit repeats within ``n`` steps."""
    x = T._num(x)
    seen, syms = {}, []
    for t in range(n):
        if T.exact:
            if x in seen:
                s = seen[x]
                return PointCode(tuple(syms[:s]), tuple(syms[s:]))
            seen[x] = t
        syms.append(T.cell(x)[0])
        x = T(x)
    return PointCode.truncated(syms)


def point_of_itinerary(T: IntervalMarkovMap, w: Sequence[int]) -> tuple:
    return T.cylinder_interval(w)


def deriv_product(T: IntervalMarkovMap, x, m: int) -> float:
    return T.deriv_product(x, m)


def _ball_arcs(T: IntervalMarkovMap, x, r) -> list:
    """``B_r(x)`` as a list of closed arcs inside ``[0, 1]``."""
    lo, hi = x - r, x + r
    if T.circle:
        if hi - lo >= 1:
            return [(0 * x, 0 * x + 1)]
        arcs = []
        if lo < 0:
            arcs += [(0 * x, hi), (lo + 1, 0 * x + 1)]
        elif hi > 1:
            arcs += [(0 * x, hi - 1), (lo, 0 * x + 1)]
        else:
            arcs.append((lo, hi))
        return arcs
    return [(max(lo, 0 * x), min(hi, 0 * x + 1))]


@dataclass
class BallHole:
    """Cylinder brackets ``U_minus <= B_r(x) <= U_plus`` at depth ``n``."""

    center: object
    radius: object
    depth: int
    inner: CylinderSet
    outer: CylinderSet
    inner_length: float
    outer_length: float


def _classify(T: IntervalMarkovMap, arcs: list, lo, hi) -> int:
    """2 if ``[lo, hi]`` lies in the ball, 1 if its interior meets it, 0 otherwise."""
    pad = 0 if T.exact else FLOAT_PAD
    inside = any(a - pad <= lo and hi <= b + pad for a, b in arcs)
    if inside:
        return 2
    meets = any(lo < b - pad and hi > a + pad for a, b in arcs)
    return 1 if meets else 0


def depth_for_radius(T: IntervalMarkovMap, r, w: float = 1.5) -> int:
    """Smallest ``n`` with every ``n``-cylinder no wider than ``r**w``."""
    widest = max(float(b - a) for a, b in zip(T.breakpoints, T.breakpoints[1:]))
    contraction = 1.0 / min(abs(float(s)) for s in T.slopes)
    target = float(r) ** w
    n = 1
    while widest * contraction ** (n - 1) > target:
        n += 1
    return n


def ball_brackets(T: IntervalMarkovMap, x, r, n: int | None = None, w: float = 1.5) -> BallHole:
    """Largest and smallest unions of ``n``-cylinders around ``B_r(x)``.

    Cells straddling the ball boundary are refined down to depth ``n``;
    cells inside the ball are kept as short generators.
    """
    x, r = T._num(x), T._num(r)
    if r <= 0:
        raise DomainError("radius must be positive")
    if not 0 <= x <= 1:
        raise DomainError("center must lie in [0, 1]")
    if n is None:
        n = depth_for_radius(T, r, w)
    sft = Sft(T._transition)
    arcs = _ball_arcs(T, x, r)
    inner, outer = [], []
    inner_len, outer_len = [], []
    stack = [()]
    while stack:
        word = stack.pop()
        lo, hi = T.cylinder_interval(word)
        kind = _classify(T, arcs, lo, hi)
        if kind == 0:
            continue
        if kind == 2:
            inner.append(word)
            outer.append(word)
            inner_len.append(hi - lo)
            outer_len.append(hi - lo)
        elif len(word) == n:
            outer.append(word)
            outer_len.append(hi - lo)
        else:
            succ = sft.successors(word[-1]) if word else range(T.k)
            stack.extend(word + (b,) for b in succ)
    if not inner:
        suggestion = depth_for_radius(T, r, 1.0) + 2
        raise PreconditionError(f"no {n}-cylinder fits inside the ball; try n >= {max(suggestion, n + 1)}")
    return BallHole(
        x,
        r,
        n,
        CylinderSet(sft, n, inner),
        CylinderSet(sft, n, outer),
        float(sum(inner_len)),
        float(sum(outer_len)),
    )


def acim_density(T: IntervalMarkovMap, g: GibbsData | None = None) -> np.ndarray:
    """Density of the invariant measure, constant on each cell."""
    if g is None:
        g = gibbs_state(*T.to_sft())
    widths = np.array([float(b - a) for a, b in zip(T.breakpoints, T.breakpoints[1:])])
    mass = np.array([cylinder_measure(g, (j,)) for j in range(T.k)])
    h = mass / widths
    if np.any(h <= 0):
        raise DomainError("invariant density vanishes on a cell")
    return h


def acim_measure(T: IntervalMarkovMap, intervals, density: np.ndarray) -> float:
    """Invariant measure of a union of disjoint intervals."""
    a = [float(v) for v in T.breakpoints]
    total = 0.0
    for lo, hi in intervals:
        lo, hi = float(lo), float(hi)
        for j in range(T.k):
            overlap = min(hi, a[j + 1]) - max(lo, a[j])
            if overlap > 0:
                total += density[j] * overlap
    return total


def _affine_words(T: IntervalMarkovMap, m: int):
    """``(interval, slope, offset)`` of ``T^m`` on each admissible ``m``-cylinder."""
    sft = Sft(T._transition)
    for w in sft.words(m):
        S, C = 1, 0
        for j in w:
            S, C = T.slopes[j] * S, T.slopes[j] * C + T.offsets[j]
        yield T.cylinder_interval(w), S, C


def ball_return_ratio(T: IntervalMarkovMap, x, r, m: int, g: GibbsData | None = None) -> float:
    """``mu(T^{-m} B_r(x) & B_r(x)) / mu(B_r(x))`` by exact preimage intervals."""
    x, r = T._num(x), T._num(r)
    h = acim_density(T, g)
    arcs = _ball_arcs(T, x, r)
    pieces = []
    for (lo, hi), S, C in _affine_words(T, m):
        for a, b in arcs:
            u, v = (a - C) / S, (b - C) / S
            u, v = min(u, v), max(u, v)
            for p, q in arcs:
                L, R = max(lo, u, p), min(hi, v, q)
                if L < R:
                    pieces.append((L, R))
    return acim_measure(T, pieces, h) / acim_measure(T, arcs, h)


@dataclass
class BallRow:
    r: float
    n: int
    mu_lo: float
    mu_hi: float
    rho_lo: float
    rho_hi: float

    @property
    def ratio_lo(self) -> float:
        return self.rho_lo / self.mu_hi

    @property
    def ratio_hi(self) -> float:
        return self.rho_hi / self.mu_lo


@dataclass
class BallEscapeReport:
    center: object
    rows: list
    theta: float | None
    predicted: float | None
    period: int | None
    warnings: list = field(default_factory=list)

    @property
    def final_bracket(self) -> tuple:
        last = self.rows[-1]
        return last.ratio_lo, last.ratio_hi

    def nested(self, tol: float = 0.0) -> bool:
        """Whether each ratio bracket lies inside the previous one."""
        return all(
            b.ratio_lo >= a.ratio_lo - tol and b.ratio_hi <= a.ratio_hi + tol for a, b in zip(self.rows, self.rows[1:])
        )

    def to_json(self) -> dict:
        return {
            "center": str(self.center),
            "period": self.period,
            "theta": self.theta,
            "predicted": self.predicted,
            "warnings": list(self.warnings),
            "rows": [
                {
                    "r": row.r,
                    "n": row.n,
                    "mu_lo": row.mu_lo,
                    "mu_hi": row.mu_hi,
                    "rho_lo": row.rho_lo,
                    "rho_hi": row.rho_hi,
                    "ratio_lo": row.ratio_lo,
                    "ratio_hi": row.ratio_hi,
                }
                for row in self.rows
            ],
        }

    def to_csv(self) -> str:
        out = ["r,n,mu_lo,mu_hi,rho_lo,rho_hi,ratio_lo,ratio_hi"]
        for row in self.rows:
            cells = [row.r, row.n, row.mu_lo, row.mu_hi, row.rho_lo, row.rho_hi, row.ratio_lo, row.ratio_hi]
            out.append(",".join(repr(c) for c in cells))
        return "\n".join(out) + "\n"


def orbit_period(T: IntervalMarkovMap, x, max_period: int = 64) -> int | None:
    """Minimal period of ``x`` (exact maps only); ``None`` if not periodic."""
    if not T.exact:
        return None
    x0 = T._num(x)
    y = x0
    for m in range(1, max_period + 1):
        y = T(y)
        if y == x0:
            return m
    return None


def ball_escape_experiment(
    T: IntervalMarkovMap, x, r_sequence: Sequence, w: float = 1.5, g: GibbsData | None = None
) -> BallEscapeReport:
    """Bracketed ``rho_{B_r(x)} / mu(B_r(x))`` along a decreasing radius sequence.

    For each ``r`` the ball is squeezed between cylinder unions ``U-`` and
    ``U+`` at depth ``n(r)``; monotonicity of escape rates in the hole gives
    ``rho(U-) / mu(U+) <= rho(B) / mu(B) <= rho(U+) / mu(U-)``.
    """
    radii = [T._num(r) for r in r_sequence]
    if any(b >= a for a, b in zip(radii, radii[1:])):
        raise PreconditionError("radius sequence must be strictly decreasing")
    if g is None:
        g = gibbs_state(*T.to_sft())
    rows = []
    for r in radii:
        bh = ball_brackets(T, x, r, w=w)
        lo = escape_rate_spectral(g, Hole(bh.inner))
        hi = lo if bh.inner == bh.outer else escape_rate_spectral(g, Hole(bh.outer))
        rows.append(BallRow(float(r), bh.depth, lo.mu_U, hi.mu_U, lo.rho, hi.rho))
    m = orbit_period(T, x)
    warnings = []
    theta = predicted = None
    if m is not None:
        theta = 1.0 / T.deriv_product(x, m)
        if theta >= 0.5:
            warnings.append(THETA_GE_HALF)
        else:
            predicted = 1.0 - theta
    else:
        predicted = 1.0
    return BallEscapeReport(T._num(x), rows, theta, predicted, m, warnings)


def _sample_acim(T: IntervalMarkovMap, h: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    a = np.array([float(v) for v in T.breakpoints])
    widths = np.diff(a)
    mass = h * widths
    cells = rng.choice(T.k, size=count, p=mass / mass.sum())
    return a[cells] + widths[cells] * rng.random(count)


def _float_step(T: IntervalMarkovMap, x: np.ndarray) -> np.ndarray:
    a = np.array([float(v) for v in T.breakpoints])
    s = np.array([float(v) for v in T.slopes])
    c = np.array([float(v) for v in T.offsets])
    j = np.clip(np.searchsorted(a, x, side="right") - 1, 0, T.k - 1)
    return np.clip(s[j] * x + c[j], 0.0, np.nextafter(1.0, 0.0))


def survival_mc_interval(
    T: IntervalMarkovMap, intervals, horizon: int, N: int, seed: int = 0
) -> SurvivalCurve:
    """Monte Carlo ``P(tau > t)`` by iterating ``T`` on floats.

    Initial points are drawn from the invariant density; the hole is a
    union of half-open intervals. Floating-point orbits lose about
    ``log2|T'|`` bits per step, so keep ``horizon`` well below 50.
    """
    h = acim_density(T)
    holes = [(float(lo), float(hi)) for lo, hi in intervals]
    seeds = np.random.SeedSequence(seed).spawn((N + MC_CHUNK - 1) // MC_CHUNK)
    alive = np.zeros(horizon + 1, dtype=np.int64)
    for i, ss in enumerate(seeds):
        count = min(MC_CHUNK, N - i * MC_CHUNK)
        x = _sample_acim(T, h, count, np.random.default_rng(ss))
        live = np.ones(count, dtype=bool)
        alive[0] += count
        for t in range(1, horizon + 1):
            x = _float_step(T, x)
            for lo, hi in holes:
                live &= ~((x >= lo) & (x < hi))
            alive[t] += live.sum()
    p = alive / N
    lo, hi = wilson_interval(alive, N)
    return SurvivalCurve(np.arange(horizon + 1), p, "mc-interval", lo, hi)


def cylinder_intervals(T: IntervalMarkovMap, U: CylinderSet) -> list:
    return [T.cylinder_interval(wd) for wd in sorted(U.generators)]
