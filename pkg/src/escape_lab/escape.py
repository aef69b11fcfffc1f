"""Open systems: survival probabilities, escape rates and hitting diagnostics.

The open operator is built on an Aho-Corasick automaton over the hole's
generator words, read backwards in time. Reading ``x_N, x_{N-1}, ..., x_0``
under the time-reversed Gibbs chain, a generator occurring at offset ``j``
is completed exactly when ``x_j`` is read, so "the orbit enters ``U`` at
time ``j``" becomes "the automaton reaches a terminal node on the read of
``x_j``". Automaton nodes of depth at least the chain memory ``L`` carry
the Markov state, which makes the killed transition matrix ``Q`` an exact
representation of the surviving dynamics:

* ``P(tau_U > t) = v Q^t 1`` with ``v`` the law after ``n - 1`` unkilled
  reads (stationarity moves the window range ``1..t`` to ``0..t-1``);
* ``rho_U = -log spec(Q) = P(f) - log lambda_open``.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, NamedTuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph
import scipy.sparse.linalg as spla

from .errors import DomainError, PreconditionError, ResourceError
from .sft import CylinderSet, PointCode, Sft, cylinder_of_point, minimal_period
from .thermo import GibbsData, MarkovSampler, cylinder_measure, measure_of_set

log = logging.getLogger(__name__)

DEFAULT_STATE_CAP = 2**22
WILSON_Z = 1.959963984540054
MC_CHUNK = 1 << 14


@dataclass(frozen=True)
class Hole:
    """A hole ``U`` in ``sigma(A^n)``, optionally centred at a point."""

    set: CylinderSet
    center: PointCode | None = None
    period_m: int | None = None
    label: str = ""

    def __post_init__(self):
        if self.center is not None:
            n = self.set.depth
            if self.center.depth >= n and cylinder_of_point(self.center, n) not in self.set:
                raise DomainError("hole does not contain the cylinder of its centre")
            m = minimal_period(self.center)
            if self.period_m is None:
                object.__setattr__(self, "period_m", m)
            elif self.period_m != m:
                raise DomainError(f"period_m={self.period_m} but the centre has minimal period {m}")

    @classmethod
    def cylinder(cls, sft: Sft, x: PointCode, n: int, label: str = "") -> "Hole":
        """The cylinder hole ``A_n(x)``."""
        return cls(CylinderSet.cylinder(sft, cylinder_of_point(x, n)), x, label=label or f"A_{n}(x)")

    @property
    def depth(self) -> int:
        return self.set.depth


def _reverse_steps(g: GibbsData):
    """Time-reversed one-symbol steps on ``L``-word states.

    Returns ``(prob, target)`` arrays of shape ``(S, k)``: reading the
    symbol ``a`` before state ``v`` leads to ``(a,) + v[:-1]`` with
    probability ``mu[a v] / mu[v]``.
    """
    cached = g.__dict__.get("_reverse_steps")
    if cached is not None:
        return cached
    k = g.sft.alphabet_size
    S = len(g.states)
    prob = np.zeros((S, k))
    target = np.full((S, k), -1, dtype=np.int64)
    pi = g.stationary
    for j, v in enumerate(g.states):
        for a in range(k):
            if g.sft.allowed(a, v[0]):
                i = g.index[((a,) + v)[: len(v)]]
                prob[j, a] = pi[i] * g.transition[i, j] / pi[j]
                target[j, a] = i
    g.__dict__["_reverse_steps"] = (prob, target)
    return prob, target


class _Automaton(NamedTuple):
    goto: np.ndarray
    terminal: np.ndarray
    depth: np.ndarray
    labels: list


def _build_automaton(patterns, contexts, k: int, cap: int) -> _Automaton:
    children: list[dict] = [{}]
    labels = [()]
    terminal = [False]
    for words, mark in ((patterns, True), (contexts, False)):
        for w in words:
            s = 0
            for a in w:
                nxt = children[s].get(a)
                if nxt is None:
                    nxt = len(labels)
                    children[s][a] = nxt
                    children.append({})
                    labels.append(labels[s] + (a,))
                    terminal.append(False)
                    if len(labels) > cap:
                        raise ResourceError(
                            f"open operator exceeds {cap} states; use a shallower hole or fewer words"
                        )
                s = nxt
            if mark:
                terminal[s] = True
    N = len(labels)
    goto = np.zeros((N, k), dtype=np.int64)
    fail = np.zeros(N, dtype=np.int64)
    term = np.array(terminal, dtype=bool)
    queue = deque([0])
    while queue:
        s = queue.popleft()
        for a in range(k):
            c = children[s].get(a)
            if c is None:
                goto[s, a] = goto[fail[s], a] if s else 0
            else:
                fail[c] = goto[fail[s], a] if s else 0
                term[c] |= term[fail[c]]
                goto[s, a] = c
                queue.append(c)
    depth = np.array([len(l) for l in labels], dtype=np.int64)
    return _Automaton(goto, term, depth, labels)


@dataclass(eq=False)
class OpenOperator:
    """Killed transfer operator of a hole, normalised by the closed eigenvalue.

    ``step`` is the stochastic (unkilled) reversed-reading matrix on
    automaton nodes, ``masked`` the same matrix with transitions into
    terminal (hole) nodes removed, and ``initial`` the node law after the
    unkilled warm-up reads.
    """

    gibbs: GibbsData
    hole: Hole
    step: sp.csr_matrix
    masked: sp.csr_matrix
    killed: np.ndarray
    initial: np.ndarray
    absorbing: bool = False
    warnings: list = field(default_factory=list)

    @property
    def state_count(self) -> int:
        return self.step.shape[0]

    @property
    def lambda_closed(self) -> float:
        return self.gibbs.lam

    @cached_property
    def spectrum(self) -> tuple:
        """``(radius, second_modulus, degenerate)`` of the masked matrix."""
        if self.absorbing:
            return 0.0, 0.0, False
        Q = self.masked
        d = Q.shape[0]
        if d <= 800:
            ev = np.linalg.eigvals(Q.toarray())
        else:
            try:
                ev = spla.eigs(Q, k=min(6, d - 2), which="LM", return_eigenvectors=False, maxiter=20 * d)
            except spla.ArpackNoConvergence:
                ev = np.array([_power_radius(Q)])
        mods = np.sort(np.abs(ev))[::-1]
        radius = float(mods[0])
        second = float(mods[1]) if len(mods) > 1 else 0.0
        degenerate = radius > 0 and second >= radius * (1 - 1e-9)
        if degenerate:
            self.warnings.append("DEGENERATE_SPECTRUM")
            log.info("open operator has a non-simple dominant eigenvalue modulus; t-slopes converge slowly")
        return radius, second, degenerate

    @property
    def radius(self) -> float:
        return self.spectrum[0]

    @property
    def lambda_open(self) -> float:
        return self.gibbs.lam * self.radius

    @cached_property
    def reducible(self) -> bool:
        if self.absorbing:
            return False
        ncomp, labels = csgraph.connected_components(self.masked, directed=True, connection="strong")
        Qd = self.masked
        sizes = np.bincount(labels, minlength=ncomp)
        loops = np.zeros(ncomp, dtype=bool)
        diag = Qd.diagonal() > 0
        np.logical_or.at(loops, labels, diag)
        nontrivial = int(((sizes > 1) | loops).sum())
        if nontrivial > 1:
            self.warnings.append("REDUCIBLE_MASK")
        return nontrivial > 1


def _power_radius(Q, iters=200000, tol=1e-15):
    v = np.full(Q.shape[0], 1.0 / Q.shape[0])
    r = 0.0
    QT = Q.T.tocsr()
    for _ in range(iters):
        w = QT @ v
        s = w.sum()
        if s == 0:
            return 0.0
        if abs(s - r) < tol * s:
            return float(s)
        r, v = s, w / s
    return float(r)


def open_operator(g: GibbsData, hole: Hole, state_cap: int = DEFAULT_STATE_CAP) -> OpenOperator:
    U = hole.set
    if U.sft != g.sft:
        raise DomainError("hole and Gibbs state live on different shifts")
    L = g.state_length
    k = g.sft.alphabet_size
    S = len(g.states)
    if () in U.generators:
        return OpenOperator(
            g, hole, sp.csr_matrix((1, 1)), sp.csr_matrix((1, 1)), np.ones(1, bool), np.ones(1), absorbing=True
        )
    patterns = [tuple(reversed(w)) for w in U.generators]
    contexts = [tuple(reversed(s)) for s in g.states]
    auto = _build_automaton(patterns, contexts, k, state_cap)
    live = np.flatnonzero(auto.depth >= L)
    local = np.full(len(auto.labels), -1, dtype=np.int64)
    local[live] = np.arange(len(live))
    prob, target = _reverse_steps(g)
    rows, cols, vals = [], [], []
    for node in live:
        state = g.index[tuple(reversed(auto.labels[node][-L:]))]
        for a in range(k):
            p = prob[state, a]
            if p > 0:
                rows.append(local[node])
                cols.append(local[auto.goto[node, a]])
                vals.append(p)
    if (np.asarray(cols) < 0).any():
        raise AssertionError("automaton left the live node set")
    d = len(live)
    step = sp.csr_matrix((vals, (rows, cols)), shape=(d, d))
    killed = auto.terminal[live]
    masked = (step @ sp.diags((~killed).astype(float))).tocsr()
    masked.eliminate_zeros()
    init = np.zeros(d)
    for s in g.states:
        node = 0
        for a in reversed(s):
            node = auto.goto[node, a]
        init[local[node]] += cylinder_measure(g, s)
    stepT = step.T.tocsr()
    n_eff = max(U.depth, L + 1)
    for _ in range(n_eff - 1 - L):
        init = stepT @ init
    return OpenOperator(g, hole, step, masked, killed, init)


@dataclass
class SurvivalCurve:
    """``P(tau_U > t)`` for ``t = 0..T``."""

    times: np.ndarray
    values: np.ndarray
    method: str
    ci_low: np.ndarray | None = None
    ci_high: np.ndarray | None = None
    log_values: np.ndarray | None = None

    def to_csv(self) -> str:
        lines = ["t,value,ci_lo,ci_hi"]
        for i, t in enumerate(self.times):
            lo = "" if self.ci_low is None else repr(float(self.ci_low[i]))
            hi = "" if self.ci_high is None else repr(float(self.ci_high[i]))
            lines.append(f"{int(t)},{float(self.values[i])!r},{lo},{hi}")
        return "\n".join(lines) + "\n"


class _SurvivalRun(NamedTuple):
    log_survival: np.ndarray
    return_mass: np.ndarray | None


def _iterate(op: OpenOperator, T: int, with_return: bool = False, stop=None) -> _SurvivalRun:
    """Log-survival for ``t = 0..T`` (renormalised each step to avoid underflow).

    With ``with_return`` also ``mu(U and tau_U > t)``; ``stop(t, value)``
    may end the run early.
    """
    logs = [0.0]
    ret = [] if with_return else None
    if op.absorbing:
        logs += [-math.inf] * T
        if with_return:
            ret.append(1.0)
        return _SurvivalRun(np.array(logs), None if ret is None else np.array(ret))
    QT = op.masked.T.tocsr()
    stepT = op.step.T.tocsr() if with_return else None
    v = op.initial.copy()
    scale = 0.0
    for t in range(T + 1):
        if t > 0:
            v = QT @ v
            total = v.sum()
            if total <= 0:
                logs += [-math.inf] * (T + 1 - t)
                break
            scale += math.log(total)
            v /= total
            logs.append(scale)
        if with_return:
            ret.append(math.exp(scale) * float((stepT @ v)[op.killed].sum()))
            if stop is not None and stop(t, ret[-1]):
                break
    return _SurvivalRun(np.array(logs), None if ret is None else np.array(ret))


def survival_exact(g: GibbsData, hole: Hole, T: int, state_cap: int = DEFAULT_STATE_CAP) -> SurvivalCurve:
    """Exact survival curve by iterating the masked operator."""
    if T < 1:
        raise PreconditionError("horizon T must be >= 1")
    op = open_operator(g, hole, state_cap)
    logs = _iterate(op, T).log_survival
    return SurvivalCurve(np.arange(T + 1), np.exp(logs), "exact", log_values=logs)


@dataclass
class EscapeResult:
    rho: float
    lambda_open: float
    pressure: float
    mu_U: float
    state_count: int
    degenerate: bool = False
    reducible: bool = False
    warnings: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "rho": None if math.isinf(self.rho) else self.rho,
            "rho_infinite": math.isinf(self.rho),
            "lambda_open": self.lambda_open,
            "pressure": self.pressure,
            "mu_U": self.mu_U,
            "state_count": self.state_count,
            "warnings": list(self.warnings),
        }


def escape_rate_spectral(g: GibbsData, hole: Hole, state_cap: int = DEFAULT_STATE_CAP) -> EscapeResult:
    """``rho_U = P(f) - log lambda_open``; infinite when nothing survives."""
    op = open_operator(g, hole, state_cap)
    mu = measure_of_set(g, hole.set)
    radius, _, degenerate = op.spectrum
    reducible = op.reducible
    if reducible:
        log.info("hole disconnects the shift; rate is set by the slowest surviving component")
    rho = math.inf if radius <= 0 else max(-math.log(radius), 0.0)
    if radius <= 0:
        op.warnings.append("FULLY_ABSORBING")
    return EscapeResult(rho, g.lam * radius, g.pressure, mu, op.state_count, degenerate, reducible, list(op.warnings))


def wilson_interval(successes, trials, z: float = WILSON_Z):
    p = np.asarray(successes, dtype=float) / trials
    denom = 1 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * np.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return center - half, center + half


def first_entry_times(orbits: np.ndarray, U: CylinderSet, T: int, k: int) -> np.ndarray:
    """``tau_U`` for each orbit row, capped at ``T + 1``.

    Rows must have at least ``T + n`` symbols.
    """
    count = orbits.shape[0]
    hit = np.zeros((count, T), dtype=bool)
    by_len: dict[int, list] = {}
    for w in U.generators:
        by_len.setdefault(len(w), []).append(w)
    max_exact = max(1, int(62 / math.log2(max(k, 2))))
    for ell, words in by_len.items():
        if ell == 0:
            hit[:] = True
            continue
        p = min(ell, max_exact)
        code = np.zeros((count, T), dtype=np.int64)
        for i in range(p):
            code = code * k + orbits[:, 1 + i : 1 + i + T]
        prefixes = np.array(sorted({_encode(w[:p], k) for w in words}), dtype=np.int64)
        cand = np.isin(code, prefixes)
        if p == ell:
            hit |= cand
            continue
        full = set(words)
        for r, c in zip(*np.nonzero(cand & ~hit)):
            if tuple(int(a) for a in orbits[r, 1 + c : 1 + c + ell]) in full:
                hit[r, c] = True
    tau = np.where(hit.any(axis=1), hit.argmax(axis=1) + 1, T + 1)
    return tau


def _encode(w, k):
    c = 0
    for a in w:
        c = c * k + a
    return c


def survival_mc(
    g: GibbsData, hole: Hole, T: int, N: int, seed: int = 0, workers: int = 1
) -> SurvivalCurve:
    """Monte Carlo survival curve with Wilson 95% intervals.

    Orbits are drawn in fixed chunks of ``2**14``; chunk ``i`` uses the
    ``i``-th child of ``numpy.random.SeedSequence(seed)``. Counts are summed,
    so the result depends on ``(seed, N)`` only, not on ``workers``.
    """
    if N < 1:
        raise PreconditionError("need N >= 1")
    n = hole.depth
    k = g.sft.alphabet_size
    sizes = [MC_CHUNK] * (N // MC_CHUNK) + ([N % MC_CHUNK] if N % MC_CHUNK else [])
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))

    def run(i):
        orbits = MarkovSampler(g, seeds[i]).sample_orbits(sizes[i], T + n + 1)
        tau = first_entry_times(orbits, hole.set, T, k)
        return np.bincount(tau, minlength=T + 2)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            hist = sum(pool.map(run, range(len(sizes))))
    else:
        hist = sum(run(i) for i in range(len(sizes)))
    # survivors at t: tau > t
    survivors = N - np.cumsum(hist)[: T + 1]
    values = survivors / N
    if not hole.set:
        lo = hi = values.copy()
    else:
        lo, hi = wilson_interval(survivors, N)
    return SurvivalCurve(np.arange(T + 1), values, "monte-carlo", lo, hi)


def hitting_ratio(g: GibbsData, hole: Hole, s: int) -> float:
    """``P(tau_U <= s) / (s mu(U))``; at most 1 by the union bound."""
    if s < 1:
        raise PreconditionError("s must be >= 1")
    mu = measure_of_set(g, hole.set)
    if mu <= 0:
        raise DomainError("hole has zero measure")
    op = open_operator(g, hole)
    logs = _iterate(op, s).log_survival
    return float(-math.expm1(logs[s]) / (s * mu))


class GapCheck(NamedTuple):
    lhs: float
    rhs: float
    holds: bool


def product_gap_check(
    g: GibbsData,
    hole: Hole,
    s: int,
    t: int,
    delta: int,
    phi: Callable[[int], float] | None = None,
) -> GapCheck:
    """Compare ``|P(tau>s+t) - P(tau>t)P(tau>s)|`` with its mixing bound.

    The bound is ``2 (delta mu(U) + phi(delta - n)) P(tau > t - delta)``.
    ``phi`` defaults to the exact left phi-mixing coefficient of ``g``.
    """
    n = hole.depth
    if not delta < s / 2:
        raise PreconditionError(f"need delta < s/2 (delta={delta}, s={s})")
    if not delta > n:
        raise PreconditionError(f"need delta > n (delta={delta}, n={n})")
    if phi is None:
        from .experiments import phi_function

        phi = phi_function(g)
    curve = survival_exact(g, hole, s + t)
    S = curve.values
    lhs = abs(S[s + t] - S[t] * S[s])
    mu = measure_of_set(g, hole.set)
    rhs = 2 * (delta * mu + phi(delta - n)) * (S[t - delta] if t >= delta else 1.0)
    return GapCheck(float(lhs), float(rhs), bool(lhs <= rhs + 1e-12))


class KacResult(NamedTuple):
    total: float
    terms: int
    tail_bound: float


def kac_sum(g: GibbsData, hole: Hole, tail_tol: float = 1e-12, max_terms: int = 10**7) -> KacResult:
    """``sum_j j mu(U and tau_U = j)``, which equals 1 for ergodic measures.

    Summed as ``sum_{t>=0} mu(U and tau_U > t)``; iteration stops once the
    geometric tail estimate falls below ``tail_tol``.
    """
    op = open_operator(g, hole)
    if op.absorbing:
        return KacResult(1.0, 1, 0.0)
    q = op.radius

    def stop(t, value):
        return t > 0 and value / max(1 - q, 1e-300) < tail_tol

    run = _iterate(op, max_terms, with_return=True, stop=stop)
    terms = run.return_mass
    tail = terms[-1] * q / max(1 - q, 1e-300)
    return KacResult(math.fsum(terms) + tail, len(terms), tail)


def random_hole(sft: Sft, n: int, rng: np.random.Generator, density: float | None = None) -> Hole:
    """Random nonempty proper union of admissible ``n``-words."""
    words = sft.words(n)
    if len(words) < 2:
        raise DomainError("need at least two admissible words")
    p = rng.uniform(0.05, 0.5) if density is None else density
    while True:
        chosen = [w for w in words if rng.random() < p]
        if 0 < len(chosen) < len(words):
            return Hole(CylinderSet(sft, n, chosen), label=f"random depth {n}")
