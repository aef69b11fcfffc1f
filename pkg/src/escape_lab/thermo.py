"""Locally constant potentials, Perron data and exact Gibbs measures.

A potential of range ``r`` is a table of values on admissible ``r``-words.
Its transfer matrix acts on words of length ``L = max(r - 1, 1)``: an edge
``u -> v`` is an admissible ``(L + 1)``-word and carries the weight
``exp(f)`` of the window starting at the source. The Gibbs (equilibrium)
state is then a stationary Markov chain of order ``L`` whose cylinder
measures are available in closed form, so every measure in the library is
exact up to floating point.

The eigenvectors live on the ``L``-word state space rather than on the
sequence space itself; the conformal measure and density are recovered
from them through the usual Markov-measure formula.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, NumericalError, PreconditionError
from .sft import CylinderSet, PointCode, Sft, Word, is_admissible


@dataclass(frozen=True)
class Potential:
    """Locally constant potential ``f`` given by its values on ``r``-words."""

    sft: Sft
    range: int
    table: Mapping[Word, float]

    def __post_init__(self):
        if self.range < 1:
            raise DomainError("potential range must be >= 1")
        table = {tuple(int(a) for a in w): float(v) for w, v in dict(self.table).items()}
        expected = set(self.sft.words(self.range))
        if set(table) != expected:
            missing = expected - set(table)
            extra = set(table) - expected
            raise DomainError(
                f"potential table must cover exactly the admissible {self.range}-words "
                f"(missing {sorted(missing)[:4]}, inadmissible or extra {sorted(extra)[:4]})"
            )
        if not all(math.isfinite(v) for v in table.values()):
            raise DomainError("potential values must be finite")
        object.__setattr__(self, "table", table)

    @classmethod
    def constant(cls, sft: Sft, value: float, range: int = 1) -> "Potential":
        return cls(sft, range, {w: value for w in sft.words(range)})

    @classmethod
    def from_symbol_values(cls, sft: Sft, values) -> "Potential":
        return cls(sft, 1, {(a,): v for a, v in enumerate(values)})

    @classmethod
    def from_probabilities(cls, sft: Sft, probs) -> "Potential":
        """Range-2 potential ``log p[a, b]`` of a stochastic matrix."""
        P = np.asarray(probs, dtype=float)
        return cls(sft, 2, {(a, b): math.log(P[a, b]) for a, b in sft.words(2)})

    def __call__(self, w) -> float:
        return self.table[tuple(w)]

    def to_json(self) -> dict:
        return {
            **self.sft.to_json(),
            "range": self.range,
            "table": {self.sft.format_word(w): v for w, v in sorted(self.table.items())},
        }

    @classmethod
    def from_json(cls, data: dict) -> "Potential":
        sft = Sft(data["transition"])
        if "alphabet" in data and int(data["alphabet"]) != sft.alphabet_size:
            raise DomainError("alphabet size disagrees with the transition matrix")
        table = {sft.parse_word(w): v for w, v in data["table"].items()}
        return cls(sft, int(data["range"]), table)


class TransferMatrix(NamedTuple):
    matrix: np.ndarray
    states: list


def state_length(f: Potential) -> int:
    return max(f.range - 1, 1)


def transfer_matrix(sft: Sft, f: Potential) -> TransferMatrix:
    """Weighted transition matrix of the transfer operator of ``f``.

    For range 1 the weight sits on the source symbol,
    ``M[a, b] = G[a, b] exp(f(a))``.
    """
    if f.sft != sft:
        raise DomainError("potential is defined on a different shift")
    L = state_length(f)
    states = sft.words(L)
    index = {s: i for i, s in enumerate(states)}
    M = np.zeros((len(states), len(states)))
    if f.range == 1:
        for a, b in sft.words(2):
            M[a, b] = math.exp(f((a,)))
    else:
        for w in sft.words(f.range):
            M[index[w[:-1]], index[w[1:]]] = math.exp(f(w))
    return TransferMatrix(M, states)


def perron(M, tol: float = 1e-13, max_iter: int = 10**6):
    """Perron eigenvalue and positive eigenvectors by power iteration.

    Returns ``(lam, left, right)`` with ``left`` summing to one and
    ``left @ right == 1``. ``M`` must be nonnegative, irreducible and
    aperiodic; otherwise the iteration cannot settle and
    :class:`NumericalError` is raised at the iteration cap.
    """
    _, right = _power(M, tol, max_iter, "right")
    Mt = M.T.tocsr() if sp.issparse(M) else M.T
    _, left = _power(Mt, tol, max_iter, "left")
    # two-sided Rayleigh quotient: error is quadratic in the residuals
    lam = float(left @ (M @ right) / (left @ right))
    left = left / left.sum()
    right = right / (left @ right)
    return lam, left, right


def _power(M, tol, max_iter, side):
    n = M.shape[0]
    v = np.full(n, 1.0 / n)
    lam = 0.0
    res = math.inf
    for it in range(1, max_iter + 1):
        w = M @ v
        lam = float(v @ w / (v @ v))
        res = float(np.max(np.abs(w - lam * v)) / (abs(lam) * np.max(np.abs(v))))
        v = w / np.max(np.abs(w))
        if res < tol:
            # polish: keep going while the residual still improves
            for _ in range(100):
                w = M @ v
                lam2 = float(v @ w / (v @ v))
                res2 = float(np.max(np.abs(w - lam2 * v)) / (abs(lam2) * np.max(np.abs(v))))
                if res2 >= res:
                    break
                lam, res, v = lam2, res2, w / np.max(np.abs(w))
            break
    else:
        raise NumericalError(
            f"{side} power iteration did not converge", iterations=max_iter, residual=res, estimate=lam
        )
    if (v <= 0).any():
        raise NumericalError(f"{side} Perron vector is not strictly positive", iterations=it, residual=res)
    return lam, v


@dataclass(frozen=True, eq=False)
class GibbsData:
    """Exact equilibrium state of a locally constant potential."""

    sft: Sft
    potential: Potential
    states: list
    matrix: np.ndarray
    lam: float
    left: np.ndarray
    right: np.ndarray
    transition: np.ndarray = field(repr=False)
    stationary: np.ndarray = field(repr=False)
    index: dict = field(repr=False)

    @property
    def pressure(self) -> float:
        return math.log(self.lam)

    @property
    def state_length(self) -> int:
        return len(self.states[0])

    def measure(self, w) -> float:
        return cylinder_measure(self, w)

    def second_eigenvalue_ratio(self) -> float:
        ev = np.sort(np.abs(np.linalg.eigvals(self.matrix)))[::-1]
        return float(ev[1] / ev[0]) if len(ev) > 1 else 0.0

    def to_json(self) -> dict:
        fmt = self.sft.format_word
        return {
            "potential": self.potential.to_json(),
            "lambda": self.lam,
            "pressure": self.pressure,
            "states": [fmt(s) for s in self.states],
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "stationary": self.stationary.tolist(),
            "transition_probabilities": self.transition.tolist(),
        }


def gibbs_state(sft: Sft, f: Potential, tol: float = 1e-12) -> GibbsData:
    """Perron data, pressure and the Markov form of the Gibbs measure of ``f``."""
    if not sft.is_primitive():
        raise DomainError("shift is periodic (not mixing); pass to an iterate T^p of the system")
    M, states = transfer_matrix(sft, f)
    lam, left, right = perron(M)
    scale = lam * max(np.max(left), np.max(right))
    if np.max(np.abs(left @ M - lam * left)) > tol * scale or np.max(np.abs(M @ right - lam * right)) > tol * scale:
        raise NumericalError("Perron residual above tolerance", lam=lam)
    P = M * right[None, :] / (lam * right[:, None])
    pi = left * right
    g = GibbsData(sft, f, states, M, lam, left, right, P, pi, {s: i for i, s in enumerate(states)})
    total = math.fsum(cylinder_measure(g, w) for w in sft.words(f.range))
    if abs(total - 1.0) > tol:
        raise NumericalError("Gibbs measure does not have total mass one", total=total)
    return g


def pressure(sft: Sft, f: Potential) -> float:
    M, _ = transfer_matrix(sft, f)
    lam, _, _ = perron(M)
    return math.log(lam)


def cylinder_measure(g: GibbsData, w) -> float:
    """Gibbs measure of the cylinder ``[w]``.

    Words shorter than the chain memory are summed over their completions;
    inadmissible words have measure zero.
    """
    w = tuple(w)
    if not w:
        return 1.0
    if not is_admissible(g.sft, w):
        return 0.0
    L = g.state_length
    if len(w) < L:
        return math.fsum(cylinder_measure(g, e) for e in g.sft.extensions(w, L))
    idx = g.index
    i = idx[w[:L]]
    value = g.left[i]
    M = g.matrix
    lam = g.lam
    for t in range(L, len(w)):
        j = idx[w[t - L + 1 : t + 1]]
        value *= M[i, j] / lam
        i = j
    return float(value * g.right[i])


def measure_of_set(g: GibbsData, U: CylinderSet) -> float:
    return math.fsum(cylinder_measure(g, w) for w in U.generators)


def ergodic_sum(f: Potential, x: PointCode, m: int) -> float:
    """``f(x) + f(Tx) + ... + f(T^{m-1} x)``."""
    if m < 0:
        raise DomainError("negative number of steps")
    try:
        s = x.symbols(m + f.range - 1)
    except PreconditionError as e:
        raise PreconditionError(f"ergodic sum over {m} steps needs {m + f.range - 1} symbols") from e
    return math.fsum(f(s[j : j + f.range]) for j in range(m))


class MarkovSampler:
    """Stationary sampler for the Gibbs measure; owns its RNG state.

    Orbits are drawn by picking the first ``L`` symbols from the stationary
    law and then one symbol at a time from the transition probabilities.
    """

    def __init__(self, g: GibbsData, seed=None):
        self.gibbs = g
        self.rng = np.random.default_rng(seed)
        k = g.sft.alphabet_size
        S = len(g.states)
        self.next_state = np.full((S, k), -1, dtype=np.int64)
        self.symbol_probs = np.zeros((S, k))
        L = g.state_length
        for i, s in enumerate(g.states):
            for b in g.sft.successors(s[-1]):
                j = g.index[(s + (b,))[-L:]]
                self.next_state[i, b] = j
                self.symbol_probs[i, b] = g.transition[i, j]
        self.symbol_cdf = np.cumsum(self.symbol_probs, axis=1)
        self.symbol_cdf[:, -1] = 1.0
        self.stationary_cdf = np.cumsum(g.stationary)
        self.stationary_cdf[-1] = 1.0
        self.state_symbols = np.array(g.states, dtype=np.int64)

    def sample_orbits(self, count: int, length: int) -> np.ndarray:
        """Array of shape ``(count, length)`` of independent stationary orbits."""
        L = self.gibbs.state_length
        out = np.empty((count, max(length, L)), dtype=np.int64)
        state = np.searchsorted(self.stationary_cdf, self.rng.random(count), side="right")
        out[:, :L] = self.state_symbols[state]
        for t in range(L, length):
            u = self.rng.random(count)
            b = (u[:, None] >= self.symbol_cdf[state]).sum(axis=1)
            out[:, t] = b
            state = self.next_state[state, b]
        return out[:, :length]

    def sample_orbit(self, length: int) -> np.ndarray:
        return self.sample_orbits(1, length)[0]


def sampler(g: GibbsData, seed=None) -> MarkovSampler:
    return MarkovSampler(g, seed)


def sample_orbit(s: MarkovSampler, length: int) -> np.ndarray:
    return s.sample_orbit(length)


def iterate_system(sft: Sft, f: Potential, p: int):
    """Higher-block coding of ``T^p`` and the potential summed over ``p`` steps.

    Symbols of the new shift index the admissible ``p``-words of ``sft`` (in
    the order of ``sft.words(p)``). The Gibbs measure of the returned
    potential is the same measure seen through ``p``-blocks; its pressure is
    ``p`` times the original one.
    """
    if p < 1:
        raise DomainError("iterate power must be >= 1")
    blocks = sft.words(p)
    K = len(blocks)
    G = np.array([[int(sft.allowed(u[-1], v[0])) for v in blocks] for u in blocks])
    sft_p = Sft(G)
    r = f.range
    r_p = 1 + -(-(r - 1) // p)
    table = {}
    for W in sft_p.words(r_p):
        s = sum((blocks[i] for i in W), ())
        table[W] = math.fsum(f(s[i : i + r]) for i in range(p))
    return sft_p, Potential(sft_p, r_p, table), blocks


def iterate_point(x: PointCode, p: int, blocks: list) -> PointCode:
    """Code of ``x`` in the ``p``-block alphabet returned by :func:`iterate_system`."""
    index = {b: i for i, b in enumerate(blocks)}
    x = x.reduced()

    def encode(s):
        return tuple(index[s[i : i + p]] for i in range(0, len(s) - len(s) % p, p))

    if not x.cycle:
        return PointCode.truncated(encode(x.preperiod))
    pre_len = -(-len(x.preperiod) // p) * p
    cyc_len = math.lcm(len(x.cycle), p)
    full = x.symbols(pre_len + cyc_len)
    return PointCode(encode(full[:pre_len]), encode(full[pre_len:]))
