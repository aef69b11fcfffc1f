"""One-sided subshifts of finite type, cylinder sets and periodic points.

Words are plain tuples of ints. A :class:`CylinderSet` is a union of
cylinders of a fixed depth ``n``; internally it keeps the canonical
prefix-free set of generator words (each of length at most ``n``) so that
holes made of very many ``n``-cylinders stay small. Iterating over a
CylinderSet yields the explicit depth-``n`` words.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import DomainError, PreconditionError

Word = tuple


class Sft:
    """Subshift of finite type on the alphabet ``{0, ..., k-1}``.

    Parameters
    ----------
    transition : array_like, shape (k, k)
        0/1 matrix; ``transition[a, b] != 0`` allows ``b`` to follow ``a``.
        Must be irreducible.
    """

    def __init__(self, transition):
        G = np.asarray(transition)
        if G.ndim != 2 or G.shape[0] != G.shape[1] or G.shape[0] == 0:
            raise DomainError(f"transition matrix must be square and nonempty, got shape {G.shape}")
        G = (G != 0).astype(np.int64)
        k = G.shape[0]
        if (G.sum(axis=1) == 0).any() or (G.sum(axis=0) == 0).any():
            raise DomainError("every symbol needs a successor and a predecessor")
        # (I + G)^(k-1) > 0 iff G irreducible; entries saturate at 1
        reach = np.eye(k, dtype=np.int64)
        step = np.minimum(np.eye(k, dtype=np.int64) + G, 1)
        for _ in range(k - 1):
            reach = np.minimum(reach @ step, 1)
        if not reach.all():
            raise DomainError("transition matrix is not irreducible")
        G.setflags(write=False)
        self._G = G
        self._powers = {0: np.eye(k, dtype=np.int64), 1: G}
        self._successors = tuple(tuple(int(b) for b in np.flatnonzero(G[a])) for a in range(k))

    @classmethod
    def full_shift(cls, k: int = 2) -> "Sft":
        return cls(np.ones((k, k), dtype=int))

    @classmethod
    def golden_mean(cls) -> "Sft":
        return cls([[1, 1], [1, 0]])

    @property
    def alphabet_size(self) -> int:
        return self._G.shape[0]

    @property
    def transition(self) -> np.ndarray:
        return self._G

    def __eq__(self, other):
        return isinstance(other, Sft) and np.array_equal(self._G, other._G)

    def __hash__(self):
        return hash(self._G.tobytes())

    def __repr__(self):
        return f"Sft({self._G.tolist()})"

    def successors(self, a: int) -> tuple:
        return self._successors[a]

    def allowed(self, a: int, b: int) -> bool:
        return bool(self._G[a, b])

    def power(self, p: int) -> np.ndarray:
        """Boolean ``G**p`` (1 where a path of exactly ``p`` steps exists)."""
        if p < 0:
            raise DomainError("negative power")
        if p not in self._powers:
            base = max(q for q in self._powers if q <= p)
            M = self._powers[base]
            for q in range(base + 1, p + 1):
                M = np.minimum(M @ self._G, 1)
                self._powers[q] = M
        return self._powers[p]

    def is_primitive(self) -> bool:
        """True when some power of the transition matrix is strictly positive."""
        k = self.alphabet_size
        return bool(self.power((k - 1) ** 2 + 1).all())

    def words(self, n: int) -> list:
        """All admissible words of length ``n`` in lexicographic order."""
        if n < 0:
            raise DomainError("negative word length")
        if n == 0:
            return [()]
        out = [(a,) for a in range(self.alphabet_size)]
        for _ in range(n - 1):
            out = [w + (b,) for w in out for b in self._successors[w[-1]]]
        return out

    def extensions(self, w: Word, length: int) -> Iterator[Word]:
        """Admissible words of the given length that start with ``w``."""
        if len(w) >= length:
            yield tuple(w[:length])
            return
        if not w:
            yield from self.words(length)
            return
        stack = [tuple(w)]
        while stack:
            cur = stack.pop()
            if len(cur) == length:
                yield cur
                continue
            for b in reversed(self._successors[cur[-1]]):
                stack.append(cur + (b,))

    def count_extensions(self, w: Word, length: int) -> int:
        if len(w) >= length:
            return 1
        G = self._G.astype(object)  # exact integer path counts
        if not w:
            v = np.ones(self.alphabet_size, dtype=object)
            steps = length - 1
        else:
            v = G[w[-1]].copy()
            steps = length - len(w) - 1
        for _ in range(steps):
            v = v @ G
        return int(v.sum())

    def format_word(self, w: Word) -> str:
        if self.alphabet_size <= 10:
            return "".join(str(a) for a in w)
        return ".".join(str(a) for a in w)

    def parse_word(self, s: str) -> Word:
        if s == "":
            return ()
        if self.alphabet_size <= 10 and "." not in s:
            w = tuple(int(c) for c in s)
        else:
            w = tuple(int(c) for c in s.split("."))
        for a in w:
            if not 0 <= a < self.alphabet_size:
                raise DomainError(f"symbol {a} out of range in word {s!r}")
        return w

    def to_json(self) -> dict:
        return {"alphabet": self.alphabet_size, "transition": self._G.tolist()}


def is_admissible(sft: Sft, w: Sequence[int]) -> bool:
    k = sft.alphabet_size
    for a in w:
        if not 0 <= a < k:
            raise DomainError(f"symbol {a} outside alphabet of size {k}")
    return all(sft.allowed(a, b) for a, b in zip(w, w[1:]))


@dataclass(frozen=True)
class PointCode:
    """The sequence ``preperiod + cycle + cycle + ...``.

    An empty cycle means the point is only known to the depth of the
    preperiod (used for non-periodic points).
    """

    preperiod: Word = ()
    cycle: Word = ()

    def __post_init__(self):
        object.__setattr__(self, "preperiod", tuple(int(a) for a in self.preperiod))
        object.__setattr__(self, "cycle", tuple(int(a) for a in self.cycle))

    @classmethod
    def periodic(cls, cycle) -> "PointCode":
        return cls((), _as_word(cycle))

    @classmethod
    def truncated(cls, symbols) -> "PointCode":
        return cls(_as_word(symbols), ())

    @property
    def depth(self) -> float:
        return float("inf") if self.cycle else len(self.preperiod)

    def symbols(self, n: int) -> Word:
        if n > self.depth:
            raise PreconditionError(f"code determines only {len(self.preperiod)} symbols, {n} requested")
        if n <= len(self.preperiod):
            return self.preperiod[:n]
        rest = n - len(self.preperiod)
        reps = -(-rest // len(self.cycle))
        return self.preperiod + (self.cycle * reps)[:rest]

    def reduced(self) -> "PointCode":
        """Absorb preperiod symbols that already continue the cycle backwards."""
        pre, cyc = self.preperiod, self.cycle
        while pre and cyc and pre[-1] == cyc[-1]:
            cyc = (cyc[-1],) + cyc[:-1]
            pre = pre[:-1]
        return PointCode(pre, cyc)

    @property
    def is_periodic(self) -> bool:
        return minimal_period(self) is not None

    def validate(self, sft: Sft) -> None:
        if self.cycle:
            if not is_admissible(sft, self.preperiod + self.cycle + self.cycle[:1]):
                raise DomainError("point code is not admissible")
        elif not is_admissible(sft, self.preperiod):
            raise DomainError("point code is not admissible")

    def to_json(self, sft: Sft | None = None) -> dict:
        fmt = sft.format_word if sft is not None else (lambda w: "".join(map(str, w)))
        return {"preperiod": fmt(self.preperiod), "cycle": fmt(self.cycle)}

    @classmethod
    def from_json(cls, data: dict, sft: Sft | None = None) -> "PointCode":
        parse = sft.parse_word if sft is not None else _as_word
        return cls(parse(data.get("preperiod", "")), parse(data.get("cycle", "")))


def _as_word(w) -> Word:
    if isinstance(w, str):
        return tuple(int(c) for c in w.split(".")) if "." in w else tuple(int(c) for c in w)
    return tuple(int(a) for a in w)


def cylinder_of_point(x: PointCode, n: int) -> Word:
    """The first ``n`` symbols of ``x`` (its ``n``-cylinder)."""
    return x.symbols(n)


def minimal_period(x: PointCode) -> int | None:
    r = x.reduced()
    if r.preperiod or not r.cycle:
        return None
    c = r.cycle
    L = len(c)
    for d in range(1, L + 1):
        if L % d == 0 and c == c[d:] + c[:d]:
            return d
    return L


class CylinderSet:
    """A finite union of depth-``n`` cylinders.

    Parameters
    ----------
    sft : Sft
    depth : int
    words : iterable of words
        Admissible words of length at most ``depth``. A shorter word stands
        for all of its admissible extensions to length ``depth``.
    """

    __slots__ = ("sft", "depth", "generators", "__dict__")

    def __init__(self, sft: Sft, depth: int, words: Iterable = ()):
        if depth < 0:
            raise DomainError("negative depth")
        gens = set()
        for w in words:
            w = sft.parse_word(w) if isinstance(w, str) else tuple(int(a) for a in w)
            if len(w) > depth:
                raise DomainError(f"word of length {len(w)} exceeds depth {depth}")
            if not is_admissible(sft, w):
                raise DomainError(f"inadmissible word {sft.format_word(w)}")
            gens.add(w)
        self.sft = sft
        self.depth = depth
        self.generators = _canonical(sft, gens)

    @classmethod
    def cylinder(cls, sft: Sft, word) -> "CylinderSet":
        word = _as_word(word) if isinstance(word, str) else tuple(word)
        return cls(sft, len(word), [word])

    @classmethod
    def everything(cls, sft: Sft, depth: int) -> "CylinderSet":
        return cls(sft, depth, [()])

    @cached_property
    def _gen_index(self) -> frozenset:
        return frozenset(self.generators)

    @cached_property
    def max_generator_length(self) -> int:
        return max((len(g) for g in self.generators), default=0)

    @cached_property
    def words(self) -> frozenset:
        return frozenset(self)

    def __iter__(self) -> Iterator[Word]:
        for g in sorted(self.generators):
            yield from self.sft.extensions(g, self.depth)

    def __len__(self) -> int:
        return sum(self.sft.count_extensions(g, self.depth) for g in self.generators)

    def __bool__(self) -> bool:
        return bool(self.generators)

    def __contains__(self, w) -> bool:
        """True when the cylinder of ``w`` lies inside the set."""
        w = tuple(w)
        idx = self._gen_index
        return any(w[:l] in idx for l in range(min(len(w), self.max_generator_length) + 1))

    def intersects_cylinder(self, w) -> bool:
        w = tuple(w)
        if w in self:
            return True
        return any(g[: len(w)] == w for g in self.generators if len(g) > len(w))

    def __eq__(self, other):
        return (
            isinstance(other, CylinderSet)
            and self.sft == other.sft
            and self.depth == other.depth
            and self.generators == other.generators
        )

    def __hash__(self):
        return hash((self.depth, self.generators))

    def __repr__(self):
        shown = ", ".join(self.sft.format_word(g) for g in sorted(self.generators)[:6])
        more = ", ..." if len(self.generators) > 6 else ""
        return f"CylinderSet(depth={self.depth}, generators={{{shown}{more}}})"

    def issubset(self, other: "CylinderSet") -> bool:
        """Set inclusion in the sequence space (depths may differ)."""
        limit = other.max_generator_length

        def covered(g):
            if g in other:
                return True
            if len(g) >= limit:
                return False
            return all(covered(g + (b,)) for b in _next_symbols(self.sft, g))

        return all(covered(g) for g in self.generators)

    def __le__(self, other):
        return self.issubset(other)

    def __and__(self, other: "CylinderSet") -> "CylinderSet":
        out = []
        for g in self.generators:
            if g in other:
                out.append(g)
            else:
                out.extend(h for h in other.generators if len(h) > len(g) and h[: len(g)] == g)
        return CylinderSet(self.sft, max(self.depth, other.depth), out)

    def __or__(self, other: "CylinderSet") -> "CylinderSet":
        return CylinderSet(self.sft, max(self.depth, other.depth), self.generators | other.generators)

    def with_depth(self, depth: int) -> "CylinderSet":
        if depth < self.max_generator_length:
            raise PreconditionError(f"set needs depth at least {self.max_generator_length}")
        return CylinderSet(self.sft, depth, self.generators)

    def to_json(self, expand: bool = True) -> dict:
        fmt = self.sft.format_word
        if expand:
            return {"depth": self.depth, "words": [fmt(w) for w in self]}
        return {"depth": self.depth, "words": sorted(fmt(g) for g in self.generators)}

    @classmethod
    def from_json(cls, sft: Sft, data: dict) -> "CylinderSet":
        return cls(sft, int(data["depth"]), [sft.parse_word(s) for s in data["words"]])


def _next_symbols(sft: Sft, w: Word) -> tuple:
    return sft.successors(w[-1]) if w else tuple(range(sft.alphabet_size))


def _canonical(sft: Sft, gens: set) -> frozenset:
    if () in gens:
        return frozenset({()})
    # drop words that already have a generator as a proper prefix
    gens = {g for g in gens if not any(g[:l] in gens for l in range(len(g)))}
    # merge complete sibling families into their parent, deepest first
    by_len: dict[int, set] = {}
    for g in gens:
        by_len.setdefault(len(g), set()).add(g)
    for l in sorted(by_len, reverse=True):
        if l == 0:
            continue
        level = by_len.get(l, set())
        parents: dict[Word, set] = {}
        for g in level:
            parents.setdefault(g[:-1], set()).add(g[-1])
        for p, kids in parents.items():
            if set(_next_symbols(sft, p)) <= kids:
                level -= {p + (b,) for b in kids}
                by_len.setdefault(l - 1, set()).add(p)
        if () in by_len.get(0, set()):
            return frozenset({()})
    return frozenset(g for level in by_len.values() for g in level)


def set_period(sft: Sft, U: CylinderSet) -> int:
    """Smallest ``j >= 1`` with ``T^{-j} U`` meeting ``U``."""
    if not U:
        raise DomainError("set period of an empty set")
    gens = sorted(U.generators, key=len)
    if gens[0] == ():
        return 1
    j = 1
    while True:
        for g in gens:
            for h in gens:
                if _can_follow(sft, g, h, j):
                    return j
        j += 1


def _can_follow(sft: Sft, g: Word, h: Word, j: int) -> bool:
    """Is there a point in [g] whose j-th shift lies in [h]?"""
    if not h:
        return True
    lg = len(g)
    if j < lg:
        # the seam pair lies inside h once the overlap agrees
        overlap = g[j:]
        c = min(len(overlap), len(h))
        return overlap[:c] == h[:c]
    return bool(sft.power(j - lg + 1)[g[-1], h[0]])


def outer_approx(sft: Sft, U: CylinderSet, j: int, side: str = "right") -> CylinderSet:
    """Outer ``j``-cylinder approximation of ``U``.

    ``side="right"`` gives the set of length-``j`` prefixes of ``U``;
    ``side="left"`` gives the length-``j`` words seen at offset ``n - j``.
    """
    if j > U.depth:
        raise PreconditionError(f"approximation depth {j} exceeds set depth {U.depth}")
    if side not in ("left", "right"):
        raise DomainError("side must be 'left' or 'right'")
    start = 0 if side == "right" else U.depth - j
    return CylinderSet(sft, j, window_words(sft, U, start, j))


def window_words(sft: Sft, U: CylinderSet, start: int, j: int) -> set:
    """All ``j``-words occurring at offset ``start`` in points of ``U``."""
    if j == 0:
        return {()} if U else set()
    out = set()
    for g in U.generators:
        lg = len(g)
        if start + j <= lg:
            out.add(g[start : start + j])
        elif start < lg:
            out.update(sft.extensions(g[start:], j))
        elif lg == 0:
            out.update(sft.words(j))
        else:
            reach = sft.power(start - lg + 1)[g[-1]]
            out.update(w for w in sft.words(j) if reach[w[0]])
    return out


def shift_intersection(sft: Sft, U: CylinderSet, offsets: Sequence[int]) -> CylinderSet:
    """``U`` intersected with ``T^{-o} U`` for every offset ``o``.

    Returned at depth ``n + max(offsets)`` as explicit words.
    """
    offsets = sorted(set(int(o) for o in offsets) | {0})
    n = U.depth
    length = n + offsets[-1]
    prefixes = {g[:l] for g in U.generators for l in range(len(g) + 1)}

    def compatible(w):
        for o in offsets:
            if o >= len(w):
                break
            window = w[o : o + n]
            if window in U:
                continue
            if window not in prefixes:
                return False
        return True

    found = []
    stack = [(a,) for a in reversed(range(sft.alphabet_size))]
    while stack:
        w = stack.pop()
        if not compatible(w):
            continue
        if len(w) == length:
            found.append(w)
            continue
        for b in reversed(sft.successors(w[-1])):
            stack.append(w + (b,))
    return CylinderSet(sft, length, found)


def periodic_intersection(sft: Sft, U: CylinderSet, m: int, u: int) -> CylinderSet:
    """``U_{n,u}``: the points whose orbit visits ``U`` at times ``0, m, ..., u m``."""
    if m < 1 or u < 0:
        raise DomainError("need m >= 1 and u >= 0")
    if u == 0:
        return U
    return shift_intersection(sft, U, [i * m for i in range(u + 1)])
