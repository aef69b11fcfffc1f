"""Standard test systems and reference points."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

from .interval import IntervalMarkovMap
from .sft import PointCode, Sft
from .thermo import GibbsData, Potential, gibbs_state

CHAIN = ((0.7, 0.3), (0.4, 0.6))


def sqrt2_minus_1_code(depth: int = 30) -> PointCode:
    """Binary expansion of ``sqrt(2) - 1`` truncated to ``depth`` digits."""
    v = math.isqrt(2 * 4**depth) - 2**depth
    return PointCode.truncated(int(b) for b in format(v, f"0{depth}b"))


def fibonacci_code(depth: int = 40) -> PointCode:
    """Prefix of the Fibonacci word ``0100101001001...`` (admissible for the golden-mean shift)."""
    a, b = "0", "01"
    while len(b) < depth:
        a, b = b, b + a
    return PointCode.truncated(int(c) for c in b[:depth])


@dataclass(frozen=True)
class BatterySystem:
    name: str
    gibbs: GibbsData = field(repr=False)
    periodic: dict
    nonperiodic: dict

    @property
    def sft(self) -> Sft:
        return self.gibbs.sft

    @property
    def points(self) -> dict:
        return {**self.periodic, **self.nonperiodic}


def bernoulli_half() -> GibbsData:
    sft = Sft.full_shift(2)
    return gibbs_state(sft, Potential.constant(sft, -math.log(2)))


def biased_bernoulli(p: float = 0.7) -> GibbsData:
    sft = Sft.full_shift(2)
    return gibbs_state(sft, Potential.from_symbol_values(sft, [math.log(p), math.log(1 - p)]))


def markov_chain(P=CHAIN) -> GibbsData:
    sft = Sft.full_shift(len(P))
    return gibbs_state(sft, Potential.from_probabilities(sft, P))


def parry_golden_mean() -> GibbsData:
    sft = Sft.golden_mean()
    return gibbs_state(sft, Potential.constant(sft, 0.0))


def _cycles(*codes) -> dict:
    return {f"cycle {c}": PointCode.periodic(c) for c in codes}


@lru_cache(maxsize=None)
def default_battery() -> tuple:
    """The four reference systems with their periodic and non-periodic points."""
    return (
        BatterySystem("bernoulli-1/2", bernoulli_half(), _cycles("0", "01", "001"), {"sqrt2-1": sqrt2_minus_1_code()}),
        BatterySystem("bernoulli-0.7", biased_bernoulli(), _cycles("0", "01", "001"), {"sqrt2-1": sqrt2_minus_1_code()}),
        BatterySystem("chain-r2", markov_chain(), _cycles("0", "01", "001"), {"sqrt2-1": sqrt2_minus_1_code()}),
        BatterySystem("parry-golden-mean", parry_golden_mean(), _cycles("0", "01", "001"), {"fibonacci": fibonacci_code()}),
    )


def doubling_map() -> IntervalMarkovMap:
    return IntervalMarkovMap.doubling()


def slopes_3_3half_map() -> IntervalMarkovMap:
    """Slope 3 on ``[0, 1/3)`` and slope 3/2 on ``[1/3, 1)``, both onto."""
    return IntervalMarkovMap.full_branched([0, Fraction(1, 3), 1])
