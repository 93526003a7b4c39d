"""Geometry of the layered lattice Z x Z>=0.

A node ``(x, h)`` links to every ``(y, h + 1)`` with ``|y - x| <= a**h``.
Coordinates are integers, so the admissible displacement at layer ``h``
is ``floor(a**h)``.  ``a`` is carried as a :class:`fractions.Fraction` so
that this floor is exact at every layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import NamedTuple, Union

__all__ = [
    "NodeId",
    "ModelParams",
    "as_fraction",
    "reach",
    "out_neighbors",
    "neighborhood_overlap",
    "log_a",
    "min_coalescence_layer",
]

RealLike = Union[Fraction, int, float, str]

INT64_MAX = 2**63 - 1
UINT64_MASK = 2**64 - 1


class NodeId(NamedTuple):
    """Lattice vertex: horizontal coordinate ``x`` and layer ``h``.

    ``x`` is a Python int, so it never wraps.
    """

    x: int
    h: int


def as_fraction(a: RealLike) -> Fraction:
    """Convert ``a`` to an exact rational.

    Strings may be decimals (``"2.5"``) or ratios (``"5/2"``).  Floats are
    read through their shortest round-trip decimal, so ``2.1`` means 21/10
    rather than its binary approximation.
    """
    if isinstance(a, Fraction):
        return a
    if isinstance(a, bool):
        raise TypeError("a must be a number")
    if isinstance(a, int):
        return Fraction(a)
    if isinstance(a, float):
        if not math.isfinite(a):
            raise ValueError(f"a must be finite, got {a!r}")
        return Fraction(repr(a))
    if isinstance(a, str):
        try:
            return Fraction(a.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"cannot parse a={a!r} as a decimal or p/q") from exc
    raise TypeError(f"unsupported type for a: {type(a).__name__}")


@dataclass(frozen=True)
class ModelParams:
    """Model constants: reach base ``a``, reinforcement exponent ``beta``,
    fitness tail index ``gamma`` and the 64-bit master ``seed``."""

    a: Fraction
    beta: float
    gamma: float
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "a", as_fraction(self.a))
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "seed", int(self.seed))
        if not self.a > 1:
            raise ValueError(f"the model requires a > 1 (got a={self.a})")
        if not (self.beta > 1 and math.isfinite(self.beta)):
            raise ValueError(f"the model requires beta > 1 (got beta={self.beta})")
        if not 0 < self.gamma < 1:
            raise ValueError(f"the model requires 0 < gamma < 1 (got gamma={self.gamma})")
        if not 0 <= self.seed <= UINT64_MASK:
            raise ValueError(f"seed must fit in 64 unsigned bits (got {self.seed})")

    def with_seed(self, seed: int) -> "ModelParams":
        return ModelParams(self.a, self.beta, self.gamma, seed)

    def as_dict(self) -> dict:
        return {"a": str(self.a), "beta": self.beta, "gamma": self.gamma, "seed": self.seed}


@lru_cache(maxsize=4096)
def _reach_cached(h: int, a: Fraction) -> int:
    p = a**h
    return p.numerator // p.denominator


def reach(h: int, a: RealLike) -> int:
    """Return ``floor(a**h)`` exactly."""
    if h < 0:
        raise ValueError(f"layer index must be >= 0, got {h}")
    a = as_fraction(a)
    if not a > 1:
        raise ValueError(f"a must exceed 1, got {a}")
    return _reach_cached(int(h), a)


def out_neighbors(v: NodeId, a: RealLike) -> list[NodeId]:
    """Out-neighbors of ``v`` in ascending ``x`` order.

    The position in this list is the urn color index of the edge.
    """
    if v.h < 0:
        raise ValueError(f"invalid node {v}")
    r = reach(v.h, a)
    h1 = v.h + 1
    return [NodeId(v.x + d, h1) for d in range(-r, r + 1)]


def neighborhood_overlap(l: NodeId, r: NodeId, a: RealLike) -> tuple[int, int]:
    """Sizes of the union and intersection of the out-neighborhoods of two
    nodes on the same layer."""
    if l.h != r.h:
        raise ValueError(f"nodes on different layers: {l} and {r}")
    rr = reach(l.h, a)
    size = 2 * rr + 1
    inter = max(0, size - abs(l.x - r.x))
    return 2 * size - inter, inter


def log_a(n: float, a: RealLike) -> float:
    return math.log(n) / math.log(float(as_fraction(a)))


def min_coalescence_layer(n: int, a: RealLike) -> int:
    """Smallest layer at which walks started at horizontal distance ``n``
    can possibly meet.

    Each walk moves at most ``reach(i)`` between layers ``i`` and ``i+1``,
    so meeting at layer ``h`` needs ``n <= 2 * sum(reach(i) for i < h)``.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    h, budget = 0, 0
    while budget < n:
        budget += 2 * reach(h, a)
        h += 1
    return h
