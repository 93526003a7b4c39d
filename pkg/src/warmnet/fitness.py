"""Counter-based random streams and the Pareto fitness field.

Every random number in the package is a pure function of
``(seed, tag, key..., counter...)``: the integers are folded through a
SplitMix64-style finalizer, one full mix per field.  Nothing is stateful, so
the infinite lattice can be addressed lazily in any order, and replications
running in different processes never need to coordinate.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .lattice import INT64_MAX, UINT64_MASK, NodeId

__all__ = [
    "Tag",
    "hash_u64",
    "uniform",
    "derive_seed",
    "NodeStream",
    "pareto_inverse",
    "FitnessField",
]

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_S30, _S27, _S31, _S11 = (np.uint64(s) for s in (30, 27, 31, 11))
_TWO_M53 = 2.0**-53


class Tag(enum.IntEnum):
    """Purpose tags separating the streams attached to one key."""

    FITNESS = 1
    URN = 2
    DYNAMICS = 3
    REPLICATION = 4
    PARETO = 5
    URN_SIM = 6


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def _fold_bigint(x: int) -> int:
    # Injective-in-practice reduction for coordinates outside int64.
    sign = 1 if x < 0 else 0
    mag = -x if sign else x
    acc = np.array(_FOLD_INIT ^ sign, dtype=np.uint64)
    with np.errstate(over="ignore"):
        while mag:
            acc = _mix(acc + _GOLDEN + np.uint64(mag & UINT64_MASK))
            mag >>= 64
    return int(acc)


_WIDE_SALT = 0xA5A5A5A5A5A5A5A5
_FOLD_INIT = 0xD1B54A32D192ED03


def _wide_range(x_lo: int, x_hi: int) -> np.ndarray:
    """Keys of ``x_lo..x_hi`` equal to ``_as_u64(x)`` element by element,
    vectorized over blocks where the high 64-bit limbs are constant."""
    parts = []
    x = x_lo
    lo64, hi64 = -INT64_MAX - 1, INT64_MAX
    with np.errstate(over="ignore"):
        while x <= x_hi:
            if lo64 <= x <= hi64:
                end = min(x_hi, hi64)
                parts.append(np.arange(x, end + 1, dtype=np.int64).view(np.uint64))
                x = end + 1
                continue
            sign = 1 if x < 0 else 0
            mag = -x if sign else x
            q, low = mag >> 64, mag & UINT64_MASK
            if sign:
                # |x| shrinks as x grows; stop at the limb or the int64 boundary
                count = min(low + 1, x_hi - x + 1, lo64 - x)
                lows = np.uint64(low) - np.arange(count, dtype=np.uint64)
            else:
                count = min(UINT64_MASK - low + 1, x_hi - x + 1)
                lows = np.uint64(low) + np.arange(count, dtype=np.uint64)
            acc = _mix(np.uint64(_FOLD_INIT ^ sign) + _GOLDEN + lows)
            while q:
                acc = _mix(acc + _GOLDEN + np.uint64(q & UINT64_MASK))
                q >>= 64
            parts.append(acc ^ np.uint64(_WIDE_SALT))
            x += count
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.uint64)


def _as_u64(value) -> np.ndarray:
    if isinstance(value, (int, np.integer)):
        value = int(value)
        if -INT64_MAX - 1 <= value <= INT64_MAX:
            return np.array(value & UINT64_MASK, dtype=np.uint64)
        # Large coordinates get a distinct prefix so they cannot alias int64 ones.
        return np.array(_fold_bigint(value) ^ _WIDE_SALT, dtype=np.uint64)
    arr = np.asarray(value)
    if arr.dtype == np.uint64:
        return arr
    if arr.dtype.kind not in "iu":
        raise TypeError(f"stream fields must be integers, got dtype {arr.dtype}")
    return arr.astype(np.int64, copy=False).view(np.uint64)


def hash_u64(seed: int, tag: int, *fields) -> np.ndarray:
    """64-bit hash of ``(seed, tag, fields...)``; fields broadcast."""
    with np.errstate(over="ignore"):
        h = _mix(np.array(seed & UINT64_MASK, dtype=np.uint64) ^ (np.uint64(int(tag)) * _GOLDEN))
        for pos, f in enumerate(fields, start=1):
            salt = np.uint64((pos * 0x632BE59BD9B4E019) & UINT64_MASK)
            h = _mix(h + _mix(_as_u64(f) + salt))
    return h


def uniform(seed: int, tag: int, *fields) -> np.ndarray:
    """Uniform draws on (0, 1] with 53 random bits."""
    h = hash_u64(seed, tag, *fields)
    return ((h >> _S11).astype(np.float64) + 1.0) * _TWO_M53


def derive_seed(seed: int, *fields: int) -> int:
    """Child seed for a replication, independent of evaluation order."""
    return int(hash_u64(seed, Tag.REPLICATION, *fields))


@dataclass(frozen=True)
class NodeStream:
    """A random stream addressed by ``(seed, tag, key)``; draws are indexed
    by explicit counters rather than consumed sequentially."""

    seed: int
    tag: Tag
    key: tuple = ()

    @classmethod
    def for_node(cls, seed: int, v: NodeId, tag: Tag) -> "NodeStream":
        return cls(seed, tag, (v.x, v.h))

    def uniform(self, *counters) -> np.ndarray:
        return uniform(self.seed, self.tag, *self.key, *counters)

    def exponential(self, *counters) -> np.ndarray:
        return -np.log(self.uniform(*counters))

    def child(self, *extra: int) -> "NodeStream":
        return NodeStream(self.seed, self.tag, self.key + tuple(extra))


def pareto_inverse(u, gamma: float):
    """Inverse survival function of the Pareto law ``P(F > s) = s**-gamma``
    on ``[1, inf)``: returns ``u ** (-1 / gamma)``.

    Raises on ``u == 0`` and when the result would overflow a double.
    """
    if not 0 < gamma < 1:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    arr = np.asarray(u, dtype=np.float64)
    if np.any(arr <= 0) or np.any(arr > 1):
        raise ValueError("u must lie in (0, 1]")
    with np.errstate(over="ignore"):
        out = np.power(arr, -1.0 / gamma)
    if not np.all(np.isfinite(out)):
        raise OverflowError(f"fitness overflows float64 at gamma={gamma}")
    if out.ndim == 0:
        return float(out)
    return out


class FitnessField:
    """iid Pareto(gamma) fitnesses on the whole lattice, evaluated lazily.

    ``fitness(v)`` is a pure function of ``(seed, v)``.
    """

    def __init__(self, seed: int, gamma: float):
        if not 0 < gamma < 1:
            raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
        self.seed = int(seed)
        self.gamma = float(gamma)

    def __repr__(self):
        return f"FitnessField(seed={self.seed}, gamma={self.gamma})"

    def uniform_row(self, h: int, x_lo: int, x_hi: int) -> np.ndarray:
        if -INT64_MAX - 1 <= x_lo and x_hi <= INT64_MAX:
            xs = np.arange(x_lo, x_hi + 1, dtype=np.int64)
        else:
            xs = _wide_range(x_lo, x_hi)
        return uniform(self.seed, Tag.FITNESS, xs, h)

    def fitness(self, v: NodeId) -> float:
        u = float(uniform(self.seed, Tag.FITNESS, v.x, v.h))
        return pareto_inverse(u, self.gamma)

    def fitness_row(self, h: int, x_lo: int, x_hi: int) -> np.ndarray:
        """Fitnesses of ``(x, h)`` for ``x_lo <= x <= x_hi``."""
        return pareto_inverse(self.uniform_row(h, x_lo, x_hi), self.gamma)

    def log_fitness_row(self, h: int, x_lo: int, x_hi: int) -> np.ndarray:
        return -np.log(self.uniform_row(h, x_lo, x_hi)) / self.gamma

    def log_fitness(self, v: NodeId) -> float:
        u = float(uniform(self.seed, Tag.FITNESS, v.x, v.h))
        return -math.log(u) / self.gamma
