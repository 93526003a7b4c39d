"""Layer-by-layer construction of the limit paths from (0, 0) and (N, 0).

Every node keeps exactly one out-edge in the limit graph (its urn winner),
so the paths from two layer-0 nodes are deterministic functions of the
randomness.  They meet at some layer ``h``; the graph distance between the
two start nodes is then ``2 h``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .fitness import FitnessField, NodeStream, Tag
from .lattice import ModelParams, NodeId, log_a, reach
from .urn import DEFAULT_MAX_TERMS, DEFAULT_TOL, UncertifiedWinnerError, UrnInstance, sample_winner_rubin

__all__ = [
    "WalkPair",
    "DistanceSample",
    "CoalescedError",
    "winner_target",
    "step_walk",
    "run_walks",
    "distance",
    "d_sequence",
    "default_h_max",
    "verify_forest",
    "DEFAULT_MAX_COLORS",
]

# Walks whose next urn would exceed this many colors are censored.
DEFAULT_MAX_COLORS = 2**24

STATUS_OK = "ok"
STATUS_CENSORED = "censored"
STATUS_UNCERTIFIED = "uncertified"


class CoalescedError(RuntimeError):
    """Raised when stepping a pair that has already met."""


@dataclass
class WalkPair:
    """Positions ``L[h]``, ``R[h]`` of the two paths, plus the winners
    found so far (shared by both paths)."""

    N: int
    L: list[int] = field(default_factory=list)
    R: list[int] = field(default_factory=list)
    coalesced_at: Optional[int] = None
    memo: dict[NodeId, NodeId] = field(default_factory=dict)
    error_budget: float = 0.0
    origin: int = 0

    def __post_init__(self):
        if not self.L:
            self.L = [self.origin]
            self.R = [self.origin + self.N]
        if self.L[-1] == self.R[-1] and self.coalesced_at is None:
            self.coalesced_at = len(self.L) - 1

    @property
    def layer(self) -> int:
        return len(self.L) - 1


@dataclass(frozen=True)
class DistanceSample:
    """One Monte Carlo observation of the distance H_N.

    ``H`` is ``None`` unless ``status == "ok"``.
    """

    N: int
    H: Optional[int]
    layers_explored: int
    status: str
    seed: int
    params: ModelParams
    L: tuple[int, ...] = ()
    R: tuple[int, ...] = ()
    error_budget: float = 0.0
    forest_ok: Optional[bool] = None
    memo: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def censored(self) -> bool:
        return self.status == STATUS_CENSORED

    def walk_pair(self) -> WalkPair:
        """Rebuild the walk state, e.g. for :func:`verify_forest`."""
        at = self.H // 2 if self.H is not None else None
        return WalkPair(self.N, list(self.L), list(self.R), at, dict(self.memo), self.error_budget, self.L[0] if self.L else 0)


def winner_target(
    v: NodeId, params: ModelParams, fitness: FitnessField, tol: float = DEFAULT_TOL,
    max_terms: int = DEFAULT_MAX_TERMS,
) -> tuple[NodeId, float]:
    """The out-neighbor of ``v`` whose edge survives, and the certified
    error of that choice."""
    r = reach(v.h, params.a)
    lo = v.x - r
    fit = fitness.fitness_row(v.h + 1, lo, v.x + r)
    stream = NodeStream(fitness.seed, Tag.URN, (v.x, v.h))
    res = sample_winner_rubin(UrnInstance(fit, params.beta), stream, tol, max_terms)
    return NodeId(lo + res.index, v.h + 1), res.certified_error


def _winner(pair: WalkPair, v: NodeId, params, fitness, tol, max_terms) -> NodeId:
    w = pair.memo.get(v)
    if w is None:
        w, err = winner_target(v, params, fitness, tol, max_terms)
        pair.memo[v] = w
        pair.error_budget += err
    return w


def step_walk(
    pair: WalkPair, params: ModelParams, fitness: FitnessField, tol: float = DEFAULT_TOL,
    max_terms: int = DEFAULT_MAX_TERMS,
) -> WalkPair:
    """Advance both paths by one layer (in place)."""
    if pair.coalesced_at is not None:
        raise CoalescedError(f"paths already met at layer {pair.coalesced_at}")
    h = pair.layer
    lw = _winner(pair, NodeId(pair.L[-1], h), params, fitness, tol, max_terms)
    rw = _winner(pair, NodeId(pair.R[-1], h), params, fitness, tol, max_terms)
    pair.L.append(lw.x)
    pair.R.append(rw.x)
    if lw == rw:
        pair.coalesced_at = h + 1
    return pair


def default_h_max(n: int, a) -> int:
    return math.ceil(log_a(max(n, 1), a)) + 128


def run_walks(
    n: int, params: ModelParams, seed: int, h_max: Optional[int] = None, tol: float = DEFAULT_TOL,
    max_colors: int = DEFAULT_MAX_COLORS, max_terms: int = DEFAULT_MAX_TERMS, origin: int = 0,
) -> tuple[WalkPair, str]:
    """Walk until the paths meet, ``h_max`` is reached, or the next urn is
    too large to materialize.  Returns the pair and a status string;
    certification failures propagate as :class:`UncertifiedWinnerError`."""
    if n < 0:
        raise ValueError("N must be >= 0")
    if h_max is None:
        h_max = default_h_max(n, params.a)
    fitness = FitnessField(seed, params.gamma)
    pair = WalkPair(n, origin=origin)
    while pair.coalesced_at is None:
        h = pair.layer
        if h >= h_max or 2 * reach(h, params.a) + 1 > max_colors:
            return pair, STATUS_CENSORED
        step_walk(pair, params, fitness, tol, max_terms)
    return pair, STATUS_OK


def distance(
    n: int, params: ModelParams, seed: int, h_max: Optional[int] = None, tol: float = DEFAULT_TOL,
    max_colors: int = DEFAULT_MAX_COLORS, origin: int = 0, check_forest: bool = False,
) -> DistanceSample:
    """One sample of H_N between ``(origin, 0)`` and ``(origin + N, 0)``,
    using ``seed`` for all randomness of the replication.

    With ``check_forest`` every memoized winner is recomputed from scratch
    and the outcome stored in ``forest_ok``.
    """
    if n < 1:
        raise ValueError("N must be >= 1")
    try:
        pair, status = run_walks(n, params, seed, h_max, tol, max_colors, origin=origin)
    except UncertifiedWinnerError:
        return DistanceSample(n, None, 0, STATUS_UNCERTIFIED, seed, params)
    H = 2 * pair.coalesced_at if status == STATUS_OK else None
    forest = verify_forest(pair, params, seed, tol) if check_forest else None
    return DistanceSample(
        n, H, pair.layer, status, seed, params, tuple(pair.L), tuple(pair.R), pair.error_budget, forest, pair.memo
    )


def d_sequence(pair) -> list[int]:
    """Horizontal gaps ``R_h - L_h`` per recorded layer."""
    if not pair.L:
        raise ValueError("pair has no layers")
    return [r - l for l, r in zip(pair.L, pair.R)]


def verify_forest(pair: WalkPair, params: ModelParams, seed: int, tol: float = DEFAULT_TOL) -> bool:
    """Check that each visited node has one winner, that recomputing it from
    scratch gives the memoized answer, and that the recorded paths follow it."""
    fitness = FitnessField(seed, params.gamma)
    for v, w in pair.memo.items():
        again, _ = winner_target(v, params, fitness, tol)
        if again != w or w.h != v.h + 1:
            return False
    for path in (pair.L, pair.R):
        for h in range(len(path) - 1):
            if pair.memo.get(NodeId(path[h], h)) != NodeId(path[h + 1], h + 1):
                return False
    return True
