"""Superlinear Polya urn for one node's out-edges.

Color ``i`` is drawn with probability proportional to ``F_i * W_i**beta``.
In the exponential embedding each color fires on its own clock, waiting an
``Exp(F_i * k**beta)`` time when its weight is ``k``.  The clock of color
``i`` explodes at

    T_i = sum_{k >= 1} E_{i,k} / (F_i * k**beta),

which is finite for ``beta > 1``; the color with the smallest ``T_i`` is
drawn all but finitely often.  :func:`sample_winner_rubin` samples that
argmin exactly, truncating each series adaptively and certifying the
truncation with a tail bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import zeta

from .fitness import NodeStream

__all__ = [
    "UrnInstance",
    "WinnerResult",
    "UncertifiedWinnerError",
    "simulate_urn_steps",
    "simulate_urn_batch",
    "simulate_urns",
    "sample_winner_rubin",
    "q_epsilon",
    "DEFAULT_TOL",
    "DEFAULT_MAX_TERMS",
]

DEFAULT_TOL = 1e-9
DEFAULT_MAX_TERMS = 2**20
_PRUNE_EXPONENT = 80.0


class UncertifiedWinnerError(RuntimeError):
    """The winner could not be certified within the term budget."""


@dataclass(frozen=True)
class UrnInstance:
    fitnesses: np.ndarray
    beta: float

    def __post_init__(self):
        f = np.asarray(self.fitnesses, dtype=np.float64)
        if f.ndim != 1 or f.size == 0:
            raise ValueError("an urn needs at least one color")
        if not np.all(np.isfinite(f)) or np.any(f < 1):
            raise ValueError("fitnesses must be finite and >= 1")
        if not self.beta > 1:
            raise ValueError(f"beta must exceed 1, got {self.beta}")
        object.__setattr__(self, "fitnesses", f)
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def n_colors(self) -> int:
        return self.fitnesses.size


@dataclass(frozen=True)
class WinnerResult:
    index: int
    certified_error: float
    terms_used: int


def simulate_urns(fitnesses: np.ndarray, beta: float, n_steps: int, stream: NodeStream) -> np.ndarray:
    """Run one urn per row of ``fitnesses`` for ``n_steps`` draws each.

    Row ``r`` uses counters ``(r, step)`` of ``stream``.  Returns the final
    integer weights, same shape as ``fitnesses``.
    """
    fit = np.atleast_2d(np.asarray(fitnesses, dtype=np.float64))
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    if not beta > 1:
        raise ValueError(f"beta must exceed 1, got {beta}")
    reps, n = fit.shape
    weights = np.ones((reps, n), dtype=np.int64)
    if n_steps == 0 or reps == 0:
        return weights
    # Selection weights F * W**beta are kept relative to each row's largest
    # fitness; they stay finite as long as (n_steps + 1)**beta does.
    if beta * math.log(n_steps + 1.0) > 700:
        raise OverflowError("n_steps too large for this beta")
    f = fit / fit.max(axis=1, keepdims=True)
    sel = f.copy()
    rows = np.arange(reps, dtype=np.int64)
    block = max(1, min(n_steps, 2**22 // reps))
    for start in range(0, n_steps, block):
        steps = np.arange(start, min(start + block, n_steps), dtype=np.int64)
        u_block = stream.uniform(rows[:, None], steps[None, :])
        for j in range(steps.size):
            cum = np.cumsum(sel, axis=1)
            target = u_block[:, j] * cum[:, -1]
            idx = np.minimum((cum < target[:, None]).sum(axis=1), n - 1)
            w = weights[rows, idx] + 1
            weights[rows, idx] = w
            sel[rows, idx] = f[rows, idx] * w.astype(np.float64) ** beta
    return weights


def simulate_urn_batch(urn: UrnInstance, n_steps: int, stream: NodeStream, reps: int) -> np.ndarray:
    """``reps`` independent copies of ``urn``; shape ``(reps, n_colors)``."""
    return simulate_urns(np.tile(urn.fitnesses, (reps, 1)), urn.beta, n_steps, stream)


def simulate_urn_steps(urn: UrnInstance, n_steps: int, stream: NodeStream) -> np.ndarray:
    """Direct simulation of ``n_steps`` draws from all-ones weights."""
    return simulate_urn_batch(urn, n_steps, stream, 1)[0]


class _ZetaCache:
    """Hurwitz tails sum_{k > K} k**-s, for the power-of-two depths in use."""

    def __init__(self, beta: float):
        self.beta = beta
        self._cache: dict[int, tuple[float, float]] = {}

    def __call__(self, depth: int) -> tuple[float, float]:
        out = self._cache.get(depth)
        if out is None:
            out = (float(zeta(self.beta, depth + 1)), float(zeta(2 * self.beta, depth + 1)))
            self._cache[depth] = out
        return out


def sample_winner_rubin(
    urn: UrnInstance,
    stream: NodeStream,
    tol: float = DEFAULT_TOL,
    max_terms: int = DEFAULT_MAX_TERMS,
) -> WinnerResult:
    """Sample the color that wins the urn in the long run.

    Exponential ``E_{i,k}`` is counter ``(i, k)`` of ``stream``, so the
    result does not depend on the order in which series are deepened.

    With depth ``K_i`` the remaining tail of color ``i`` (in units of
    ``1/F_i``) has mean ``zeta(beta, K_i+1)`` and is sub-gamma with
    variance factor ``zeta(2 beta, K_i+1)`` and scale ``(K_i+1)**-beta``.
    The leader is the color with the smallest estimate ``partial + mean``.
    Color ``j`` can only overtake it if the two tails deviate by more than
    the gap between the estimates, or, since tails are nonnegative, if the
    leader's tail alone exceeds the gap to ``j``'s partial sum.  The smaller
    Bernstein bound of the two is summed over ``j``; colors contributing
    more than ``tol / n`` are deepened (depth doubles) until the sum drops
    below ``tol``.
    """
    if not 0 < tol < 1:
        raise ValueError("tol must lie in (0, 1)")
    n = urn.n_colors
    if n == 1:
        return WinnerResult(0, 0.0, 0)
    beta = urn.beta
    f = urn.fitnesses / urn.fitnesses.max()
    depth = np.ones(n, dtype=np.int64)
    partial = stream.exponential(np.arange(n, dtype=np.int64), 1)
    tails = _ZetaCache(beta)
    z1 = np.full(n, tails(1)[0])
    z2 = np.full(n, tails(1)[1])
    est = (partial + z1) / f
    with np.errstate(over="ignore"):
        floor_t = partial / f

    while True:
        lead = int(np.argmin(est))
        f_l = f[lead]
        v_l = z2[lead] / f_l**2
        c_l = 1.0 / (f_l * float(depth[lead] + 1) ** beta)
        # Colors whose partial sum already exceeds the leader's estimate by
        # `reach_t` have one-sided bound <= exp(-_PRUNE_EXPONENT); they are
        # charged that amount without being examined.
        reach_t = c_l * _PRUNE_EXPONENT + math.sqrt(
            (c_l * _PRUNE_EXPONENT) ** 2 + 2 * v_l * _PRUNE_EXPONENT
        )
        cand = np.flatnonzero(floor_t < est[lead] + reach_t)
        fj, pj, z1j, z2j = f[cand], partial[cand], z1[cand], z2[cand]
        # Gaps are scaled by f_j so that a huge 1/f_j cannot overflow.
        lead_scaled = fj * est[lead]
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            gap = np.maximum(pj + z1j - lead_scaled, 0.0)
            expo = gap**2 / (2.0 * (fj**2 * v_l + z2j + c_l * fj * gap))
            gap1 = np.maximum(pj - lead_scaled, 0.0)
            expo1 = gap1 / (2.0 * (fj**2 * v_l / gap1 + c_l * fj))
        # A zero gap gives nan in the second form; fmax ignores it.
        bound = np.exp(-np.fmax(expo, expo1))
        bound[cand == lead] = 0.0
        pruned = n - cand.size
        err = min(1.0, math.fsum(bound[bound > 0.0]) + pruned * math.exp(-_PRUNE_EXPONENT))
        if err <= tol:
            return WinnerResult(lead, err, int(depth.sum()))

        grow = np.union1d(cand[bound > tol / n], [lead])
        if np.any(depth[grow] >= max_terms):
            raise UncertifiedWinnerError(
                f"winner not certified to {tol:g} within {max_terms} terms "
                f"(bound {err:.3g}, leader {lead})"
            )
        for k0 in np.unique(depth[grow]):
            idx = grow[depth[grow] == k0]
            k0 = int(k0)
            k1 = min(2 * k0, max_terms)
            ks = np.arange(k0 + 1, k1 + 1, dtype=np.int64)
            terms = stream.exponential(idx[:, None], ks[None, :]) * ks.astype(np.float64) ** -beta
            partial[idx] += np.sum(terms, axis=1)
            depth[idx] = k1
            z1[idx], z2[idx] = tails(k1)
            est[idx] = (partial[idx] + z1[idx]) / f[idx]
            floor_t[idx] = partial[idx] / f[idx]


def q_epsilon(eps: float, beta: float, tol: float = 1e-10) -> float:
    """Infinite product prod_{n >= 1} (1 - 1/(1 + eps * n**beta)).

    The product is taken exactly up to ``K``; the logarithm of the rest,
    sum_{n > K} log(1 + y_n) with ``y_n = 1/(eps n**beta)``, lies between
    ``Z1/eps - Z2/(2 eps**2)`` and ``Z1/eps`` (``Z1``, ``Z2`` Hurwitz tails
    of orders ``beta`` and ``2 beta``).  ``K`` doubles until the midpoint of
    the induced interval is within ``tol``.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if not beta > 1:
        raise ValueError("beta must exceed 1")
    if not tol > 0:
        raise ValueError("tol must be positive")
    log_head = 0.0
    done = 0
    k = 64
    while True:
        ns = np.arange(done + 1, k + 1, dtype=np.float64)
        # log(1 - 1/(1+y)) = -log1p(1/(eps n^beta))
        log_head -= math.fsum(np.log1p(1.0 / (eps * ns**beta)))
        done = k
        z1 = float(zeta(beta, k + 1))
        z2 = float(zeta(2 * beta, k + 1))
        hi = z1 / eps
        lo = max(0.0, hi - z2 / (2 * eps**2))
        head = math.exp(log_head)
        q_hi = head * math.exp(-lo)
        q_lo = head * math.exp(-hi)
        if (q_hi - q_lo) / 2 <= tol or k >= 2**26:
            return (q_hi + q_lo) / 2
        k *= 2
