"""Monte Carlo experiments on distances, tails and fitness statistics.

Every replication draws its seed from ``(master seed, N, replication)``,
so results are identical whatever the worker count or scheduling.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import subprocess
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import stats

from .coalescence import STATUS_CENSORED, STATUS_OK, STATUS_UNCERTIFIED, DistanceSample, distance
from .fitness import FitnessField, NodeStream, Tag, derive_seed, pareto_inverse, uniform
from .lattice import ModelParams, as_fraction, log_a, min_coalescence_layer, reach
from .urn import DEFAULT_TOL, UrnInstance, q_epsilon, sample_winner_rubin

__all__ = [
    "ExperimentConfig",
    "SummaryRow",
    "TailResult",
    "FittestResult",
    "replication_seed",
    "sample_distances",
    "summarize",
    "monte_carlo_distance",
    "tail_estimate",
    "pareto_tightness",
    "choice_of_fittest",
    "fittest_choice_rate",
    "lower_bound_holds",
    "to_csv",
    "write_manifest",
]

# Slack for comparing integer H against floating-point logarithms.
_LOG_SLACK = 1e-9


@dataclass
class ExperimentConfig:
    params: ModelParams
    n_list: Sequence[int]
    replications: int
    h_max: Optional[int] = None
    tol: float = DEFAULT_TOL
    out: Optional[str] = None
    workers: int = 1
    check_forest: bool = False

    def __post_init__(self):
        self.n_list = [int(n) for n in self.n_list]
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not self.n_list or any(n < 1 for n in self.n_list):
            raise ValueError("n_list must be nonempty with every N >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def as_dict(self) -> dict:
        return {
            "params": self.params.as_dict(),
            "n_list": list(self.n_list),
            "replications": self.replications,
            "h_max": self.h_max,
            "tol": self.tol,
            "workers": self.workers,
        }


@dataclass(frozen=True)
class SummaryRow:
    N: int
    replications: int
    censored: int
    uncertified: int
    mean_H: float
    std_H: float
    ci95_H: float
    mean_ratio: float
    ci95_ratio: float

    FIELDS = ("N", "replications", "censored", "uncertified", "mean_H", "std_H", "ci95_H", "mean_ratio", "ci95_ratio")


def replication_seed(master: int, n: int, rep: int) -> int:
    return derive_seed(master, n, rep)


def _one(task) -> DistanceSample:
    n, rep, params, h_max, tol, check = task
    return distance(n, params, replication_seed(params.seed, n, rep), h_max, tol, check_forest=check)


def _map(fn, tasks: list, workers: int) -> list:
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    chunksize = max(1, len(tasks) // (workers * 8))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=chunksize))


def sample_distances(config: ExperimentConfig) -> dict[int, list[DistanceSample]]:
    """All samples, grouped by N, in replication order."""
    tasks = [
        (n, r, config.params, config.h_max, config.tol, config.check_forest)
        for n in config.n_list
        for r in range(config.replications)
    ]
    results = _map(_one, tasks, config.workers)
    out: dict[int, list[DistanceSample]] = {n: [] for n in config.n_list}
    for s in results:
        out[s.N].append(s)
    return out


def summarize(n: int, samples: Sequence[DistanceSample], a) -> SummaryRow:
    """Censored and uncertified samples are counted but left out of the means."""
    hs = np.array([s.H for s in samples if s.status == STATUS_OK], dtype=np.float64)
    censored = sum(s.status == STATUS_CENSORED for s in samples)
    uncertified = sum(s.status == STATUS_UNCERTIFIED for s in samples)
    scale = log_a(n, a) if n > 1 else math.nan
    if hs.size:
        mean = math.fsum(hs) / hs.size
        std = float(np.std(hs, ddof=1)) if hs.size > 1 else 0.0
        ci = 1.96 * std / math.sqrt(hs.size)
    else:
        mean = std = ci = math.nan
    ratio = mean / scale if n > 1 else math.nan
    ci_ratio = ci / scale if n > 1 else math.nan
    return SummaryRow(n, len(samples), censored, uncertified, mean, std, ci, ratio, ci_ratio)


def monte_carlo_distance(config: ExperimentConfig) -> list[SummaryRow]:
    groups = sample_distances(config)
    return [summarize(n, groups[n], config.params.a) for n in config.n_list]


def lower_bound_holds(sample: DistanceSample, a) -> bool:
    """Deterministic lower bound for an uncensored sample.

    The walks move at most ``floor(a**i)`` each between layers ``i`` and
    ``i+1``, so ``H/2`` is at least :func:`min_coalescence_layer`; the
    looser closed form ``H/2 >= log_a N - log_a(2/(a-1))`` is checked too.
    """
    if sample.status != STATUS_OK:
        return True
    layer = sample.H // 2
    a_f = float(as_fraction(a))
    closed = log_a(sample.N, a) - math.log(2 / (a_f - 1)) / math.log(a_f)
    return layer >= min_coalescence_layer(sample.N, a) and layer >= closed - _LOG_SLACK


@dataclass
class TailResult:
    N: int
    replications: int
    censored: int
    uncertified: int
    rows: list[tuple[float, int, float, float, float]]
    slope: Optional[float]
    slope_se: Optional[float]
    n_fit: int

    FIELDS = ("x", "count", "survival", "log_survival", "ci95")


def survival_table(samples: Sequence[DistanceSample], a, x_grid: Iterable[float]) -> tuple[list, int]:
    """Empirical ``P(H >= 2 log_a N + x)`` with a normal 95% half-width;
    censored samples count as infinite distances, uncertified ones are
    dropped."""
    usable = [s for s in samples if s.status != STATUS_UNCERTIFIED]
    n = samples[0].N
    base = 2 * log_a(n, a)
    hs = np.array([s.H if s.status == STATUS_OK else math.inf for s in usable], dtype=np.float64)
    rows = []
    for x in x_grid:
        count = int(np.sum(hs >= base + x - _LOG_SLACK))
        surv = count / len(usable) if usable else math.nan
        ci = 1.96 * math.sqrt(surv * (1 - surv) / len(usable)) if usable else math.nan
        rows.append((float(x), count, surv, math.log(surv) if surv > 0 else -math.inf, ci))
    return rows, len(usable)


def _fit_slope(rows, n_used: int):
    pts = [(x, ls) for x, _, s, ls, _ in rows if s > 10 / n_used]
    if len(pts) < 3:
        return None, None, len(pts)
    xs, ys = zip(*pts)
    fit = stats.linregress(xs, ys)
    return float(fit.slope), float(fit.stderr), len(pts)


def default_x_grid(samples: Sequence[DistanceSample], a) -> list[float]:
    """Offsets ``H - 2 log_a N`` of the even values ``H >= 2 log_a N`` up to
    the largest observed one; the survival function only jumps there."""
    base = 2 * log_a(samples[0].N, a)
    finite = [s.H for s in samples if s.status == STATUS_OK]
    if not finite:
        return [0.0]
    first = 2 * math.ceil((base - _LOG_SLACK) / 2)
    return [h - base for h in range(first, max(finite) + 1, 2)]


def tail_estimate(
    params: ModelParams, n: int, replications: int, x_grid: Optional[Sequence[float]] = None,
    h_max: Optional[int] = None, tol: float = DEFAULT_TOL, workers: int = 1,
    samples: Optional[Sequence[DistanceSample]] = None,
) -> TailResult:
    """Survival of ``H_N - 2 log_a N`` and a least-squares slope of its log.

    The default grid is :func:`default_x_grid`.  The slope is a
    descriptive fit over grid points with survival above
    ``10 / replications``; it is ``None`` when fewer than three qualify.
    """
    if samples is None:
        cfg = ExperimentConfig(params, [n], replications, h_max, tol, workers=workers)
        samples = sample_distances(cfg)[n]
    if x_grid is None:
        x_grid = default_x_grid(samples, params.a)
    rows, used = survival_table(samples, params.a, x_grid)
    slope, se, n_fit = _fit_slope(rows, used)
    return TailResult(
        n, len(samples),
        sum(s.status == STATUS_CENSORED for s in samples),
        sum(s.status == STATUS_UNCERTIFIED for s in samples),
        rows, slope, se, n_fit,
    )


def pareto_tightness(gamma: float, m_list: Sequence[int], replications: int, seed: int = 0) -> list[dict]:
    """Quantiles of sum / second-largest over ``m`` iid Pareto(gamma) draws."""
    out = []
    for m in m_list:
        if m < 2:
            raise ValueError("every m must be >= 2")
        ratios = np.empty(replications)
        chunk = max(1, 2**22 // m)
        idx = np.arange(m, dtype=np.int64)
        for start in range(0, replications, chunk):
            reps = np.arange(start, min(start + chunk, replications), dtype=np.int64)
            x = pareto_inverse(uniform(seed, Tag.PARETO, m, reps[:, None], idx[None, :]), gamma)
            second = np.partition(x, m - 2, axis=1)[:, m - 2]
            sums = np.array([math.fsum(row) for row in x])
            ratios[reps] = sums / second
        out.append({
            "m": m,
            "replications": replications,
            "median": float(np.median(ratios)),
            "p95": float(np.quantile(ratios, 0.95)),
            "min": float(ratios.min()),
        })
    return out


@dataclass(frozen=True)
class FittestResult:
    rate: float
    bound: float
    q_eps: float
    p_dominant: float
    se: float
    replications: int

    @property
    def consistent(self) -> bool:
        """Empirical rate is not significantly below the lower bound."""
        return self.rate >= self.bound - 3 * self.se


def choice_of_fittest(
    fitness_rows: Sequence[np.ndarray], beta: float, eps: float, seed: int = 0, tol: float = DEFAULT_TOL,
) -> FittestResult:
    """How often an urn's winner is its fittest color, next to the lower
    bound ``q_eps * P(max >= eps * sum)`` estimated from the same urns."""
    wins = 0
    dominant = 0
    for r, fit in enumerate(fitness_rows):
        fit = np.asarray(fit, dtype=np.float64)
        res = sample_winner_rubin(UrnInstance(fit, beta), NodeStream(seed, Tag.URN, (r,)), tol)
        wins += res.index == int(np.argmax(fit))
        dominant += fit.max() >= eps * math.fsum(fit)
    reps = len(fitness_rows)
    rate = wins / reps
    p_dom = dominant / reps
    q = q_epsilon(eps, beta)
    return FittestResult(rate, float(q * p_dom), q, float(p_dom), math.sqrt(max(rate * (1 - rate), 1.0 / reps) / reps), reps)


def fittest_choice_rate(
    params: ModelParams, layer_h: int, replications: int, eps: float, tol: float = DEFAULT_TOL,
) -> FittestResult:
    """Choice-of-the-fittest statistics on real layer-``h`` neighborhoods."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    r = reach(layer_h, params.a)
    field_ = FitnessField(params.seed, params.gamma)
    spacing = 2 * (2 * r + 1)
    rows = []
    for k in range(replications):
        x = k * spacing
        rows.append(field_.fitness_row(layer_h + 1, x - r, x + r))
    return choice_of_fittest(rows, params.beta, eps, derive_seed(params.seed, layer_h), tol)


def _fmt(v) -> str:
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.6f}"
    return str(v)


def to_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    """CSV with fixed six-decimal floats and LF line endings."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def summary_csv(rows: Sequence[SummaryRow]) -> str:
    return to_csv(SummaryRow.FIELDS, [[getattr(r, f) for f in SummaryRow.FIELDS] for r in rows])


def tail_csv(res: TailResult) -> str:
    return to_csv(TailResult.FIELDS, res.rows)


def pareto_csv(rows: Sequence[dict]) -> str:
    header = ("m", "replications", "median", "p95", "min")
    return to_csv(header, [[r[k] for k in header] for r in rows])


def _git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=os.path.dirname(__file__), capture_output=True, text=True, timeout=5,
        )
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() or "unknown"


def write_manifest(path: str, config: dict, wall_time: float, extra: Optional[dict] = None) -> dict:
    """JSON run manifest next to a results file."""
    manifest = {"config": config, "build": _git_describe(), "wall_time_s": round(wall_time, 3)}
    if extra:
        manifest.update(extra)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest
