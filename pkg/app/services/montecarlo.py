"""
Monte Carlo engine for the risk and bias of any estimator on any distribution.

Replicates are drawn in blocks whose sizes depend only on (reps, n). Block b
always uses the substream (seed, *key, b) and blocks are merged in index
order, so results are bit-identical for any worker count or memory setting.
"""
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from functools import partial
from typing import Callable, Literal, Optional, Sequence

import numpy as np

from app.config import get_settings
from app.exceptions import InvalidArgumentError
from app.logger import logger, log_with_context
from app.schemas import RiskReport, SimConfig, SweepAxis, SweepRow, UniformCnDescriptor
from app.services.dist import Distribution, draw_matrix, from_descriptor, make_rng, with_k
from app.services.estimators import Estimator, OccupancyBatch, parse_estimator
from app.services.risk import asymptotic_risk_gt, brute_force_risk, exact_risk_gt


settings = get_settings()

EvaluationMethod = Literal["exact", "asymptotic", "mc", "brute"]
BlockTask = Callable[[int, int], tuple["RunningStats", ...]]

# Substream layout; changing these changes every seeded result.
SEED_BLOCK_ROWS = 4096
SEED_BLOCK_ELEMENTS = 2**22


@dataclass
class RunningStats:
    """Streaming count, mean, sum of squared deviations, min and max."""
    count: int = 0
    mean: float = 0.0
    m2: float = 0.0
    min: float = math.inf
    max: float = -math.inf

    def update(self, value: float) -> None:
        """Welford update with one observation."""
        value = float(value)
        self.count += 1
        delta = value - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (value - self.mean)
        self.min = min(self.min, value)
        self.max = max(self.max, value)

    @classmethod
    def from_array(cls, values: np.ndarray) -> "RunningStats":
        values = np.asarray(values, dtype=np.float64).ravel()
        if values.size == 0:
            return cls()
        mean = float(np.mean(values))
        return cls(
            count=int(values.size),
            mean=mean,
            m2=float(np.sum((values - mean) ** 2)),
            min=float(values.min()),
            max=float(values.max()),
        )

    def merge(self, other: "RunningStats") -> "RunningStats":
        """Statistics of the concatenated streams (parallel-variance combination)."""
        if other.count == 0:
            return RunningStats(**asdict(self))
        if self.count == 0:
            return RunningStats(**asdict(other))
        count = self.count + other.count
        delta = other.mean - self.mean
        return RunningStats(
            count=count,
            mean=self.mean + delta * other.count / count,
            m2=self.m2 + other.m2 + delta * delta * self.count * other.count / count,
            min=min(self.min, other.min),
            max=max(self.max, other.max),
        )

    @property
    def variance(self) -> float:
        if self.count < 2:
            return 0.0
        return max(self.m2, 0.0) / (self.count - 1)

    @property
    def stderr(self) -> float:
        if self.count < 2:
            return 0.0
        return math.sqrt(self.variance / self.count)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["variance"] = self.variance
        data["stderr"] = self.stderr
        return data


def block_plan(reps: int, n: int) -> list[int]:
    """
    Rows per seeded block for reps replicates of length n.

    A fixed function of (reps, n): settings and worker count never change which
    replicates share a substream.
    """
    if reps < 1:
        raise InvalidArgumentError(f"Replicate count must be >= 1, got {reps}")
    rows = min(SEED_BLOCK_ROWS, max(1, SEED_BLOCK_ELEMENTS // max(n, 1)))
    full, rest = divmod(reps, rows)
    return [rows] * full + ([rest] if rest else [])


def dispatch_plan(plan: list[int], n: int, threads: int) -> list[list[tuple[int, int]]]:
    """
    Group consecutive (block, rows) pairs into dispatch chunks.

    A chunk draws at most MC_BLOCK_ELEMENTS values unless a single block is
    larger, and there are at least as many chunks as workers when possible.
    """
    per_chunk = max(1, settings.MC_BLOCK_ELEMENTS // (plan[0] * max(n, 1)))
    per_chunk = min(per_chunk, max(1, math.ceil(len(plan) / threads)))
    blocks = list(enumerate(plan))
    return [blocks[i:i + per_chunk] for i in range(0, len(blocks), per_chunk)]


def _run_chunk(task: BlockTask, chunk: list[tuple[int, int]]) -> list[tuple[RunningStats, ...]]:
    return [task(block, rows) for block, rows in chunk]


def run_blocks(task: BlockTask, reps: int, n: int, threads: Optional[int] = None) -> tuple[RunningStats, ...]:
    """
    Run task(block, rows) over the block plan and merge the results in block order.

    The task must be picklable (a module-level function or a partial of one)
    when more than one worker is used.
    """
    plan = block_plan(reps, n)
    threads = threads or settings.MC_THREADS
    chunks = dispatch_plan(plan, n, threads)
    if threads > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=min(threads, len(chunks))) as executor:
            results = list(executor.map(partial(_run_chunk, task), chunks))
    else:
        results = [_run_chunk(task, chunk) for chunk in chunks]

    parts = [part for chunk_parts in results for part in chunk_parts]
    merged = parts[0]
    for part in parts[1:]:
        merged = tuple(left.merge(right) for left, right in zip(merged, part))
    return merged


def _error_block(
    d: Distribution,
    n: int,
    estimator: Estimator,
    squared: bool,
    seed: int,
    key: tuple[int, ...],
    block: int,
    rows: int,
) -> tuple[RunningStats]:
    rng = make_rng(seed, *key, block)
    batch = OccupancyBatch.from_draws(draw_matrix(d, rows, n, rng))
    errors = estimator.estimate_batch(batch) - batch.missing_mass(d.probs)
    return (RunningStats.from_array(errors * errors if squared else errors),)


def simulate(cfg: SimConfig, squared: bool = True, key: tuple[int, ...] = ()) -> RunningStats:
    """
    Streaming statistics of the estimation error over cfg.reps replicates.

    Args:
        cfg: Simulation configuration
        squared: Accumulate squared errors (risk) instead of signed errors (bias)
        key: Extra substream key, used by sweeps to separate rows

    Returns:
        Merged RunningStats
    """
    d = from_descriptor(cfg.dist, cfg.n)
    estimator = parse_estimator(cfg.estimator)
    d.sampler  # build once before the distribution is shipped to workers

    start_time = time.time()
    log_with_context(
        logger,
        "info",
        "Monte Carlo run started",
        distribution=d.label,
        estimator=estimator.name,
        n=cfg.n,
        reps=cfg.reps,
        seed=cfg.seed,
        quantity="risk" if squared else "bias",
    )

    task = partial(_error_block, d, cfg.n, estimator, squared, cfg.seed, tuple(key))
    (stats,) = run_blocks(task, cfg.reps, cfg.n, cfg.threads)

    log_with_context(
        logger,
        "info",
        "Monte Carlo run finished",
        distribution=d.label,
        mean=stats.mean,
        stderr=stats.stderr,
        processing_time_ms=f"{(time.time() - start_time) * 1000:.2f}",
    )
    return stats


def mc_risk(cfg: SimConfig) -> tuple[float, float, RunningStats]:
    """Mean squared error over the replicates with its standard error."""
    stats = simulate(cfg, squared=True)
    return stats.mean, stats.stderr, stats


def mc_bias(cfg: SimConfig) -> tuple[float, float]:
    """Mean signed error (estimate - missing mass) with its standard error."""
    stats = simulate(cfg, squared=False)
    return stats.mean, stats.stderr


def mc_risk_report(cfg: SimConfig, key: tuple[int, ...] = ()) -> RiskReport:
    stats = simulate(cfg, squared=True, key=key)
    d = from_descriptor(cfg.dist, cfg.n)
    return RiskReport.build(
        cfg.n,
        d.label,
        "monte_carlo",
        stats.mean,
        stderr=stats.stderr,
        reps=stats.count,
        seed=cfg.seed,
        estimator=cfg.estimator,
    )


def evaluate_risk(cfg: SimConfig, method: EvaluationMethod, key: tuple[int, ...] = ()) -> RiskReport:
    """
    Risk of cfg's estimator on cfg's distribution by the selected method.

    exact and asymptotic are closed forms for Good-Turing only; mc and brute
    work for any estimator.
    """
    if method in ("exact", "asymptotic") and cfg.estimator != "gt":
        raise InvalidArgumentError(f"Method '{method}' is only available for the Good-Turing estimator")

    match method:
        case "exact":
            return exact_risk_gt(from_descriptor(cfg.dist, cfg.n), cfg.n)
        case "asymptotic":
            return asymptotic_risk_gt(from_descriptor(cfg.dist, cfg.n), cfg.n)
        case "brute":
            return brute_force_risk(from_descriptor(cfg.dist, cfg.n), cfg.n, parse_estimator(cfg.estimator))
        case "mc":
            return mc_risk_report(cfg, key=key)
    raise InvalidArgumentError(f"Unknown risk method '{method}'")


def _sweep_config(base: SimConfig, axis: SweepAxis, value: float) -> SimConfig:
    match axis:
        case "n":
            if value != int(value) or value < 1:
                raise InvalidArgumentError(f"Sweep over n needs positive integers, got {value}")
            return base.model_copy(update={"n": int(value)})
        case "k":
            if value != int(value) or value < 1:
                raise InvalidArgumentError(f"Sweep over k needs positive integers, got {value}")
            return base.model_copy(update={"dist": with_k(base.dist, int(value))})
        case "c":
            if value <= 0:
                raise InvalidArgumentError(f"Sweep over c needs positive values, got {value}")
            return base.model_copy(update={"dist": UniformCnDescriptor(c=value)})
    raise InvalidArgumentError(f"Unknown sweep axis '{axis}'")


def mc_sweep(
    base: SimConfig,
    axis: SweepAxis,
    values: Sequence[float],
    method: EvaluationMethod = "mc",
) -> list[SweepRow]:
    """
    One risk evaluation per value of the swept parameter.

    Row i of a Monte Carlo sweep uses the substream key (i,), so rows are
    independent of each other and of the order they run in.

    Raises:
        InvalidArgumentError: If values is empty
    """
    if len(values) == 0:
        raise InvalidArgumentError("Sweep needs at least one value")

    start_time = time.time()
    rows = []
    for index, value in enumerate(values):
        cfg = _sweep_config(base, axis, value)
        report = evaluate_risk(cfg, method, key=(index,))
        rows.append(
            SweepRow(
                axis=axis,
                value=float(value),
                n=cfg.n,
                method=report.method,
                risk=report.risk,
                normalized_risk=report.normalized_risk,
                stderr=report.aux.get("stderr"),
            )
        )

    log_with_context(
        logger,
        "info",
        "Sweep finished",
        axis=axis,
        method=method,
        rows=len(rows),
        processing_time_ms=f"{(time.time() - start_time) * 1000:.2f}",
    )
    return rows
