"""
Lower bounds on the minimax risk: the Bayes risk under a Dirichlet prior and
its coefficient, the reduction from estimating p(0) on the P_c family, the
concentration of the missing mass on that family, and the minimax bracket.
"""
import math
import time
from functools import partial
from typing import Literal, Optional, Sequence

import numpy as np
from scipy.special import betaln
from scipy.stats import binom

from app.config import get_settings
from app.exceptions import InvalidArgumentError, ResourceLimitError
from app.logger import logger, log_with_context
from app.schemas import (
    BernoulliRiskReport,
    BoundReport,
    De3Report,
    DirichletSpec,
    MinimaxBracket,
    MonteCarloEstimate,
    OptimizationResult,
    clamp_nonnegative,
)
from app.services.dist import Sample, make_pc, make_rng
from app.services.estimators import OccupancyBatch
from app.services.montecarlo import RunningStats, run_blocks
from app.services.numerics import compensated_sum
from app.services.risk import gt_upper_bound_constant, maximize_coefficient


settings = get_settings()

BernoulliKind = Literal["add_half_sqrt_n", "empirical"]

MIN_BAYES_REPS = 100
MIN_BERNOULLI_GRID = 101


# Dirichlet prior

def _posterior_scale(n: int, a: float) -> float:
    """log of B(a, n) / ((a + n)^2 (a + n + 1)) without the B(a, n) factor."""
    return -2.0 * math.log(a + n) - math.log(a + n + 1.0)


def dirichlet_bayes_risk(n: int, spec: DirichletSpec) -> float:
    """
    Expected posterior variance of the missing mass under Dir(k, alpha).

    With a = k * alpha the closed form is

        B(a,n) / ((a+n)^2 (a+n+1)) * [ k alpha (a+n-alpha) / B(a-alpha, n)
                                      - k (k-1) alpha^2 / B(a-2 alpha, n) ]

    evaluated in log-space. 1/B(0, n) is taken as 0, so k = 1 gives 0 and
    k = 2 has no cross term.

    Args:
        n: Sample length (>= 1)
        spec: Symmetric prior

    Returns:
        Bayes risk of the posterior-mean estimator, a lower bound on the minimax risk
    """
    if n < 1:
        raise InvalidArgumentError(f"Sample length must be >= 1, got {n}")
    k, alpha, a = spec.k, spec.alpha, spec.a
    if k == 1:
        return 0.0
    if a - 2.0 * alpha < 0:
        raise InvalidArgumentError(f"a - 2 alpha must be nonnegative, got {a - 2.0 * alpha}")

    scale = _posterior_scale(n, a) + betaln(a, n)
    t1 = scale + math.log(k) + math.log(alpha) + math.log(a + n - alpha) - betaln(a - alpha, n)
    if k == 2:
        return clamp_nonnegative(math.exp(t1))

    t2 = scale + math.log(k) + math.log(k - 1) + 2.0 * math.log(alpha) - betaln(a - 2.0 * alpha, n)
    value = math.exp(t1) * -math.expm1(t2 - t1)
    return clamp_nonnegative(value)


def dirichlet_bayes_risk_general(n: int, alphas: Sequence[float]) -> float:
    """
    Closed form of the Bayes risk for an arbitrary Dirichlet parameter vector.

        B(a,n) / ((a+n)^2 (a+n+1)) * [ sum_u alpha_u (a+n-alpha_u) / B(a-alpha_u, n)
                                      - sum_{u != v} alpha_u alpha_v / B(a-alpha_u-alpha_v, n) ]

    Raises:
        ResourceLimitError: If len(alphas) exceeds ASYMMETRIC_DIRICHLET_MAX_K
    """
    alphas = np.asarray(alphas, dtype=np.float64).ravel()
    k = alphas.size
    if n < 1:
        raise InvalidArgumentError(f"Sample length must be >= 1, got {n}")
    if k == 0 or np.any(alphas <= 0) or not np.all(np.isfinite(alphas)):
        raise InvalidArgumentError("Dirichlet parameters must be finite and positive")
    if k > settings.ASYMMETRIC_DIRICHLET_MAX_K:
        raise ResourceLimitError(
            f"General Dirichlet form is O(k^2); k={k} exceeds {settings.ASYMMETRIC_DIRICHLET_MAX_K}"
        )
    if k == 1:
        return 0.0

    a = compensated_sum(alphas)
    log_front = _posterior_scale(n, a) + betaln(a, n)

    with np.errstate(divide="ignore"):
        single = alphas * (a + n - alphas) * np.exp(log_front - betaln(np.maximum(a - alphas, 0.0), n))
        rest = np.maximum(a - alphas[:, np.newaxis] - alphas[np.newaxis, :], 0.0)
        pair = np.outer(alphas, alphas) * np.exp(log_front - betaln(rest, n))
    np.fill_diagonal(pair, 0.0)

    return clamp_nonnegative(compensated_sum(single) - compensated_sum(pair))


def _bayes_variance_block(spec: DirichletSpec, n: int, seed: int, block: int, rows: int) -> tuple[RunningStats]:
    rng = make_rng(seed, block)
    distinct = np.zeros(rows, dtype=np.int64)
    for t in range(n):
        p_new = (spec.k - distinct) * spec.alpha / (spec.a + t)
        distinct += rng.random(rows) < p_new

    x = (spec.k - distinct) * spec.alpha
    total = spec.a + n
    return (RunningStats.from_array(x * (total - x) / (total * total * (total + 1.0))),)


def mc_bayes_variance(n: int, spec: DirichletSpec, reps: int, seed: int, threads: Optional[int] = None) -> MonteCarloEstimate:
    """
    Monte Carlo estimate of the expected posterior variance of the missing mass.

    Samples are drawn from the prior marginal by the Polya urn: after t draws
    with d distinct symbols the next draw is new with probability
    (k - d) alpha / (a + t). Only d matters, since with m = k - d unseen
    symbols the missing mass is Beta(m alpha, a + n - m alpha) a posteriori.
    """
    if n < 1:
        raise InvalidArgumentError(f"Sample length must be >= 1, got {n}")
    if reps < MIN_BAYES_REPS:
        raise InvalidArgumentError(f"Need at least {MIN_BAYES_REPS} replicates, got {reps}")

    start_time = time.time()
    (stats,) = run_blocks(partial(_bayes_variance_block, spec, n, seed), reps, n, threads)

    log_with_context(
        logger,
        "info",
        "Bayes variance simulated",
        n=n,
        k=spec.k,
        alpha=spec.alpha,
        reps=reps,
        mean=stats.mean,
        stderr=stats.stderr,
        processing_time_ms=f"{(time.time() - start_time) * 1000:.2f}",
    )
    return MonteCarloEstimate(mean=stats.mean, stderr=stats.stderr, reps=stats.count)


def dirichlet_lower_bound(n: int, c: float) -> BoundReport:
    """Bayes-risk lower bound with alpha = 1/n and k = ceil(c n^2), so that a = c n."""
    if c <= 0:
        raise InvalidArgumentError(f"c must be positive, got {c}")
    if n < 1:
        raise InvalidArgumentError(f"Sample length must be >= 1, got {n}")
    spec = DirichletSpec(k=max(1, math.ceil(round(c * n * n, 9))), alpha=1.0 / n)
    return BoundReport.build(
        n,
        "dirichlet_prior",
        dirichlet_bayes_risk(n, spec),
        provenance="Bayes risk of the posterior mean under a symmetric Dirichlet prior",
        c=c,
        k=spec.k,
        alpha=spec.alpha,
        coefficient=dirichlet_coefficient(c),
    )


def _dirichlet_coefficient(c):
    c = np.asarray(c, dtype=np.float64)
    return c / (c + 1.0) ** 3


def dirichlet_coefficient(c: float) -> float:
    """Limit of n * Bayes risk for a = c n: c / (c + 1)^3."""
    if c <= 0:
        raise InvalidArgumentError(f"c must be positive, got {c}")
    return float(_dirichlet_coefficient(c))


def maximize_dirichlet_coefficient() -> OptimizationResult:
    """Maximize c / (c + 1)^3; the maximum is 4/27 at c = 1/2."""
    return maximize_coefficient("dirichlet", dirichlet_coefficient, _dirichlet_coefficient)


# Reduction to the P_c family

def bernoulli_worst_case_risk(
    n: int,
    estimator_kind: BernoulliKind = "empirical",
    grid_size: int = 1001,
    interval: tuple[float, float] = (0.5, 1.0),
) -> BernoulliRiskReport:
    """
    Worst-case squared error of a Bernoulli parameter estimator over a grid.

    The risk at each grid point is the exact binomial expectation. The
    empirical estimator X/n peaks at the point of the interval closest to 1/2;
    (X + sqrt(n)/2) / (n + sqrt(n)) has constant risk 1 / (4 (1 + sqrt(n))^2).
    """
    if n < 1:
        raise InvalidArgumentError(f"Sample length must be >= 1, got {n}")
    if grid_size < MIN_BERNOULLI_GRID:
        raise InvalidArgumentError(f"Grid needs at least {MIN_BERNOULLI_GRID} points, got {grid_size}")
    low, high = interval
    if not 0.0 <= low <= high <= 1.0:
        raise InvalidArgumentError(f"Interval must lie in [0, 1], got {interval}")

    counts = np.arange(n + 1, dtype=np.float64)
    root = math.sqrt(n)
    if estimator_kind == "empirical":
        estimates = counts / n
        closest = min(max(0.5, low), high)
        reference = closest * (1.0 - closest) / n
    elif estimator_kind == "add_half_sqrt_n":
        estimates = (counts + root / 2.0) / (n + root)
        reference = 1.0 / (4.0 * (1.0 + root) ** 2)
    else:
        raise InvalidArgumentError(f"Unknown Bernoulli estimator '{estimator_kind}'")

    grid = np.linspace(low, high, grid_size)
    chunk = max(1, settings.MC_BLOCK_ELEMENTS // (n + 1))
    risks = np.empty(grid_size, dtype=np.float64)
    for start in range(0, grid_size, chunk):
        p = grid[start:start + chunk, np.newaxis]
        pmf = binom.pmf(counts[np.newaxis, :], n, p)
        risks[start:start + chunk] = np.sum(pmf * (estimates[np.newaxis, :] - p) ** 2, axis=1)

    worst = int(np.argmax(risks))
    return BernoulliRiskReport(
        n=n,
        estimator_kind=estimator_kind,
        interval=(low, high),
        p_worst=float(grid[worst]),
        risk=float(risks[worst]),
        normalized=n * float(risks[worst]),
        reference=reference,
    )


def _replace_ones(bits: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    tails = rng.integers(1, k + 1, size=bits.shape, dtype=np.int64)
    return np.where(bits, tails, 0)


def reduce_to_pc(bits, k: int, seed: int) -> Sample:
    """
    Turn a Bernoulli sample into a sample from the P_c family.

    Each 1 is replaced by a uniform draw from {1..k}, so a Bernoulli(1 - p0)
    sample becomes an i.i.d. sample from make_pc(p0, k).
    """
    bits = np.asarray(bits, dtype=np.int64).ravel()
    if k < 1:
        raise InvalidArgumentError(f"P_c family needs k >= 1 tail symbols, got {k}")
    if np.any((bits != 0) & (bits != 1)):
        raise InvalidArgumentError("Bernoulli sample must contain only 0 and 1")
    return Sample(_replace_ones(bits.astype(bool), k, make_rng(seed)), k + 1)


def _de3_block(
    probs: np.ndarray,
    p0: float,
    k: int,
    n: int,
    gap_bound: float,
    seed: int,
    block: int,
    rows: int,
) -> tuple[RunningStats, RunningStats, RunningStats]:
    rng = make_rng(seed, block)
    bits = rng.random((rows, n)) >= p0
    batch = OccupancyBatch.from_draws(_replace_ones(bits, k, rng))
    m0 = batch.missing_mass(probs)
    gap = np.abs(m0 - (1.0 - p0))
    violated = gap > gap_bound + 1e-12
    zero_seen = batch.sorted_draws[:, 0] == 0

    return (
        RunningStats.from_array(violated.astype(np.float64)),
        RunningStats.from_array(gap[~violated]),
        RunningStats.from_array(m0[zero_seen]),
    )


def de3_check(n: int, p0: float, reps: int, seed: int, threads: Optional[int] = None) -> De3Report:
    """
    Simulate the missing mass on the P_c family with k = ceil(e^n) tail symbols.

    Whenever symbol 0 is seen, p0 <= 1 - M0 <= p0 + (1 - p0) n e^-n, so
    |M0 - (1 - p0)| exceeds (1 - p0) n e^-n only when symbol 0 is missing,
    which has probability (1 - p0)^n <= 2^-n.
    """
    if not settings.DE3_MIN_N <= n <= settings.DE3_MAX_N:
        raise InvalidArgumentError(f"n must lie in [{settings.DE3_MIN_N}, {settings.DE3_MAX_N}], got {n}")
    if not 0.5 <= p0 <= 1.0:
        raise InvalidArgumentError(f"p0 must lie in [1/2, 1], got {p0}")
    if reps < 1:
        raise InvalidArgumentError(f"Replicate count must be >= 1, got {reps}")

    start_time = time.time()
    k = math.ceil(math.exp(n))
    d = make_pc(p0, k)
    gap_bound = (1.0 - p0) * n * math.exp(-n)

    task = partial(_de3_block, d.probs, p0, k, n, gap_bound, seed)
    violations, gaps, seen = run_blocks(task, reps, n, threads)

    log_with_context(
        logger,
        "info",
        "Missing-mass concentration simulated",
        n=n,
        p0=p0,
        k=k,
        reps=reps,
        violation_rate=violations.mean,
        processing_time_ms=f"{(time.time() - start_time) * 1000:.2f}",
    )
    return De3Report(
        n=n,
        p0=p0,
        k=k,
        reps=reps,
        seed=seed,
        violation_rate=violations.mean,
        stderr=violations.stderr,
        probability_bound=2.0 ** -n,
        max_gap=gaps.max if gaps.count else 0.0,
        gap_bound=gap_bound,
        min_m0_seen=seen.min if seen.count else None,
        max_m0_seen=seen.max if seen.count else None,
    )


def minimax_bracket(n: int) -> MinimaxBracket:
    """0.25/n from the reduction and (0.25 + e^-1)/n from Good-Turing."""
    if n < 1:
        raise InvalidArgumentError(f"Sample length must be >= 1, got {n}")
    return MinimaxBracket(
        lower=BoundReport.build(
            n,
            "reduction",
            0.25 / n,
            side="lower",
            provenance="estimating p(0) on the P_c family reduces to a Bernoulli problem with minimax risk 1/(4n)",
        ),
        upper=BoundReport.build(
            n,
            "bracket",
            gt_upper_bound_constant() / n,
            side="upper",
            provenance="worst-case risk of the Good-Turing estimator",
        ),
    )
