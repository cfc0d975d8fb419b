"""
Exact and asymptotic squared-error risk of the Good-Turing estimator, the
uniform-family coefficient and its maximizer, the upper-bound constant,
brute-force oracles and the pair/univariate inequality verifiers.
"""
import math
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional

import numpy as np
from scipy.stats import binom

from app.config import get_settings
from app.exceptions import BoundViolationError, InvalidArgumentError, ResourceLimitError
from app.logger import logger, log_with_context
from app.schemas import InequalityCheck, OptimizationResult, RiskReport
from app.services.dist import Distribution, ceil_cn
from app.services.estimators import Estimator, OccupancyBatch
from app.services.numerics import (
    central_difference,
    compensated_sum,
    grid_scan,
    log_factorial_ratio,
    maximize_log_scalar,
    pow1m,
)


settings = get_settings()

PairBase = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
PairWeight = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]

BRUTE_FORCE_CHUNK = 1 << 16


def _classes(d: Distribution, group_classes: bool) -> tuple[np.ndarray, np.ndarray]:
    """Positive probability values with multiplicities (all ones when not grouped)."""
    if group_classes:
        return d.probability_classes
    values = d.probs[d.probs > 0]
    return values, np.ones(values.size, dtype=np.int64)


def _pair_sums(
    values: np.ndarray,
    multiplicities: np.ndarray,
    base: PairBase,
    weights: dict[str, PairWeight],
    workers: Optional[int] = None,
) -> dict[str, float]:
    """
    Sums over ordered pairs u != v of base(p(u), p(v), s) * weight(p(u), p(v), s), s = p(u) + p(v).

    Symbols are grouped into probability classes: two classes a != b contribute
    m_a * m_b pairs, a class with itself m_a * (m_a - 1). Row sums are merged
    with a correctly rounded sum in index order, so the result does not depend
    on the chunking or the worker count.
    """
    size = values.size
    if size == 0:
        return {name: 0.0 for name in weights}

    chunk = max(1, settings.PAIR_SUM_CHUNK)
    workers = workers or settings.PAIR_SUM_WORKERS
    mult = multiplicities.astype(np.float64)

    def rows(start: int) -> dict[str, np.ndarray]:
        stop = min(start + chunk, size)
        pu = values[start:stop, np.newaxis]
        pv = values[np.newaxis, :]
        counts = mult[start:stop, np.newaxis] * mult[np.newaxis, :]
        local = np.arange(stop - start)
        counts[local, start + local] = mult[start:stop] * (mult[start:stop] - 1.0)
        s = pu + pv
        kernel = counts * base(pu, pv, s)
        return {name: np.sum(kernel * weight(pu, pv, s), axis=1) for name, weight in weights.items()}

    starts = range(0, size, chunk)
    if workers > 1 and size > chunk:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            parts = list(executor.map(rows, starts))
    else:
        parts = [rows(start) for start in starts]

    return {
        name: compensated_sum(np.concatenate([part[name] for part in parts]))
        for name in weights
    }


def _pair_kernel(n: int) -> PairBase:
    """P(u, v) = p(u) p(v) (1 - p(u) - p(v))^(n-2)."""
    return lambda pu, pv, s: pu * pv * pow1m(s, n - 2)


def _class_sum(multiplicities: np.ndarray, terms: np.ndarray) -> float:
    return compensated_sum(multiplicities * terms)


def _require_n(n: int, minimum: int) -> None:
    if n < minimum:
        raise InvalidArgumentError(f"Sample length must be >= {minimum}, got {n}")


def exact_risk_gt(
    d: Distribution,
    n: int,
    group_classes: bool = True,
    workers: Optional[int] = None,
) -> RiskReport:
    """
    Exact risk of the Good-Turing estimator.

    R = (1/n) sum_{u != v} P(u,v) [n (p(u)+p(v))^2 - 1]
        + (1/n) sum_u [p(u)(1-p(u))^(n-1) + n p(u)^2 (1-p(u))^n]

    Args:
        d: Distribution
        n: Sample length (>= 2)
        group_classes: Sum over probability classes instead of individual symbols
        workers: Thread workers for the pair sum

    Returns:
        RiskReport with the term breakdown in aux
    """
    _require_n(n, 2)
    start_time = time.time()
    values, mult = _classes(d, group_classes)

    pairs = _pair_sums(
        values,
        mult,
        _pair_kernel(n),
        {
            "pair_term": lambda pu, pv, s: (n * s * s - 1.0) / n,
            "decay": lambda pu, pv, s: s * s,
            "kernel": lambda pu, pv, s: 1.0,
        },
        workers=workers,
    )
    first_moment = _class_sum(mult, values * pow1m(values, n - 1))
    second_moment = _class_sum(mult, n * values * values * pow1m(values, n))
    diagonal_term = (first_moment + second_moment) / n
    risk = pairs["pair_term"] + diagonal_term

    log_with_context(
        logger,
        "debug",
        "Exact Good-Turing risk computed",
        distribution=d.label,
        n=n,
        classes=int(values.size),
        processing_time_ms=f"{(time.time() - start_time) * 1000:.2f}",
    )

    return RiskReport.build(
        n,
        d.label,
        "exact",
        risk,
        pair_term=pairs["pair_term"],
        diagonal_term=diagonal_term,
        first_moment_term=first_moment,
        second_moment_term=second_moment,
        decay_term=n * pairs["decay"],
        pair_kernel_sum=pairs["kernel"],
    )


def exact_risk_gt_uniform(k: int, n: int) -> RiskReport:
    """
    Exact Good-Turing risk on the uniform distribution over k symbols in O(1).

    All k(k-1) ordered pairs share one term and all k symbols share one diagonal term.
    """
    _require_n(n, 2)
    if k < 1:
        raise InvalidArgumentError(f"Uniform distribution needs k >= 1, got {k}")
    p = 1.0 / k
    pair = k * (k - 1) * p * p * float(pow1m(2.0 * p, n - 2)) * (n * 4.0 * p * p - 1.0) / n
    diagonal = k * (p * float(pow1m(p, n - 1)) + n * p * p * float(pow1m(p, n))) / n
    return RiskReport.build(n, f"uniform:{k}", "closed_form_uniform", pair + diagonal,
                            pair_term=pair, diagonal_term=diagonal)


def uniform_family_risk(c: float, n: int) -> RiskReport:
    """Exact risk on the uniform distribution with k = ceil(c*n) symbols."""
    if c <= 0:
        raise InvalidArgumentError(f"c must be positive, got {c}")
    k = ceil_cn(c, n)
    report = exact_risk_gt_uniform(k, n)
    return report.model_copy(update={"dist_descriptor": f"uniform-cn:{c!r}:{k}"})


def expected_occupancy(d: Distribution, n: int, i: int) -> float:
    """E[Phi_i] = sum_u C(n, i) p(u)^i (1 - p(u))^(n-i)."""
    if n < 1 or i < 0:
        raise InvalidArgumentError(f"Need n >= 1 and i >= 0, got n={n}, i={i}")
    values, mult = d.probability_classes
    return _class_sum(mult, binom.pmf(i, n, values))


def expected_phi1_squared(d: Distribution, n: int, workers: Optional[int] = None) -> float:
    """E[Phi_1^2] = E[Phi_1] + n(n-1) sum_{u != v} P(u, v)."""
    _require_n(n, 2)
    values, mult = d.probability_classes
    pairs = _pair_sums(values, mult, _pair_kernel(n), {"kernel": lambda pu, pv, s: 1.0}, workers=workers)
    return expected_occupancy(d, n, 1) + n * (n - 1) * pairs["kernel"]


def asymptotic_risk_gt(d: Distribution, n: int, workers: Optional[int] = None) -> RiskReport:
    """
    Main term of the Good-Turing risk: (1/n) E[2 Phi_2/n + (Phi_1/n)(1 - Phi_1/n)].

    The moments are evaluated exactly from their closed forms.
    """
    _require_n(n, 2)
    e_phi1 = expected_occupancy(d, n, 1)
    e_phi2 = expected_occupancy(d, n, 2)
    e_phi1_sq = expected_phi1_squared(d, n, workers=workers)
    main = 2.0 * e_phi2 / n + e_phi1 / n - e_phi1_sq / (n * n)
    return RiskReport.build(n, d.label, "asymptotic", main / n,
                            expected_phi1=e_phi1, expected_phi2=e_phi2, expected_phi1_squared=e_phi1_sq)


def exact_bias_gt(d: Distribution, n: int) -> float:
    """E[Phi_1/n] - E[M0] = sum_u p(u)^2 (1 - p(u))^(n-1)."""
    _require_n(n, 1)
    values, mult = d.probability_classes
    return _class_sum(mult, values * values * pow1m(values, n - 1))


def _uniform_coefficient(c):
    c = np.asarray(c, dtype=np.float64)
    return (1.0 / c + 1.0) * np.exp(-1.0 / c) - np.exp(-2.0 / c)


def uniform_coefficient(c: float) -> float:
    """Limit of n * risk on the uniform distribution with cn symbols: (1/c + 1) e^(-1/c) - e^(-2/c)."""
    if c <= 0:
        raise InvalidArgumentError(f"c must be positive, got {c}")
    return float(_uniform_coefficient(c))


def maximize_coefficient(target: str, coefficient: Callable, vectorized: Callable) -> OptimizationResult:
    """Golden-section maximization on log c, verified by a grid scan over the same interval."""
    start_time = time.time()
    c_star, value = maximize_log_scalar(
        coefficient, settings.OPTIMIZE_LOWER, settings.OPTIMIZE_UPPER, settings.GOLDEN_TOL
    )
    grid_c, grid_value = grid_scan(
        vectorized, settings.OPTIMIZE_LOWER, settings.OPTIMIZE_UPPER, settings.GRID_RESOLUTION
    )
    unimodal_ok = abs(grid_c - c_star) <= 2 * settings.GRID_RESOLUTION and grid_value <= value + 1e-12
    if not unimodal_ok:
        log_with_context(
            logger,
            "warning",
            "Grid scan disagrees with golden-section maximizer",
            target=target,
            c_star=c_star,
            grid_c=grid_c,
        )

    log_with_context(
        logger,
        "info",
        "Coefficient maximized",
        target=target,
        c_star=c_star,
        value=value,
        processing_time_ms=f"{(time.time() - start_time) * 1000:.2f}",
    )
    return OptimizationResult(
        target=target,
        c_star=c_star,
        value=value,
        grid_c=grid_c,
        grid_value=grid_value,
        unimodal_ok=unimodal_ok,
        derivative=central_difference(coefficient, c_star),
    )


def maximize_uniform_coefficient() -> OptimizationResult:
    """Maximize (1/c + 1) e^(-1/c) - e^(-2/c) over c in [1e-2, 1e2]."""
    return maximize_coefficient("gt-uniform", uniform_coefficient, _uniform_coefficient)


def gt_upper_bound_constant() -> float:
    """0.25 + e^-1: the normalized worst-case risk bound of Good-Turing."""
    return 0.25 + math.exp(-1.0)


def brute_force_risk(d: Distribution, n: int, e: Estimator) -> RiskReport:
    """
    Exact risk of any estimator by enumerating every sequence of length n.

    Zero-probability symbols are skipped (their sequences have weight 0).

    Raises:
        ResourceLimitError: If the number of sequences exceeds BRUTE_FORCE_LIMIT
    """
    _require_n(n, 1)
    support = np.flatnonzero(d.probs > 0)
    k = int(support.size)
    total = k ** n
    if total > settings.BRUTE_FORCE_LIMIT:
        raise ResourceLimitError(
            f"Brute force needs {k}^{n} = {total} sequences, limit is {settings.BRUTE_FORCE_LIMIT}"
        )

    start_time = time.time()
    place_values = k ** np.arange(n, dtype=np.int64)
    partials = []
    for start in range(0, total, BRUTE_FORCE_CHUNK):
        index = np.arange(start, min(start + BRUTE_FORCE_CHUNK, total), dtype=np.int64)
        symbols = support[(index[:, np.newaxis] // place_values) % k]
        weights = np.prod(d.probs[symbols], axis=1)
        batch = OccupancyBatch.from_draws(symbols)
        errors = e.estimate_batch(batch) - batch.missing_mass(d.probs)
        partials.append(compensated_sum(weights * errors * errors))
    risk = compensated_sum(partials)

    log_with_context(
        logger,
        "debug",
        "Brute-force risk computed",
        distribution=d.label,
        estimator=e.name,
        n=n,
        sequences=total,
        processing_time_ms=f"{(time.time() - start_time) * 1000:.2f}",
    )
    return RiskReport.build(n, d.label, "brute_force", risk, estimator=e.name, sequences=total)


def _check(lhs: float, bound: float, what: str, strict: bool) -> InequalityCheck:
    holds = lhs <= bound * (1.0 + settings.INEQUALITY_RTOL)
    if strict and not holds:
        raise BoundViolationError(f"{what}: lhs {lhs!r} exceeds bound {bound!r}")
    return InequalityCheck(lhs=lhs, bound=bound, holds=holds)


def lemma2_check(d: Distribution, i: int, j: int, n: int, strict: bool = True) -> InequalityCheck:
    """
    sum_{u != v} p(u)^i p(v)^j (1 - p(u) - p(v))^n <= (i-1)! (j-1)! n! / (n+i+j-2)!

    With strict=False a violation is reported as holds=False instead.

    Raises:
        BoundViolationError: If strict and the inequality fails beyond the relative slack
    """
    if i < 1 or j < 1 or n < 0:
        raise InvalidArgumentError(f"Need i, j >= 1 and n >= 0, got i={i}, j={j}, n={n}")
    values, mult = d.probability_classes
    pairs = _pair_sums(
        values,
        mult,
        lambda pu, pv, s: pu**i * pv**j * pow1m(s, n),
        {"lhs": lambda pu, pv, s: 1.0},
    )
    bound = math.exp(log_factorial_ratio([i - 1, j - 1, n], [n + i + j - 2]))
    return _check(pairs["lhs"], bound, f"pair inequality (i={i}, j={j}, n={n})", strict)


def lemma1_check(d: Distribution, i: int, n: int, strict: bool = True) -> InequalityCheck:
    """
    sum_u p(u)^i (1 - p(u))^n <= (i-1)! n! / (n+i-1)!

    With strict=False a violation is reported as holds=False instead.

    Raises:
        BoundViolationError: If strict and the inequality fails beyond the relative slack
    """
    if i < 1 or n < 0:
        raise InvalidArgumentError(f"Need i >= 1 and n >= 0, got i={i}, n={n}")
    values, mult = d.probability_classes
    lhs = _class_sum(mult, values**i * pow1m(values, n))
    bound = math.exp(log_factorial_ratio([i - 1, n], [n + i - 1]))
    return _check(lhs, bound, f"univariate inequality (i={i}, n={n})", strict)


def second_moment_term(d: Distribution, n: int, strict: bool = True) -> InequalityCheck:
    """sum_u n p(u)^2 (1 - p(u))^n <= e^-1; see lemma1_check for strict."""
    _require_n(n, 1)
    values, mult = d.probability_classes
    lhs = _class_sum(mult, n * values * values * pow1m(values, n))
    return _check(lhs, math.exp(-1.0), f"second moment term (n={n})", strict)


def eq20_decay(d: Distribution, n: int) -> float:
    """n * sum_{u != v} P(u, v) (p(u) + p(v))^2; vanishes as n grows."""
    _require_n(n, 2)
    values, mult = d.probability_classes
    pairs = _pair_sums(values, mult, _pair_kernel(n), {"decay": lambda pu, pv, s: s * s})
    return n * pairs["decay"]
