"""
Numerical helpers shared by the exact evaluators and the optimizers.
"""
import math
from typing import Callable, Iterable

import numpy as np
from scipy import optimize

from app.exceptions import InvalidArgumentError


def pow1m(x, m: float) -> np.ndarray:
    """
    Evaluate (1 - x)^m as exp(m * log1p(-x)).

    Values of x at or above 1 give 0 for m > 0 and 1 for m == 0 (0^0 = 1).

    Args:
        x: Scalar or array in [0, 1]
        m: Nonnegative exponent

    Returns:
        Array of the same shape as x
    """
    x = np.minimum(np.asarray(x, dtype=np.float64), 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        powered = np.exp(m * np.log1p(-x))
    saturated = 1.0 if m == 0 else 0.0
    return np.where(x >= 1.0, saturated, powered)


def compensated_sum(values: Iterable[float] | np.ndarray) -> float:
    """Correctly rounded sum (Shewchuk partials via math.fsum)."""
    if isinstance(values, np.ndarray):
        return math.fsum(values.ravel().tolist())
    return math.fsum(values)


def log_factorial_ratio(numerator: Iterable[int], denominator: Iterable[int]) -> float:
    """log of prod(m! for m in numerator) / prod(m! for m in denominator) via lgamma."""
    return (
        sum(math.lgamma(m + 1) for m in numerator)
        - sum(math.lgamma(m + 1) for m in denominator)
    )


def maximize_log_scalar(
    func: Callable[[float], float],
    lower: float,
    upper: float,
    tol: float,
) -> tuple[float, float]:
    """
    Maximize a unimodal function of c > 0 by golden-section search on log c.

    The bracket is (log lower, log sqrt(lower*upper), log upper); the midpoint
    must beat both ends.

    Args:
        func: Scalar function of c
        lower: Lower end of the search interval
        upper: Upper end of the search interval
        tol: Relative tolerance on log c

    Returns:
        (c_star, func(c_star))

    Raises:
        InvalidArgumentError: If the interval does not bracket a maximum
    """
    if not 0 < lower < upper:
        raise InvalidArgumentError(f"Search interval must satisfy 0 < lower < upper, got [{lower}, {upper}]")

    def negated(t: float) -> float:
        return -float(func(math.exp(t)))

    bracket = (math.log(lower), 0.5 * (math.log(lower) + math.log(upper)), math.log(upper))
    try:
        t_star, neg_value, _ = optimize.golden(negated, brack=bracket, tol=tol, full_output=True)
    except ValueError as e:
        raise InvalidArgumentError(f"Golden-section search failed: {str(e)}")

    return math.exp(t_star), -float(neg_value)


def grid_scan(
    func: Callable[[np.ndarray], np.ndarray],
    lower: float,
    upper: float,
    resolution: float,
) -> tuple[float, float]:
    """
    Evaluate a vectorized function on an evenly spaced grid and return its best point.

    Returns:
        (c at the grid maximum, value there)
    """
    grid = np.arange(lower, upper + 0.5 * resolution, resolution)
    values = np.asarray(func(grid), dtype=np.float64)
    best = int(np.argmax(values))
    return float(grid[best]), float(values[best])


def central_difference(func: Callable[[float], float], x: float, rel_step: float = 1e-5) -> float:
    """Central finite-difference derivative of func at x."""
    h = rel_step * max(abs(x), 1.0)
    return (float(func(x + h)) - float(func(x - h))) / (2.0 * h)
