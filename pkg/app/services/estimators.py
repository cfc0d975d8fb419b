"""
Occupancy profiles and the missing-mass estimators: Good-Turing and the
posterior mean under a symmetric Dirichlet prior.
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from app.exceptions import DescriptorError, InvalidArgumentError
from app.schemas import DirichletSpec, OccupancyProfile
from app.services.dist import Sample


@dataclass(frozen=True, eq=False)
class OccupancyBatch:
    """
    Run-length view of a batch of samples of common length n.

    Each row is sorted; a run is a maximal block of equal symbols in a row,
    so a run of length i is a symbol seen exactly i times in that row.
    """
    n: int
    rows: int
    sorted_draws: np.ndarray
    run_rows: np.ndarray
    run_symbols: np.ndarray
    run_lengths: np.ndarray

    @classmethod
    def from_draws(cls, draws: np.ndarray) -> "OccupancyBatch":
        draws = np.sort(np.atleast_2d(np.asarray(draws, dtype=np.int64)), axis=1)
        rows, n = draws.shape
        if n == 0:
            raise InvalidArgumentError("Samples must be nonempty")

        starts = np.ones(draws.shape, dtype=bool)
        starts[:, 1:] = draws[:, 1:] != draws[:, :-1]
        positions = np.flatnonzero(starts)
        return cls(
            n=n,
            rows=rows,
            sorted_draws=draws,
            run_rows=positions // n,
            run_symbols=draws.ravel()[positions],
            run_lengths=np.diff(np.append(positions, rows * n)),
        )

    def distinct(self) -> np.ndarray:
        """Number of distinct symbols per row."""
        return np.bincount(self.run_rows, minlength=self.rows)

    def phi(self, i: int) -> np.ndarray:
        """Phi_i per row."""
        return np.bincount(self.run_rows[self.run_lengths == i], minlength=self.rows)

    def missing_mass(self, probs: np.ndarray) -> np.ndarray:
        """Missing mass per row under the probability vector probs."""
        observed = np.bincount(self.run_rows, weights=probs[self.run_symbols], minlength=self.rows)
        return np.clip(1.0 - observed, 0.0, 1.0)

    def max_symbol(self) -> int:
        return int(self.run_symbols.max())


class Estimator(ABC):
    """Maps a sample to a missing-mass estimate in [0, 1]."""

    name: str = "estimator"

    @abstractmethod
    def estimate_batch(self, batch: OccupancyBatch) -> np.ndarray:
        """Estimates for every row of the batch."""

    def __call__(self, sample: Sample) -> float:
        if sample.n == 0:
            raise InvalidArgumentError("Cannot estimate missing mass from an empty sample")
        batch = OccupancyBatch.from_draws(sample.symbols[np.newaxis, :])
        return float(self.estimate_batch(batch)[0])

    def __repr__(self) -> str:
        return self.name


class GoodTuringEstimator(Estimator):
    """Phi_1 / n."""

    name = "gt"

    def estimate_batch(self, batch: OccupancyBatch) -> np.ndarray:
        return batch.phi(1) / batch.n


class DirichletBayesEstimator(Estimator):
    """
    Posterior mean of the missing mass under Dir(k, alpha).

    By aggregation the unseen coordinates jointly have posterior mean
    (k - d) * alpha / (k * alpha + n), d being the number of distinct symbols seen.
    """

    def __init__(self, spec: DirichletSpec):
        self.spec = spec
        self.name = f"dirichlet:{spec.alpha!r}:{spec.k}"

    def estimate_batch(self, batch: OccupancyBatch) -> np.ndarray:
        if batch.max_symbol() >= self.spec.k:
            raise InvalidArgumentError(
                f"Prior support k={self.spec.k} is smaller than observed symbol index {batch.max_symbol()}"
            )
        unseen = self.spec.k - batch.distinct()
        return unseen * self.spec.alpha / (self.spec.a + batch.n)


def profile(s: Sample) -> OccupancyProfile:
    """Exact multiplicity histogram Phi_1..Phi_n of the sample."""
    if s.n == 0:
        raise InvalidArgumentError("Cannot profile an empty sample")
    _, counts = np.unique(s.symbols, return_counts=True)
    phi = np.bincount(counts)
    return OccupancyProfile(
        n=s.n,
        phi={int(i): int(phi[i]) for i in np.flatnonzero(phi) if i >= 1},
    )


def good_turing(s: Sample) -> float:
    """Good-Turing missing-mass estimate Phi_1 / n."""
    return GoodTuringEstimator()(s)


def dirichlet_bayes(s: Sample, spec: DirichletSpec) -> float:
    """Posterior-mean missing-mass estimate under the symmetric prior spec."""
    return DirichletBayesEstimator(spec)(s)


def parse_estimator(selector: str) -> Estimator:
    """
    Build an estimator from its selector string.

    "gt" or "dirichlet:<alpha>:<k>".
    """
    selector = selector.strip()
    if selector == "gt":
        return GoodTuringEstimator()
    kind, _, rest = selector.partition(":")
    if kind == "dirichlet":
        parts = rest.split(":")
        if len(parts) == 2:
            try:
                return DirichletBayesEstimator(DirichletSpec(alpha=float(parts[0]), k=int(parts[1])))
            except ValueError as e:
                raise DescriptorError(f"Invalid Dirichlet estimator '{selector}': {str(e)}")
    raise DescriptorError(f"Unknown estimator selector '{selector}'")
