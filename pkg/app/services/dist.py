"""
Finite-support distributions, the special families used in the analysis,
descriptor parsing and seeded i.i.d. sampling.

Symbols are always the indices 0..k-1.
"""
import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Optional

import numpy as np
from pydantic import TypeAdapter, ValidationError

from app.exceptions import DescriptorError, InvalidArgumentError
from app.schemas import (
    DistributionDescriptor,
    ExplicitDescriptor,
    PcDescriptor,
    UniformCnDescriptor,
    UniformDescriptor,
    ZipfDescriptor,
)
from app.services.numerics import compensated_sum


SUM_TOLERANCE = 1e-12
EXPLICIT_SUM_TOLERANCE = 1e-9
# Alphabets larger than this use the alias table.
ALIAS_THRESHOLD = 64

_descriptor_adapter = TypeAdapter(DistributionDescriptor)


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """
    Counter-based generator for the substream (seed, *key).

    Philox seeded through SeedSequence(seed, spawn_key=key): streams for
    different keys are independent and each is a pure function of its key.
    """
    if seed < 0 or seed >= 2**64:
        raise InvalidArgumentError(f"Seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=tuple(key))))


class InverseCdfSampler:
    """Inverse-CDF sampler for small alphabets."""

    def __init__(self, probs: np.ndarray):
        self._cdf = np.cumsum(probs)
        self._last = int(np.flatnonzero(probs > 0)[-1])

    def draw(self, rng: np.random.Generator, size) -> np.ndarray:
        u = rng.random(size)
        return np.minimum(np.searchsorted(self._cdf, u, side="right"), self._last).astype(np.int64)


class AliasTable:
    """Walker/Vose alias table: O(k) build, O(1) per draw."""

    def __init__(self, probs: np.ndarray):
        k = probs.size
        weights = probs * k
        self.prob = np.zeros(k, dtype=np.float64)
        self.alias = np.arange(k, dtype=np.int64)

        small = np.flatnonzero(weights < 1.0).tolist()
        large = np.flatnonzero(weights >= 1.0).tolist()
        weights = weights.tolist()

        while small and large:
            small_element = small.pop()
            large_element = large.pop()
            self.alias[small_element] = large_element
            self.prob[small_element] = weights[small_element]

            weights[large_element] = (weights[large_element] + weights[small_element]) - 1.0
            if weights[large_element] < 1.0:
                small.append(large_element)
            else:
                large.append(large_element)

        # Leftovers are rounding residue of entries that should be exactly 1
        for element in large + small:
            self.prob[element] = 1.0 if probs[element] > 0 else 0.0

    def draw(self, rng: np.random.Generator, size) -> np.ndarray:
        idx = rng.integers(0, self.prob.size, size=size, dtype=np.int64)
        u = rng.random(size)
        return np.where(u < self.prob[idx], idx, self.alias[idx])


@dataclass(frozen=True, eq=False)
class Distribution:
    """
    Probability vector over the symbols 0..k-1.

    Immutable: the array is copied and marked read-only on construction.
    """
    probs: np.ndarray
    label: str = "explicit"

    def __post_init__(self):
        probs = np.array(self.probs, dtype=np.float64)
        if probs.ndim != 1 or probs.size == 0:
            raise InvalidArgumentError("Distribution needs a nonempty 1-d probability vector")
        if not np.all(np.isfinite(probs)) or np.any(probs < 0):
            raise InvalidArgumentError("Probabilities must be finite and nonnegative")
        total = compensated_sum(probs)
        if abs(total - 1.0) > SUM_TOLERANCE:
            raise InvalidArgumentError(f"Probabilities sum to {total!r}, not 1")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @property
    def support_size(self) -> int:
        return int(self.probs.size)

    @property
    def is_point_mass(self) -> bool:
        return int(np.count_nonzero(self.probs)) == 1

    @cached_property
    def sampler(self) -> InverseCdfSampler | AliasTable:
        if self.support_size > ALIAS_THRESHOLD:
            return AliasTable(self.probs)
        return InverseCdfSampler(self.probs)

    @cached_property
    def probability_classes(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct positive probability values and how many symbols carry each."""
        values, multiplicities = np.unique(self.probs[self.probs > 0], return_counts=True)
        values.setflags(write=False)
        multiplicities.setflags(write=False)
        return values, multiplicities

    def __repr__(self) -> str:
        return f"Distribution({self.label}, k={self.support_size})"


@dataclass(frozen=True, eq=False)
class Sample:
    """A sequence of n symbol indices drawn over an alphabet of size support_size."""
    symbols: np.ndarray
    support_size: int

    def __post_init__(self):
        symbols = np.array(self.symbols, dtype=np.int64).ravel()
        if symbols.size and (symbols.min() < 0 or symbols.max() >= self.support_size):
            raise InvalidArgumentError(
                f"Symbol index out of range for alphabet of size {self.support_size}"
            )
        symbols.setflags(write=False)
        object.__setattr__(self, "symbols", symbols)

    @property
    def n(self) -> int:
        return int(self.symbols.size)

    def extend(self, more) -> "Sample":
        """Sample with extra symbols appended."""
        return Sample(np.concatenate([self.symbols, np.asarray(more, dtype=np.int64)]), self.support_size)


# Constructors

def make_uniform(k: int) -> Distribution:
    """Uniform distribution on k symbols."""
    if k < 1:
        raise InvalidArgumentError(f"Uniform distribution needs k >= 1, got {k}")
    return Distribution(np.full(k, 1.0 / k), label=f"uniform:{k}")


def make_pc(p0: float, k: int) -> Distribution:
    """
    Symbol 0 with mass p0 and k tail symbols of mass (1 - p0)/k each.

    The support is {0, 1, ..., k}: k + 1 symbols.
    """
    if not 0.5 <= p0 <= 1.0:
        raise InvalidArgumentError(f"p0 must lie in [1/2, 1], got {p0}")
    if k < 1:
        raise InvalidArgumentError(f"P_c family needs k >= 1 tail symbols, got {k}")
    probs = np.full(k + 1, (1.0 - p0) / k)
    probs[0] = p0
    return Distribution(probs, label=f"pc:{p0!r}:{k}")


def make_explicit(probs) -> Distribution:
    """Distribution from an explicit vector, renormalized to sum to 1."""
    values = np.asarray(probs, dtype=np.float64).ravel()
    if values.size == 0:
        raise InvalidArgumentError("Explicit distribution needs at least one entry")
    if np.any(values < 0) or not np.all(np.isfinite(values)):
        raise InvalidArgumentError("Explicit probabilities must be finite and nonnegative")
    total = compensated_sum(values)
    if abs(total - 1.0) > EXPLICIT_SUM_TOLERANCE:
        raise InvalidArgumentError(f"Explicit probabilities sum to {total!r}, not 1")
    return Distribution(values / total, label=f"explicit:{values.size}")


def make_zipf(k: int, s: float) -> Distribution:
    """Zipf law p(i) proportional to (i+1)^-s on k symbols."""
    if k < 1:
        raise InvalidArgumentError(f"Zipf distribution needs k >= 1, got {k}")
    if s < 0:
        raise InvalidArgumentError(f"Zipf exponent must be nonnegative, got {s}")
    weights = np.arange(1, k + 1, dtype=np.float64) ** (-s)
    return Distribution(weights / compensated_sum(weights), label=f"zipf:{k}:{s!r}")


def ceil_cn(c: float, n: int) -> int:
    """k = ceil(c*n), ignoring representation error in the product."""
    return max(1, math.ceil(round(c * n, 9)))


# Sampling and missing mass

def draw_matrix(d: Distribution, rows: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """rows x n matrix of i.i.d. draws from d."""
    return d.sampler.draw(rng, (rows, n))


def sample_iid(d: Distribution, n: int, seed: int) -> Sample:
    """
    Draw n i.i.d. symbols from d.

    Deterministic in (d, n, seed).
    """
    if n < 1:
        raise InvalidArgumentError(f"Sample length must be >= 1, got {n}")
    return Sample(d.sampler.draw(make_rng(seed), n), d.support_size)


def missing_mass(d: Distribution, s: Sample) -> float:
    """Total probability of the symbols that do not occur in s."""
    if s.n and int(s.symbols.max()) >= d.support_size:
        raise InvalidArgumentError("Sample contains symbols outside the distribution's support")
    unseen = np.ones(d.support_size, dtype=bool)
    unseen[s.symbols] = False
    return min(1.0, compensated_sum(d.probs[unseen]))


# Descriptors

def parse_descriptor(text: str) -> DistributionDescriptor:
    """
    Parse a descriptor from the flag mini-language or from JSON.

    Forms: uniform:K, pc:P0:K, explicit:@file.json, explicit:P1,P2,..., zipf:K:S,
    uniform-cn:C, or a JSON object such as {"type": "uniform", "k": 4}.
    """
    text = text.strip()
    try:
        if text.startswith("{"):
            return _descriptor_adapter.validate_json(text)

        kind, _, rest = text.partition(":")
        parts = rest.split(":") if rest else []
        if kind == "uniform" and len(parts) == 1:
            return UniformDescriptor(k=int(parts[0]))
        if kind == "pc" and len(parts) == 2:
            return PcDescriptor(p0=float(parts[0]), k=int(parts[1]))
        if kind == "zipf" and len(parts) == 2:
            return ZipfDescriptor(k=int(parts[0]), s=float(parts[1]))
        if kind in ("uniform-cn", "uniform_cn") and len(parts) == 1:
            return UniformCnDescriptor(c=float(parts[0]))
        if kind == "explicit" and rest:
            return _parse_explicit(rest)
    except (ValueError, ValidationError, OSError) as e:
        raise DescriptorError(f"Invalid distribution descriptor '{text}': {str(e)}")

    raise DescriptorError(f"Unknown distribution descriptor '{text}'")


def _parse_explicit(rest: str) -> ExplicitDescriptor:
    if rest.startswith("@"):
        payload = json.loads(Path(rest[1:]).read_text(encoding="utf-8"))
        if isinstance(payload, list):
            return ExplicitDescriptor(probs=payload)
        if isinstance(payload, dict) and "type" not in payload:
            return ExplicitDescriptor(**payload)
        descriptor = _descriptor_adapter.validate_python(payload)
        if not isinstance(descriptor, ExplicitDescriptor):
            raise ValueError("file must hold an explicit distribution")
        return descriptor
    return ExplicitDescriptor(probs=[float(x) for x in rest.split(",")])


def from_descriptor(descriptor: DistributionDescriptor, n: Optional[int] = None) -> Distribution:
    """Build the distribution a descriptor names; uniform_cn needs the sample length n."""
    match descriptor:
        case UniformDescriptor(k=k):
            return make_uniform(k)
        case PcDescriptor(p0=p0, k=k):
            return make_pc(p0, k)
        case ExplicitDescriptor(probs=probs):
            return make_explicit(probs)
        case ZipfDescriptor(k=k, s=s):
            return make_zipf(k, s)
        case UniformCnDescriptor(c=c):
            if n is None:
                raise InvalidArgumentError("uniform-cn descriptor needs the sample length n")
            d = make_uniform(ceil_cn(c, n))
            return Distribution(d.probs, label=f"uniform-cn:{c!r}:{d.support_size}")
    raise DescriptorError(f"Unsupported descriptor {descriptor!r}")


def with_k(descriptor: DistributionDescriptor, k: int) -> DistributionDescriptor:
    """Same family with a different alphabet parameter k."""
    if isinstance(descriptor, (UniformDescriptor, PcDescriptor, ZipfDescriptor)):
        return descriptor.model_copy(update={"k": int(k)})
    raise DescriptorError(f"Descriptor type '{descriptor.type}' has no k parameter")
