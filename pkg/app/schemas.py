"""
Pydantic schemas for parameters, descriptors and result reports.
"""
from typing import Annotated, Any, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, computed_field, model_validator


RiskMethod = Literal["exact", "asymptotic", "closed_form_uniform", "brute_force", "monte_carlo"]
BoundMethod = Literal["dirichlet_prior", "reduction", "bracket"]
SweepAxis = Literal["n", "k", "c"]

# Tiny negative values produced by floating-point cancellation are clamped to zero.
NEGATIVE_CLAMP = 1e-12


def clamp_nonnegative(value: float, tolerance: float = NEGATIVE_CLAMP) -> float:
    """Clamp ``value`` at zero when it is negative by less than ``tolerance``."""
    if -tolerance < value < 0.0:
        return 0.0
    return value


# Distribution descriptors

class UniformDescriptor(BaseModel):
    """Uniform distribution over k symbols."""
    type: Literal["uniform"] = "uniform"
    k: int = Field(..., ge=1, description="Support size")


class PcDescriptor(BaseModel):
    """Symbol 0 with mass p0, the rest spread evenly over k tail symbols."""
    type: Literal["pc"] = "pc"
    p0: float = Field(..., ge=0.5, le=1.0, description="Mass of symbol 0")
    k: int = Field(..., ge=1, description="Number of tail symbols")


class ExplicitDescriptor(BaseModel):
    """Explicit probability vector."""
    type: Literal["explicit"] = "explicit"
    probs: list[float] = Field(..., min_length=1)


class ZipfDescriptor(BaseModel):
    """Zipf law p(i) proportional to (i+1)^-s over k symbols."""
    type: Literal["zipf"] = "zipf"
    k: int = Field(..., ge=1)
    s: float = Field(..., ge=0.0, description="Exponent")


class UniformCnDescriptor(BaseModel):
    """Uniform distribution with k = ceil(c*n) symbols, resolved per sample length."""
    type: Literal["uniform_cn"] = "uniform_cn"
    c: float = Field(..., gt=0.0)


DistributionDescriptor = Annotated[
    Union[UniformDescriptor, PcDescriptor, ExplicitDescriptor, ZipfDescriptor, UniformCnDescriptor],
    Field(discriminator="type"),
]


# Parameters

class DirichletSpec(BaseModel):
    """Symmetric Dirichlet prior Dir(k, alpha)."""
    model_config = ConfigDict(frozen=True)

    k: int = Field(..., ge=1, description="Support size")
    alpha: float = Field(..., gt=0.0, description="Per-coordinate concentration")

    @computed_field
    @property
    def a(self) -> float:
        """Total concentration k * alpha."""
        return self.k * self.alpha


class SimConfig(BaseModel):
    """Monte Carlo run configuration."""
    n: int = Field(..., ge=1, description="Sample length")
    reps: int = Field(..., ge=1, description="Replicate count")
    seed: int = Field(default=0, ge=0, lt=2**64, description="64-bit seed")
    estimator: str = Field(default="gt", pattern=r"^(gt|dirichlet:[^:]+:[^:]+)$")
    dist: DistributionDescriptor
    threads: Optional[int] = Field(default=None, ge=1, description="Worker count (defaults to MC_THREADS)")


# Reports

class RiskReport(BaseModel):
    """Squared-error risk of an estimator with provenance."""
    n: int = Field(..., ge=1)
    dist_descriptor: str
    method: RiskMethod
    risk: float = Field(..., ge=0.0)
    normalized_risk: float
    aux: dict[str, Any] = Field(default_factory=dict, description="stderr, term breakdown, ...")

    @model_validator(mode="after")
    def _check_normalization(self) -> "RiskReport":
        expected = self.n * self.risk
        if abs(self.normalized_risk - expected) > 1e-12 * max(abs(expected), 1e-300):
            raise ValueError("normalized_risk must equal n * risk")
        return self

    @classmethod
    def build(cls, n: int, dist_descriptor: str, method: RiskMethod, risk: float, **aux: Any) -> "RiskReport":
        """Create a report, clamping cancellation noise and filling normalized_risk."""
        risk = clamp_nonnegative(float(risk))
        return cls(
            n=n,
            dist_descriptor=dist_descriptor,
            method=method,
            risk=risk,
            normalized_risk=n * risk,
            aux=aux,
        )


class BoundReport(BaseModel):
    """One side of a bound on the minimax risk."""
    n: int = Field(..., ge=1)
    method: BoundMethod
    side: Literal["lower", "upper"] = "lower"
    value: float = Field(..., ge=0.0)
    normalized: float
    params: dict[str, Any] = Field(default_factory=dict)
    provenance: str = ""

    @classmethod
    def build(cls, n: int, method: BoundMethod, value: float, side: Literal["lower", "upper"] = "lower",
              provenance: str = "", **params: Any) -> "BoundReport":
        value = clamp_nonnegative(float(value))
        return cls(n=n, method=method, side=side, value=value, normalized=n * value,
                   params=params, provenance=provenance)


class MinimaxBracket(BaseModel):
    """Lower and upper bounds on the minimax risk at one sample length."""
    lower: BoundReport
    upper: BoundReport


class InequalityCheck(BaseModel):
    """Left-hand side of an inequality and its bound."""
    lhs: float
    bound: float
    holds: bool


class OptimizationResult(BaseModel):
    """Maximizer of a normalized-risk coefficient."""
    target: str
    c_star: float
    value: float
    grid_c: float = Field(..., description="Best point of the post-hoc grid scan")
    grid_value: float
    unimodal_ok: bool = Field(..., description="Grid maximum lies next to the golden-section maximizer")
    derivative: float = Field(..., description="Central finite difference at c_star")


class BernoulliRiskReport(BaseModel):
    """Worst-case squared error of a Bernoulli parameter estimator over an interval."""
    n: int
    estimator_kind: Literal["add_half_sqrt_n", "empirical"]
    interval: tuple[float, float]
    p_worst: float
    risk: float
    normalized: float
    reference: float = Field(..., description="Analytic worst-case value for the same estimator")


class De3Report(BaseModel):
    """Simulation of the missing mass concentration on the P_c family with k = ceil(e^n)."""
    n: int
    p0: float
    k: int
    reps: int
    seed: int
    violation_rate: float
    stderr: float
    probability_bound: float = Field(..., description="2^-n")
    max_gap: float
    gap_bound: float = Field(..., description="(1 - p0) * n * e^-n")
    min_m0_seen: Optional[float] = None
    max_m0_seen: Optional[float] = None


class OccupancyProfile(BaseModel):
    """Counts Phi_i of symbols seen exactly i times in a sample of length n."""
    model_config = ConfigDict(frozen=True)

    n: int = Field(..., ge=1, description="Sample length")
    phi: dict[int, int] = Field(..., description="Multiplicity i -> Phi_i (nonzero entries only)")

    @model_validator(mode="after")
    def _check_conservation(self) -> "OccupancyProfile":
        if any(i < 1 or i > self.n or count < 0 for i, count in self.phi.items()):
            raise ValueError("Phi_i must be nonnegative and supported on 1..n")
        if sum(i * count for i, count in self.phi.items()) != self.n:
            raise ValueError("sum of i * Phi_i must equal n")
        return self

    def count(self, i: int) -> int:
        """Phi_i, zero when no symbol occurs exactly i times."""
        return self.phi.get(i, 0)

    @property
    def distinct(self) -> int:
        return sum(self.phi.values())


class MonteCarloEstimate(BaseModel):
    """Mean and standard error of a Monte Carlo quantity."""
    mean: float
    stderr: float
    reps: int


class SweepRow(BaseModel):
    """One row of a parameter sweep."""
    axis: SweepAxis
    value: float
    n: int
    method: RiskMethod
    risk: float
    normalized_risk: float
    stderr: Optional[float] = None


class OutputRecord(BaseModel):
    """JSON object emitted by one command-line invocation."""
    command: str
    parameters: dict[str, Any]
    results: Any
    seed: Optional[int] = None
    version: str
    wall_time_s: Optional[float] = None


class ErrorResponse(BaseModel):
    """Error object written to stderr when a command fails."""
    status: str = "error"
    message: str
    error_type: str
    exit_code: int
