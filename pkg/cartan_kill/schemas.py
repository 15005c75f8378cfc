from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing import Dict, List, Optional, Tuple


class AlgebraFile(BaseModel):
    name: str
    dim: int = Field(gt=0)
    brackets: List[Tuple[int, int, int, float]] = []
    p_start: int

    @model_validator(mode="after")
    def check_indices(self):
        for i, j, k, _ in self.brackets:
            for index in (i, j, k):
                if not 0 <= index < self.dim:
                    raise ValueError(f"bracket index {index} outside 0..{self.dim - 1}")
        if not 0 <= self.p_start <= self.dim:
            raise ValueError(f"p_start {self.p_start} outside 0..{self.dim}")
        return self


class MetricFile(BaseModel):
    n: int = Field(gt=0)
    g: List[List[str]]
    domain: List[Tuple[float, float]]
    name: str = "metric"

    @model_validator(mode="after")
    def check_shape(self):
        if len(self.g) != self.n or any(len(row) != self.n for row in self.g):
            raise ValueError(f"g must be a {self.n}x{self.n} matrix of expressions")
        if len(self.domain) != self.n:
            raise ValueError(f"domain needs {self.n} intervals")
        for lo, hi in self.domain:
            if not lo < hi:
                raise ValueError(f"empty interval [{lo}, {hi}]")
        return self


class GridAxis(BaseModel):
    lo: float
    hi: float
    steps: int = Field(gt=0)

    @classmethod
    def parse(cls, text: str) -> "GridAxis":
        """Parse 'lo:hi:steps'"""
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"grid axis '{text}' is not lo:hi:steps")
        return cls(lo=float(parts[0]), hi=float(parts[1]), steps=int(parts[2]))

    def values(self) -> List[float]:
        if self.steps == 1:
            return [0.5 * (self.lo + self.hi)]
        width = (self.hi - self.lo) / (self.steps - 1)
        return [self.lo + i * width for i in range(self.steps)]


class RunConfig(BaseModel):
    command: str
    geometry: Optional[str] = None
    metric_file: Optional[str] = None
    points: List[List[float]] = []
    grid: List[GridAxis] = []
    m: int = Field(default=3, ge=1)
    k_max: int = Field(default=3, ge=1)
    order: Optional[int] = None
    tol_ode: float = 1e-10
    tol_rank: float = 1e-5
    tol_verify: float = 1e-4
    seed: int = 0
    workers: int = Field(default=1, ge=1)
    out: Optional[str] = None
    format: str = "json"
    radius: Optional[float] = None
    samples: int = Field(default=5, ge=1)

    @field_validator("tol_ode", "tol_rank", "tol_verify")
    @classmethod
    def positive(cls, value: float) -> float:
        if not value > 0:
            raise ValueError("tolerances must be positive")
        return value

    @field_validator("format")
    @classmethod
    def known_format(cls, value: str) -> str:
        if value not in ("json", "csv"):
            raise ValueError("format must be json or csv")
        return value


class FlowDiagnostics(BaseModel):
    accepted_steps: int
    rejected_steps: int
    max_local_error: float


class GeneratorCheck(BaseModel):
    generator: List[float]
    bracket_residual: float
    pullback_residual: float
    base_killing_residual: Optional[float] = None
    passed: bool


class KillingReport(BaseModel):
    point: List[float]
    k_m: List[int]
    k: int
    stabilization_order: Optional[int]
    generators: List[List[float]]
    singular_values: List[float]
    rank_gap: Optional[float]
    ill_separated: bool
    checks: List[GeneratorCheck] = []
    passed: bool


class StrataSample(BaseModel):
    index: Tuple[int, ...]
    coords: List[float]
    k_m: List[int] = []
    k: Optional[int] = None
    stabilization_order: Optional[int] = None
    regular: bool = False
    spans_base: bool = False
    component: Optional[int] = None
    error: Optional[str] = None


class StratumSummary(BaseModel):
    k: int
    samples: int
    components: List[int]


class StrataSummary(BaseModel):
    strata: List[StratumSummary]
    regular_fraction: float
    max_stabilization_order: Optional[int]
    locally_homogeneous: bool
    insufficient_neighborhood: bool = False
    semicontinuity_violations: List[List[int]] = []


class StrataReport(BaseModel):
    geometry: str
    grid: List[GridAxis]
    m: int
    tol_rank: float
    tol_zero: float
    seed: int
    samples: List[StrataSample]
    summary: StrataSummary


class CheckResult(BaseModel):
    name: str
    value: Optional[float] = None
    tolerance: Optional[float] = None
    passed: bool
    details: Dict = {}


class SuiteReport(BaseModel):
    geometry: str
    checks: List[CheckResult]
    passed: bool


class BchTermReport(BaseModel):
    order: int
    expansion: str
    fitted: Optional[List[float]] = None
    predicted: Optional[List[float]] = None
    error: Optional[float] = None
    passed: Optional[bool] = None


class BchReport(BaseModel):
    terms: List[BchTermReport]
    passed: Optional[bool] = None


class ErrorResponse(BaseModel):
    error: str
    details: Optional[dict] = None


class NumpyModel(BaseModel):
    """Base for frozen value objects that carry numpy arrays"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)
