"""Pydantic models for smoothness classes, estimator configs and JSON documents"""

from enum import Enum
from typing import Optional, List, Union

from pydantic import BaseModel, Field, field_validator, model_validator


class RiskKind(str, Enum):
    """Risk measured by bounds, rates and experiments"""
    MISE = "mise"
    MSE = "mse"


class EstimatorKind(str, Enum):
    """Available deconvolution estimators"""
    KERNEL = "kernel"
    PROJECTION = "projection"


class BandwidthKind(str, Enum):
    """How the optimal bandwidth is obtained"""
    NUMERIC = "numeric"
    ASYMPTOTIC = "asymptotic"


class RegimeCell(str, Enum):
    """Rate cells over (r, s)"""
    ORD_ORD = "OrdOrd"
    ORD_SUPER = "OrdSuper"
    SUPER_ORD = "SuperOrd"
    EQUAL = "Equal"
    BIAS_DOMINANT = "BiasDominant"
    VARIANCE_DOMINANT = "VarianceDominant"


class NoiseSmoothness(BaseModel):
    """Decay of the noise characteristic function

    k0 (t^2+1)^(-gamma/2) exp(-b|t|^s) <= |f_eps*(t)| <= k1 (t^2+1)^(-gamma/2) exp(-b|t|^s)
    """
    s: float = Field(..., ge=0, description="Exponent of the exponential decay")
    b: float = Field(..., ge=0, description="Scale of the exponential decay")
    gamma: float = Field(..., description="Polynomial decay exponent")
    k0: float = Field(default=1.0, gt=0, description="Lower sandwich constant")
    k1: float = Field(default=1.0, gt=0, description="Upper sandwich constant")
    test_only: bool = Field(
        default=False,
        description="Degenerate model admitted for tests (allows gamma = 0 with s = 0)"
    )

    model_config = {"frozen": True}

    @model_validator(mode="after")
    def validate_class(self) -> "NoiseSmoothness":
        """Enforce gamma > 0 for ordinary smooth noise and k0 <= k1"""
        if self.s == 0 and self.gamma <= 0 and not self.test_only:
            raise ValueError("gamma must be positive when s = 0")
        if self.k0 > self.k1:
            raise ValueError(f"k0 ({self.k0}) must not exceed k1 ({self.k1})")
        return self

    def descriptor(self) -> dict:
        """Smoothness block of the model JSON document"""
        return {"gamma": self.gamma, "s": self.s, "b": self.b, "k0": self.k0, "k1": self.k1}


class SignalSmoothness(BaseModel):
    """Membership parameters of the class A_{delta,r,a}(L)"""
    delta: float = Field(..., description="Sobolev-type exponent")
    r: float = Field(..., ge=0, description="Exponent of the exponential decay")
    a: float = Field(..., ge=0, description="Scale of the exponential decay")
    L: float = Field(default=1.0, gt=0, description="Class radius (membership checks only)")

    model_config = {"frozen": True}

    @model_validator(mode="after")
    def validate_class(self) -> "SignalSmoothness":
        """Ordinary smooth signals need delta > 1/2"""
        if self.r == 0 and self.delta <= 0.5:
            raise ValueError(f"delta must exceed 1/2 when r = 0 (got delta={self.delta})")
        return self

    def descriptor(self) -> dict:
        """Smoothness block of the model JSON document"""
        return {"delta": self.delta, "r": self.r, "a": self.a, "L": self.L}


class ProblemParams(BaseModel):
    """Signal class, noise class and risk kind of one rate problem"""
    signal: SignalSmoothness
    noise: NoiseSmoothness
    risk_kind: RiskKind = Field(default=RiskKind.MISE)

    model_config = {"frozen": True}

    @classmethod
    def from_values(
        cls,
        delta: float,
        r: float,
        a: float,
        gamma: float,
        b: float,
        s: float,
        risk_kind: Union[RiskKind, str] = RiskKind.MISE,
        test_only: bool = False
    ) -> "ProblemParams":
        """Build parameters from the six class exponents"""
        return cls(
            signal=SignalSmoothness(delta=delta, r=r, a=a),
            noise=NoiseSmoothness(gamma=gamma, b=b, s=s, test_only=test_only),
            risk_kind=RiskKind(risk_kind)
        )

    def with_risk(self, risk_kind: Union[RiskKind, str]) -> "ProblemParams":
        """Same classes, other risk kind"""
        return self.model_copy(update={"risk_kind": RiskKind(risk_kind)})


class KernelConfig(BaseModel):
    """Bandwidth of the Fourier-cutoff kernel estimator"""
    h: float = Field(..., gt=0, description="Bandwidth; the Fourier cutoff is 1/h")

    model_config = {"frozen": True}


class ProjectionConfig(BaseModel):
    """Resolution and truncation of the sinc projection estimator"""
    L_m: float = Field(..., gt=0, description="Resolution; basis is band-limited at pi*L_m")
    K_n: int = Field(..., ge=1, description="Coefficients kept: |j| <= K_n")

    model_config = {"frozen": True}


class EstimateMeta(BaseModel):
    """Provenance of a density estimate"""
    estimator: EstimatorKind
    n: int = Field(..., ge=1)
    noise: str
    h: Optional[float] = Field(None, description="Bandwidth (kernel estimator)")
    L_m: Optional[float] = Field(None, description="Resolution (projection estimator)")
    K_n: Optional[int] = Field(None, description="Truncation (projection estimator)")
    clipped: bool = Field(default=False, description="Negative values clipped to zero")


class N1Report(BaseModel):
    """Outcome of the noise sandwich check"""
    ok: bool
    worst_ratio_low: float = Field(..., description="Smallest |cf| / envelope on the grid")
    worst_ratio_high: float = Field(..., description="Largest |cf| / envelope on the grid")


class ClassReport(BaseModel):
    """Outcome of the signal class integral check"""
    integral_estimate: float
    ok: bool


class ModelDescriptor(BaseModel):
    """JSON descriptor of a catalog model"""
    name: str = Field(..., description="Catalog name")
    scale: float = Field(default=1.0, gt=0)
    smoothness: Optional[dict] = Field(
        None,
        description="Recorded class parameters; keys delta/r/a/L or gamma/s/b/k0/k1"
    )

    @field_validator("name")
    @classmethod
    def validate_name(cls, v: str) -> str:
        """Names are lowercase identifiers"""
        v = v.strip().lower()
        if not v.replace("_", "").isalnum():
            raise ValueError("Model name must be alphanumeric (underscores allowed)")
        return v

    model_config = {
        "json_schema_extra": {
            "examples": [
                {
                    "name": "gaussian",
                    "scale": 1.0,
                    "smoothness": {"delta": 0.0, "r": 2.0, "a": 0.5, "L": 149.0}
                }
            ]
        }
    }


class ExperimentDocument(BaseModel):
    """JSON experiment document accepted by `simulate --config`"""
    signal: ModelDescriptor
    noise: ModelDescriptor
    estimator: EstimatorKind = Field(default=EstimatorKind.KERNEL)
    bandwidth: Union[BandwidthKind, float] = Field(
        default=BandwidthKind.NUMERIC,
        description="numeric, asymptotic, or a fixed bandwidth"
    )
    n_grid: List[int] = Field(..., min_length=3)
    reps: int = Field(default=100, ge=2)
    seed: int = Field(default=0, ge=0)
    risk_kind: RiskKind = Field(default=RiskKind.MISE)
    mse_point: float = Field(default=0.0)
    x_points: Optional[int] = Field(None, ge=16, description="Estimate grid size; default sized from the bandwidth")
    n_points: Optional[int] = Field(None, description="Frequency grid size override")

    @field_validator("n_grid")
    @classmethod
    def validate_n_grid(cls, v: List[int]) -> List[int]:
        """Sample sizes are at least 3 and strictly increasing"""
        if any(n < 3 for n in v):
            raise ValueError("sample sizes must be at least 3")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("n_grid must be strictly increasing")
        return v

    @field_validator("bandwidth")
    @classmethod
    def validate_bandwidth(cls, v: Union[BandwidthKind, float]) -> Union[BandwidthKind, float]:
        """Fixed bandwidths must be positive"""
        if isinstance(v, float) and v <= 0:
            raise ValueError("fixed bandwidth must be positive")
        return v

    model_config = {
        "json_schema_extra": {
            "examples": [
                {
                    "signal": {"name": "gaussian", "scale": 1.0},
                    "noise": {"name": "gaussian", "scale": 1.0},
                    "estimator": "kernel",
                    "bandwidth": "numeric",
                    "n_grid": [500, 1000, 2000, 4000, 8000],
                    "reps": 100,
                    "seed": 7
                }
            ]
        }
    }


class RiskRow(BaseModel):
    """Monte Carlo risk at one sample size"""
    n: int
    h_used: float
    risk_mean: float = Field(..., ge=0)
    risk_stderr: float = Field(..., ge=0)
    theoretical_rate: float


class LogLogFit(BaseModel):
    """Least squares fit of ln y on ln x"""
    slope: float
    intercept: float
    r_squared: float


class RiskSummary(BaseModel):
    """JSON summary written next to a risk report"""
    slope: float
    intercept: float
    r_squared: float
    regime: RegimeCell
    power_slope: Optional[float] = Field(
        None,
        description="Slope of risk / log factor against n"
    )
    expected_power_slope: Optional[float] = Field(
        None,
        description="Power exponent of the theoretical rate"
    )


class CriterionResult(BaseModel):
    """One row of the acceptance PASS/FAIL table"""
    name: str
    passed: bool
    detail: str = ""
    seconds: float = Field(default=0.0, ge=0)
