"""
Experiment configuration, grid points and result records.
"""
import itertools
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.models.system import (
    ChannelDistribution,
    DecoderSpec,
    EncoderSpec,
    SystemConfig,
    TrainingSchedule,
)

METHODS = (
    "proposed",
    "proposed-two-step-B",
    "proposed-two-step-K",
    "mrt-csit",
    "zf-csit",
    "mrt-csir-quantized",
    "zf-csir-quantized",
    "mrt-omp-infinite",
    "zf-omp-infinite",
    "mrt-omp-quantized",
    "zf-omp-quantized",
    "mrt-dnn-mse",
    "zf-dnn-mse",
)

# Methods that feed back 3 quantized parameters per assumed path
PARAMETRIC_FEEDBACK_METHODS = (
    "mrt-csir-quantized",
    "zf-csir-quantized",
    "mrt-omp-quantized",
    "zf-omp-quantized",
)

CSV_HEADER = (
    "method",
    "M",
    "K",
    "L",
    "B",
    "Lp",
    "snr_db",
    "seed",
    "sum_rate",
    "sum_rate_stderr",
    "per_user_rates",
    "test_size",
)


class NetworkSection(BaseModel):
    """Network widths; unset entries come from the preset"""

    encoder: Optional[EncoderSpec] = None
    decoder: Optional[DecoderSpec] = None
    large_k_decoder: Optional[DecoderSpec] = None
    soft_outputs: int = Field(10, ge=1, description="S, tanh outputs per user in the two-step B procedure")
    per_neuron_quantizers: bool = False


class ExperimentConfig(BaseModel):
    """
    One sweep: every method is run at every point of the cross product of the list fields.

    ``lp``/``lp_set`` describe the training prior; ``test_lp`` (when set) sweeps the path count
    of the test channels independently.
    """

    model_config = ConfigDict(extra="forbid")

    name: str = "experiment"
    preset: Literal["desk", "paper"] = "desk"
    methods: List[str] = Field(default_factory=lambda: ["proposed"])
    m: Optional[int] = Field(None, ge=1, description="BS antennas; preset value when unset")
    k_users: List[int] = Field(default_factory=lambda: [2])
    l_pilots: List[int] = Field(default_factory=lambda: [8])
    b_bits: List[int] = Field(default_factory=lambda: [30])
    snr_db: List[float] = Field(default_factory=lambda: [10.0])
    sigma2: float = Field(1.0, gt=0.0)
    lp: int = Field(2, ge=1)
    lp_set: Optional[List[int]] = None
    test_lp: Optional[List[int]] = None
    assumed_lp: int = Field(2, ge=1, description="Paths fed back by the parametric baselines")
    aod_low_deg: float = -30.0
    aod_high_deg: float = 30.0
    network: NetworkSection = Field(default_factory=NetworkSection)
    schedule: Dict[str, Any] = Field(default_factory=dict, description="TrainingSchedule overrides")
    test_size: int = Field(10_000, ge=2)
    omp_grid: int = Field(1024, ge=2)
    codec_samples: int = Field(1_000_000, ge=100)
    soft_quantizer_samples: int = Field(100_000, ge=100)
    seed: int = Field(0, ge=0, lt=2**64)
    output_dir: str = "results"
    workers: int = Field(1, ge=1)
    eval_only: bool = False

    @field_validator("methods")
    @classmethod
    def _check_methods(cls, value: List[str]) -> List[str]:
        unknown = [name for name in value if name not in METHODS]
        if unknown:
            raise ValueError(f"unknown methods {unknown}; expected any of {list(METHODS)}")
        if not value:
            raise ValueError("at least one method is required")
        return value

    @field_validator("k_users", "l_pilots", "b_bits", "snr_db")
    @classmethod
    def _non_empty(cls, value: List[Any]) -> List[Any]:
        if not value:
            raise ValueError("sweep lists must not be empty")
        return value

    @field_validator("k_users", "l_pilots", "b_bits")
    @classmethod
    def _positive(cls, value: List[int]) -> List[int]:
        if any(v < 1 for v in value):
            raise ValueError("values must be positive")
        return value

    @field_validator("test_lp", "lp_set")
    @classmethod
    def _positive_optional(cls, value: Optional[List[int]]) -> Optional[List[int]]:
        if value is not None and (not value or any(v < 1 for v in value)):
            raise ValueError("must be a non-empty list of positive integers")
        return value

    @model_validator(mode="after")
    def _check_systems(self) -> "ExperimentConfig":
        if self.m is not None:
            for k_users in self.k_users:
                if k_users >= self.m:
                    raise ValueError(f"k_users ({k_users}) must be smaller than m ({self.m})")
        try:
            self.distribution()
        except ValidationError as e:
            raise ValueError(f"invalid channel prior: {e.errors()[0]['msg']}") from None
        try:
            TrainingSchedule(**self.schedule)
        except (ValidationError, TypeError) as e:
            raise ValueError(f"invalid schedule override: {e}") from None
        parametric = [name for name in self.methods if name in PARAMETRIC_FEEDBACK_METHODS]
        if parametric:
            short = [b for b in self.b_bits if b < 3 * self.assumed_lp]
            if short:
                raise ValueError(
                    f"{parametric} need B >= 3*assumed_lp = {3 * self.assumed_lp}; got {short}"
                )
        if "proposed-two-step-B" in self.methods:
            bad = [b for b in self.b_bits if b % self.network.soft_outputs]
            if bad:
                raise ValueError(
                    f"two-step B needs every B to be a multiple of S={self.network.soft_outputs}; got {bad}"
                )
        return self

    def distribution(self, lp: Optional[int] = None) -> ChannelDistribution:
        """Training prior, or the test prior with ``lp`` paths"""
        if lp is not None:
            return ChannelDistribution(lp=lp, aod_low_deg=self.aod_low_deg, aod_high_deg=self.aod_high_deg)
        return ChannelDistribution(
            lp=self.lp, lp_set=self.lp_set, aod_low_deg=self.aod_low_deg, aod_high_deg=self.aod_high_deg
        )

    def test_lp_values(self) -> List[int]:
        if self.test_lp is not None:
            return list(self.test_lp)
        return [max(self.lp_set)] if self.lp_set else [self.lp]


class GridPoint(BaseModel):
    """One (method, system, test path count) cell of a sweep"""

    model_config = ConfigDict(frozen=True)

    index: int
    method: str
    system: SystemConfig
    test_lp: int


def expand_grid(config: ExperimentConfig, m: int) -> List[GridPoint]:
    """Cross product in a fixed order: method, K, L, B, SNR, test L_p"""
    points = []
    product = itertools.product(
        config.methods, config.k_users, config.l_pilots, config.b_bits, config.snr_db, config.test_lp_values()
    )
    for index, (method, k_users, l_pilots, b_bits, snr_db, test_lp) in enumerate(product):
        system = SystemConfig(
            m=m, k_users=k_users, l_pilots=l_pilots, b_bits=b_bits, snr_db=snr_db, sigma2=config.sigma2
        )
        points.append(GridPoint(index=index, method=method, system=system, test_lp=test_lp))
    return points


class ResultRow(BaseModel):
    """Evaluation of one method at one grid point"""

    method: str
    m: int
    k_users: int
    l_pilots: int
    b_bits: int
    lp: int
    snr_db: float
    seed: int
    sum_rate: float
    sum_rate_stderr: float = 0.0
    per_user_rates: List[float] = Field(default_factory=list)
    test_size: int = 10_000
    wall_time: float = 0.0

    def to_csv_record(self) -> List[str]:
        return [
            self.method,
            str(self.m),
            str(self.k_users),
            str(self.l_pilots),
            str(self.b_bits),
            str(self.lp),
            repr(float(self.snr_db)),
            str(self.seed),
            repr(float(self.sum_rate)),
            repr(float(self.sum_rate_stderr)),
            ";".join(repr(float(r)) for r in self.per_user_rates),
            str(self.test_size),
        ]

    @classmethod
    def from_csv_record(cls, record: Dict[str, str]) -> "ResultRow":
        rates = record["per_user_rates"]
        return cls(
            method=record["method"],
            m=int(record["M"]),
            k_users=int(record["K"]),
            l_pilots=int(record["L"]),
            b_bits=int(record["B"]),
            lp=int(record["Lp"]),
            snr_db=float(record["snr_db"]),
            seed=int(record["seed"]),
            sum_rate=float(record["sum_rate"]),
            sum_rate_stderr=float(record["sum_rate_stderr"]),
            per_user_rates=[float(r) for r in rates.split(";")] if rates else [],
            test_size=int(record["test_size"]),
        )
