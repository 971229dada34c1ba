"""
System, channel, network and schedule configuration records.
"""
import math
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.lib.numerics import db_to_linear


class ArrayConfig(BaseModel):
    """Uniform linear array at the base station"""

    model_config = ConfigDict(frozen=True)

    m: int = Field(64, ge=1, description="Number of BS antennas M")
    spacing_over_lambda: float = Field(0.5, gt=0.0, description="Antenna spacing d/lambda")


class ChannelDistribution(BaseModel):
    """
    Sparse multipath channel prior.

    Angles are configured in degrees and exposed in radians.
    """

    model_config = ConfigDict(frozen=True)

    lp: int = Field(2, ge=1, description="Number of propagation paths L_p")
    lp_set: Optional[List[int]] = Field(
        None, description="Admissible L_p values for robust training; drawn uniformly per channel"
    )
    gain_variance: float = Field(1.0, gt=0.0)
    aod_low_deg: float = -30.0
    aod_high_deg: float = 30.0

    @field_validator("lp_set")
    @classmethod
    def _check_lp_set(cls, value: Optional[List[int]]) -> Optional[List[int]]:
        if value is None:
            return value
        if not value or any(v < 1 for v in value):
            raise ValueError("lp_set must be a non-empty list of positive integers")
        return sorted(set(value))

    @model_validator(mode="after")
    def _check_range(self) -> "ChannelDistribution":
        if self.aod_low_deg >= self.aod_high_deg:
            raise ValueError("aod_low_deg must be smaller than aod_high_deg")
        return self

    @property
    def aod_low(self) -> float:
        return math.radians(self.aod_low_deg)

    @property
    def aod_high(self) -> float:
        return math.radians(self.aod_high_deg)

    @property
    def admissible_lp(self) -> List[int]:
        return list(self.lp_set) if self.lp_set else [self.lp]

    @property
    def max_lp(self) -> int:
        return max(self.admissible_lp)


class SystemConfig(BaseModel):
    """
    FDD downlink system dimensions.

    SNR convention: sigma2 is fixed at 1 and P = 10^(SNR/10) unless ``power`` is given.
    """

    model_config = ConfigDict(frozen=True)

    m: int = Field(64, ge=1, description="BS antennas M")
    k_users: int = Field(2, ge=1, description="Users K")
    l_pilots: int = Field(8, ge=1, description="Pilot length L")
    b_bits: int = Field(30, ge=1, description="Feedback bits per user B")
    snr_db: float = 10.0
    sigma2: float = Field(1.0, gt=0.0)
    power: Optional[float] = Field(None, gt=0.0, description="Total transmit power P")
    spacing_over_lambda: float = Field(0.5, gt=0.0)

    @model_validator(mode="after")
    def _check_dimensions(self) -> "SystemConfig":
        if self.k_users >= self.m:
            raise ValueError(f"k_users ({self.k_users}) must be smaller than m ({self.m})")
        return self

    @property
    def total_power(self) -> float:
        if self.power is not None:
            return float(self.power)
        return self.sigma2 * db_to_linear(self.snr_db)

    @property
    def array(self) -> ArrayConfig:
        return ArrayConfig(m=self.m, spacing_over_lambda=self.spacing_over_lambda)


class EncoderSpec(BaseModel):
    """User-side network: hidden widths then a B-wide sign layer (or S-wide tanh layer)"""

    model_config = ConfigDict(frozen=True)

    hidden: List[int] = Field(default_factory=lambda: [1024, 512, 256])
    output: Literal["sign", "tanh"] = "sign"

    @field_validator("hidden")
    @classmethod
    def _check_hidden(cls, value: List[int]) -> List[int]:
        if any(width < 1 for width in value):
            raise ValueError("hidden widths must be positive")
        return value

    @property
    def depth(self) -> int:
        return len(self.hidden) + 1


class DecoderSpec(BaseModel):
    """BS-side network: hidden widths then 2MK outputs and the power normalisation"""

    model_config = ConfigDict(frozen=True)

    hidden: List[int] = Field(default_factory=lambda: [1024, 512, 512])

    @field_validator("hidden")
    @classmethod
    def _check_hidden(cls, value: List[int]) -> List[int]:
        if any(width < 1 for width in value):
            raise ValueError("hidden widths must be positive")
        return value

    @property
    def depth(self) -> int:
        return len(self.hidden) + 1


class TrainingSchedule(BaseModel):
    """Adam, slope annealing, learning-rate decay and early-stopping settings"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    batch_size: int = Field(1024, ge=2)
    batches_per_epoch: int = Field(200, ge=1)
    patience: int = Field(300, ge=1, description="Epochs without improvement before stopping")
    max_epochs: Optional[int] = Field(None, ge=1, description="Hard cap on epochs")
    validation_size: int = Field(10000, ge=1)
    lr_start: float = Field(1e-3, gt=0.0)
    lr_floor: float = Field(1e-5, gt=0.0)
    lr_decay_factor: float = Field(0.3, gt=0.0, lt=1.0)
    lr_decay_patience: int = Field(100, ge=1)
    alpha_start: float = Field(0.5, gt=0.0)
    alpha_growth: float = Field(1.001, ge=1.0)
    alpha_cap: float = Field(10.0, gt=0.0)
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    @model_validator(mode="after")
    def _check_rates(self) -> "TrainingSchedule":
        if self.lr_floor > self.lr_start:
            raise ValueError("lr_floor must not exceed lr_start")
        if self.alpha_cap < self.alpha_start:
            raise ValueError("alpha_cap must not be below alpha_start")
        return self

    def next_alpha(self, alpha: float) -> float:
        return min(self.alpha_growth * alpha, self.alpha_cap)

    def decayed_lr(self, lr: float) -> float:
        return max(lr * self.lr_decay_factor, self.lr_floor)


class SoftEncoderSpec(BaseModel):
    """Soft (tanh) user output with S neurons, later quantized with Q bits each"""

    model_config = ConfigDict(frozen=True)

    s: int = Field(10, ge=1)
    q_bits: int = Field(3, ge=1)
    per_neuron: bool = False

    @property
    def feedback_bits(self) -> int:
        return self.s * self.q_bits
