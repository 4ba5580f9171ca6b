"""Configuration management for EDCFlow.

This module provides centralized configuration using pydantic and
pydantic-settings. Process-level settings come from environment variables
(prefix ``EDCFLOW_``) or a ``.env`` file; model, training and synthesis
settings are plain pydantic models that can be loaded from a YAML document.
"""

from pathlib import Path
from typing import Any, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from src.core.errors import InvalidConfig

VALID_LOG_LEVELS = ["DEBUG", "INFO", "WARNING", "ERROR"]

DifferenceStyle = Literal["dwconv3d", "add", "concat", "gru"]


class Settings(BaseSettings):
    """Process settings loaded from environment variables.

    Attributes:
        threads: Cap on intra-op worker threads (EDCFLOW_THREADS); None = all cores
        log_level: Logging level (DEBUG, INFO, WARNING, ERROR)
        deterministic: Request deterministic torch kernels
    """

    model_config = SettingsConfigDict(
        env_prefix="EDCFLOW_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    threads: Optional[int] = Field(
        default=None,
        description="Maximum worker threads (default: all cores)",
    )
    log_level: str = Field(
        default="INFO",
        description="Logging level (DEBUG, INFO, WARNING, ERROR)",
    )
    deterministic: bool = Field(
        default=True,
        description="Request deterministic torch kernels",
    )

    @field_validator("threads")
    @classmethod
    def validate_threads(cls, v: Optional[int]) -> Optional[int]:
        """Validate that the thread cap is positive when given.

        Raises:
            ValueError: If threads is zero or negative
        """
        if v is not None and v <= 0:
            raise ValueError("threads must be greater than 0")
        return v

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        """Normalize and validate the log level name.

        Raises:
            ValueError: If the level is not one of VALID_LOG_LEVELS
        """
        level = v.upper()
        if level not in VALID_LOG_LEVELS:
            raise ValueError(f"log_level must be one of {VALID_LOG_LEVELS}, got {v}")
        return level


class ModelConfig(BaseModel):
    """Architecture hyperparameters and ablation switches.

    Defaults follow the desk-scale configuration: g=5 windows of B=3 bins,
    scales [1, 2, 5], r=1, K=6 iterations, GRU hidden 96, correlation
    feature channels 64, flow estimated at 1/4 resolution.
    """

    model_config = ConfigDict(extra="forbid")

    bins: int = Field(default=3, ge=1, description="Temporal bins B per voxel grid")
    windows: int = Field(default=5, ge=1, description="Current-stream window count g")
    feature_dim: int = Field(default=64, ge=1, description="Fine-level feature channels d")
    corr_feature_dim: int = Field(default=96, ge=1, description="Coarse-level feature channels")
    hidden_dim: int = Field(default=96, ge=1, description="GRU hidden channels")
    context_dim: int = Field(default=64, ge=1, description="Context channels")
    corr_dim: int = Field(default=64, ge=1, description="Correlation motion feature channels")
    corr_radius: int = Field(default=4, ge=0, description="Lookup radius")
    corr_levels: int = Field(default=2, ge=1, description="Cost-volume pyramid levels")
    scales: list[int] = Field(default=[1, 2, 5], description="Difference sampling strides")
    reduction: int = Field(default=1, ge=1, description="Former-feature channel reduction r")
    iterations: int = Field(default=6, ge=1, description="Refinement iterations K")
    attention_reduction: int = Field(default=4, ge=1, description="Channel attention reduction")
    flow_stride: Literal[2, 4, 8] = Field(default=4, description="Flow resolution 1/flow_stride")

    use_difference: bool = Field(default=True, description="Enable the difference branch")
    use_correlation: bool = Field(default=True, description="Enable the correlation branch")
    use_channel_attention: bool = Field(default=True, description="Fuse branches with attention")
    use_scale_attention: bool = Field(default=True, description="Fuse scales with attention")
    use_former_conv: bool = Field(default=True, description="Apply the reduction convolution")
    difference_style: DifferenceStyle = Field(
        default="dwconv3d", description="Per-scale difference encoding"
    )

    @model_validator(mode="after")
    def validate_architecture(self) -> "ModelConfig":
        """Cross-field checks that pydantic field constraints cannot express."""
        if not self.scales:
            raise ValueError("scales must not be empty")
        if any(b <= a for a, b in zip(self.scales, self.scales[1:])):
            raise ValueError(f"scales must be strictly increasing, got {self.scales}")
        if self.scales[0] < 1 or self.scales[-1] > self.windows:
            raise ValueError(f"scales must lie in [1, {self.windows}], got {self.scales}")
        if self.feature_dim % self.reduction != 0:
            raise ValueError(
                f"feature_dim {self.feature_dim} is not divisible by reduction {self.reduction}"
            )
        if not self.use_former_conv and self.reduction != 1:
            raise ValueError("reduction must be 1 when the reduction convolution is disabled")
        if not (self.use_difference or self.use_correlation):
            raise ValueError("at least one of the difference and correlation branches is required")
        if self.use_channel_attention and self.motion_dim % self.attention_reduction != 0:
            raise ValueError(
                f"motion channels {self.motion_dim} not divisible by "
                f"attention_reduction {self.attention_reduction}"
            )
        return self

    @property
    def reduced_dim(self) -> int:
        """Channels of the former/latter features (d / r)."""
        return self.feature_dim // self.reduction

    @property
    def motion_dim(self) -> int:
        """Channels of the fused motion feature F_M."""
        dim = 0
        if self.use_difference:
            dim += self.feature_dim
        if self.use_correlation:
            dim += self.corr_dim
        return dim

    @property
    def lookup_dim(self) -> int:
        """Channels produced by one correlation lookup."""
        return self.corr_levels * (2 * self.corr_radius + 1) ** 2

    @property
    def upsample_factor(self) -> int:
        """Factor between the coarse (1/8) and fine levels."""
        return 8 // self.flow_stride


class TrainConfig(BaseModel):
    """Optimizer, schedule and loop settings for ``fit``."""

    model_config = ConfigDict(extra="forbid")

    max_lr: float = Field(default=2e-4, gt=0, description="Peak one-cycle learning rate")
    total_steps: int = Field(default=2000, ge=1, description="Optimizer steps")
    batch: int = Field(default=3, ge=1, description="Samples per step")
    weight_decay: float = Field(default=1e-4, ge=0, description="Decoupled weight decay")
    grad_clip: float = Field(default=1.0, gt=0, description="Global gradient-norm clip")
    seed: int = Field(default=0, description="Seed for sampling, augmentation and init")
    pct_start: float = Field(default=0.05, gt=0, lt=1, description="Warmup fraction")
    betas: tuple[float, float] = Field(default=(0.9, 0.999), description="AdamW betas")
    eps: float = Field(default=1e-8, gt=0, description="AdamW epsilon")
    gamma: float = Field(default=0.8, gt=0, le=1, description="Sequence-loss decay")
    crop: Optional[int] = Field(default=64, description="Square crop side (None = no crop)")
    hflip_prob: float = Field(default=0.5, ge=0, le=1, description="Horizontal flip probability")
    vflip_prob: float = Field(default=0.1, ge=0, le=1, description="Vertical flip probability")
    log_interval: int = Field(default=50, ge=1, description="Steps between log lines")
    val_interval: int = Field(default=250, ge=1, description="Steps between validations")
    double_precision: bool = Field(default=False, description="Train in float64")

    @field_validator("crop")
    @classmethod
    def validate_crop(cls, v: Optional[int]) -> Optional[int]:
        """Crops must keep the 1/8 grid intact.

        Raises:
            ValueError: If the crop is not a positive multiple of 8
        """
        if v is not None and (v <= 0 or v % 8 != 0):
            raise ValueError(f"crop must be a positive multiple of 8, got {v}")
        return v


class SynthConfig(BaseModel):
    """Synthetic event-camera dataset settings."""

    model_config = ConfigDict(extra="forbid")

    height: int = Field(default=64, ge=8, description="Sensor height in pixels")
    width: int = Field(default=64, ge=8, description="Sensor width in pixels")
    count: int = Field(default=512, ge=1, description="Number of samples")
    seed: int = Field(default=0, description="Dataset seed")
    windows: int = Field(default=5, ge=1, description="Current-stream window count g")
    bins: int = Field(default=3, ge=1, description="Temporal bins B")
    duration_us: int = Field(default=100_000, ge=1, description="Current-stream duration")
    contrast_threshold: float = Field(default=0.2, gt=0, description="Log-intensity threshold")
    max_displacement: float = Field(default=6.0, ge=0, description="Velocity disc radius (px)")
    noise_rate_hz: float = Field(default=0.0, ge=0, description="Background events per pixel/s")


def _validated(model: type[BaseModel], data: dict[str, Any]) -> Any:
    try:
        return model.model_validate(data)
    except ValidationError as e:
        raise InvalidConfig(str(e)) from e


def make_model_config(**overrides: Any) -> ModelConfig:
    """Build a ModelConfig, raising InvalidConfig instead of ValidationError."""
    return _validated(ModelConfig, overrides)


def make_train_config(**overrides: Any) -> TrainConfig:
    return _validated(TrainConfig, overrides)


def make_synth_config(**overrides: Any) -> SynthConfig:
    return _validated(SynthConfig, overrides)


def load_yaml_config(path: Path) -> tuple[ModelConfig, TrainConfig, SynthConfig]:
    """Load ``model``, ``train`` and ``synth`` sections from a YAML file.

    Missing sections fall back to defaults.

    Args:
        path: YAML document path

    Returns:
        Tuple of (ModelConfig, TrainConfig, SynthConfig)

    Raises:
        InvalidConfig: If the document or any section fails validation
    """
    try:
        with open(path, encoding="utf-8") as f:
            document = yaml.safe_load(f) or {}
    except OSError as e:
        raise InvalidConfig(f"cannot read config {path}: {e}") from e
    except yaml.YAMLError as e:
        raise InvalidConfig(f"{path}: invalid YAML: {e}") from e

    if not isinstance(document, dict):
        raise InvalidConfig(f"{path}: top level must be a mapping")

    return (
        _validated(ModelConfig, document.get("model") or {}),
        _validated(TrainConfig, document.get("train") or {}),
        _validated(SynthConfig, document.get("synth") or {}),
    )
