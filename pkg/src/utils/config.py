"""Configuration management for the thermal-event signage sketching pipeline."""
import os
from pathlib import Path
from typing import Optional, Tuple, Any, Dict

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from .exceptions import ConfigurationError, FileOperationError


class CalibConfig(BaseModel):
    """Robust homography fitting parameters."""
    min_corners: int = Field(20, ge=4, description="Minimum detectable corners per frame")
    max_corners: int = Field(500, ge=4)
    quality_levels: Tuple[float, ...] = Field((0.01, 0.003, 0.001), min_length=1)
    min_distance: int = Field(5, ge=1)
    ransac_threshold: float = Field(1.5, gt=0, description="Consensus threshold in pixels")
    min_inliers: int = Field(12, ge=4)
    max_rms: float = Field(1.0, gt=0, description="Maximum inlier reprojection RMS in pixels")
    ratio_test: float = Field(0.75, gt=0, lt=1)


class EventConfig(BaseModel):
    """Event slicing, rasterisation and denoising."""
    period_us: int = Field(20000, gt=0, description="Thermal frame period (50 fps)")
    t0_us: int = 0
    gain: float = Field(1.0 / 3.0, gt=0)
    denoise_radius: Tuple[int, int, int] = (1, 1, 1)
    min_support: int = Field(2, ge=1)

    @field_validator("denoise_radius")
    @classmethod
    def _non_negative_radius(cls, v):
        if any(r < 0 for r in v):
            raise ValueError("radius components must be >= 0")
        return v


class SimConfig(BaseModel):
    """Synthetic data generation."""
    contrast_threshold: float = Field(0.2, gt=0, description="Log-intensity units")
    window_us: int = Field(30000, gt=0)
    group_len: int = Field(7, ge=2)
    eps: float = Field(1e-3, gt=0)
    quant_levels: int = Field(16, ge=2)
    blur_sigma: float = Field(1.0, ge=0)


class PseudoGtConfig(BaseModel):
    """Mask segmentation and warp-and-vote parameters."""
    min_area: int = Field(25, ge=1)
    variance_window: int = Field(7, ge=3)
    variance_threshold: float = Field(1e-3, gt=0)
    uniform_fraction: float = Field(0.5, gt=0, le=1)
    vote_threshold: Optional[float] = Field(None, description="Defaults to T/2")
    denoise: bool = True

    @field_validator("variance_window")
    @classmethod
    def _odd_window(cls, v):
        if v % 2 == 0:
            raise ValueError("variance_window must be odd")
        return v


class SisConfig(BaseModel):
    """Signage Information Sketching network."""
    levels: int = Field(4, ge=1)
    base_channels: int = Field(32, ge=1)
    norm_groups: int = Field(8, ge=1)
    negative_slope: float = Field(0.2, ge=0)

    def channels(self, level: int) -> int:
        return self.base_channels * 2 ** level


class TccConfig(BaseModel):
    """Temporal Consistency Correction network."""
    n_frames: int = Field(7, ge=1)
    window: Tuple[int, int, int] = (2, 7, 7)
    stage_depths: Tuple[int, int, int, int] = (2, 2, 6, 2)
    embed_dim: int = Field(48, ge=1)
    heads: Tuple[int, int, int, int] = (3, 6, 12, 24)
    decoder_window: int = Field(7, ge=1)
    decoder_heads: int = Field(3, ge=1)
    detach_sis: bool = False

    @model_validator(mode="after")
    def _check_shapes(self):
        if any(w < 1 for w in self.window):
            raise ValueError("window dims must be >= 1")
        if any(d < 1 for d in self.stage_depths):
            raise ValueError("every stage needs at least one block")
        for stage, heads in enumerate(self.heads):
            dim = self.stage_dim(stage)
            if dim % heads:
                raise ValueError(f"stage {stage + 1} dim {dim} not divisible by {heads} heads")
        if self.embed_dim % self.decoder_heads:
            raise ValueError("embed_dim not divisible by decoder_heads")
        return self

    def stage_dim(self, stage: int) -> int:
        """Channel width entering stage ``stage`` (0-based)."""
        return self.embed_dim * 2 ** stage


class LossWeights(BaseModel):
    """Per-term weights of the total loss (unweighted sum by default)."""
    sis: float = Field(1.0, ge=0)
    tcc: float = Field(1.0, ge=0)
    per: float = Field(1.0, ge=0)
    grad: float = Field(1.0, ge=0)


class TrainConfig(BaseModel):
    """Optimisation and data sampling."""
    lr_start: float = Field(5e-4, gt=0)
    lr_end: float = Field(1e-6, gt=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.95, ge=0, lt=1)
    batch_size: int = Field(4, ge=1)
    epochs: int = Field(20, ge=1)
    crop: Optional[int] = Field(128, ge=8, description="Square crop side; None = half each dimension")
    augment: bool = True
    seed: int = 0
    group_len: int = Field(7, ge=1)
    stride: int = Field(7, ge=1)
    max_steps: Optional[int] = Field(None, ge=1)
    checkpoint_dir: str = "checkpoints"
    loss_weights: LossWeights = Field(default_factory=LossWeights)

    @model_validator(mode="after")
    def _check_lr(self):
        if not self.lr_start > self.lr_end:
            raise ValueError("lr_start must exceed lr_end")
        return self

    @classmethod
    def full_scale(cls, **overrides: Any) -> "TrainConfig":
        """Full-scale schedule: 1/4-area crops, batch 16, 300 epochs."""
        values: Dict[str, Any] = {"crop": None, "batch_size": 16, "epochs": 300}
        values.update(overrides)
        return cls(**values)


class NiqeConfig(BaseModel):
    """Natural-scene-statistics model fitting."""
    patch_size: int = Field(96, ge=8)
    sharpness_fraction: float = Field(0.75, ge=0, le=1)


class PipelineConfig(BaseModel):
    """Root configuration document."""
    sim: SimConfig = Field(default_factory=SimConfig)
    events: EventConfig = Field(default_factory=EventConfig)
    calib: CalibConfig = Field(default_factory=CalibConfig)
    pseudo_gt: PseudoGtConfig = Field(default_factory=PseudoGtConfig)
    sis: SisConfig = Field(default_factory=SisConfig)
    tcc: TccConfig = Field(default_factory=TccConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    niqe: NiqeConfig = Field(default_factory=NiqeConfig)

    log_level: str = "INFO"
    log_file: Optional[str] = None
    device: str = "cpu"

    @field_validator("log_level")
    @classmethod
    def _known_level(cls, v):
        if v.upper() not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
            raise ValueError(f"unknown log level {v}")
        return v.upper()

    def to_dict(self) -> dict:
        """
        Convert configuration to dictionary.

        Returns:
            JSON-serialisable dictionary
        """
        return self.model_dump(mode="json")


ENV_OVERRIDES = {
    "UTA_SEED": ("train", "seed"),
    "UTA_LOG_LEVEL": (None, "log_level"),
    "UTA_DEVICE": (None, "device"),
}


def _apply_env(doc: Dict[str, Any]) -> Dict[str, Any]:
    for var, (section, key) in ENV_OVERRIDES.items():
        value = os.getenv(var)
        if value is None or value == "":
            continue
        target = doc.setdefault(section, {}) if section else doc
        target[key] = value
    return doc


def load_config(path: Optional[str] = None) -> PipelineConfig:
    """
    Load and validate configuration.

    Args:
        path: Optional YAML or JSON document mirroring PipelineConfig

    Returns:
        PipelineConfig object

    Raises:
        ConfigurationError: If configuration is invalid
        FileOperationError: If the document cannot be read
    """
    load_dotenv()

    doc: Dict[str, Any] = {}
    if path:
        config_path = Path(path)
        if not config_path.is_file():
            raise FileOperationError("read", str(config_path), "config file not found")
        try:
            doc = yaml.safe_load(config_path.read_text()) or {}
        except yaml.YAMLError as e:
            raise ConfigurationError(str(config_path), f"unparseable document: {e}")
        if not isinstance(doc, dict):
            raise ConfigurationError(str(config_path), "top level must be a mapping")

    doc = _apply_env(doc)

    try:
        return PipelineConfig.model_validate(doc)
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(p) for p in first.get("loc", ())) or "config"
        raise ConfigurationError(field, first.get("msg", str(e)))
