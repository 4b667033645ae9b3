from enum import Enum
from typing import ClassVar, List, Literal, Optional, Tuple, Type, TypeVar

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from crackSeg.config import config
from crackSeg.errors import ConfigError

ModelT = TypeVar("ModelT", bound=BaseModel)


class LayerGroup(str, Enum):
    """The three learning-rate / freeze groups of the network."""

    G1 = "G1"  # input stem through the 128-channel residual stage
    G2 = "G2"  # 256-channel stage through the end of the encoder
    G3 = "G3"  # decoder, skip projections and head


class ModelConfig(BaseModel):
    """Architecture switches for the U-Net / ResNet-34 segmentation network."""

    use_scse: bool = Field(True, description="Insert SCSE modules between BN and transposed conv in the decoder.")
    input_channels: int = Field(3, ge=1, description="Channels of the input image.")
    pretrained_encoder_path: Optional[str] = Field(
        None, description="Checkpoint whose encoder.* tensors initialize the encoder."
    )
    scse_reduction: int = Field(16, ge=1, description="Channel squeeze ratio r of the SCSE channel gate.")
    base_channels: int = Field(64, ge=4, description="Width of the stem; stages use 1x, 2x, 4x, 8x this.")
    blocks_per_stage: List[int] = Field(
        default_factory=lambda: [3, 4, 6, 3], description="Basic blocks in each of the four residual stages."
    )
    dtype: Literal["float32", "float64"] = Field("float32", description="Parameter and activation dtype.")
    init_seed: int = Field(0, description="Seed for He initialization.")

    @field_validator("base_channels")
    @classmethod
    def _base_divisible(cls, value: int) -> int:
        if value % 4:
            raise ValueError("base_channels must be divisible by 4 so every decoder block keeps >= 1 channel")
        return value

    @field_validator("blocks_per_stage")
    @classmethod
    def _four_stages(cls, value: List[int]) -> List[int]:
        if len(value) != 4 or any(blocks < 1 for blocks in value):
            raise ValueError("blocks_per_stage needs four positive entries")
        return value

    @classmethod
    def reduced(cls, **overrides) -> "ModelConfig":
        """Small variant (one block per stage, 8 base channels) that still exercises every layer kind."""
        params = {"base_channels": 8, "blocks_per_stage": [1, 1, 1, 1]}
        params.update(overrides)
        return cls(**params)


class AdamWHyper(BaseModel):
    """AdamW hyperparameters."""

    beta1: float = Field(config.ADAMW_BETA1, ge=0.0, lt=1.0)
    beta2: float = Field(config.ADAMW_BETA2, ge=0.0, lt=1.0)
    eps: float = Field(config.ADAMW_EPS, gt=0.0)
    weight_decay: float = Field(config.ADAMW_WEIGHT_DECAY, ge=0.0)
    decay_scaled_by_lr: bool = Field(
        False, description="Use the reference decay theta -= lr * lambda * theta instead of (1 - lambda) * theta."
    )


class OneCycleConfig(BaseModel):
    """Single triangular learning-rate cycle."""

    lr_max: float = Field(..., gt=0.0)
    min_frac: float = Field(config.ONE_CYCLE_MIN_FRAC, gt=0.0, lt=1.0)
    warm_frac: float = Field(config.ONE_CYCLE_WARM_FRAC, gt=0.0, lt=1.0)
    final_frac: float = Field(config.ONE_CYCLE_FINAL_FRAC, gt=0.0)
    total_iterations: int = Field(..., ge=1)

    @model_validator(mode="after")
    def _final_below_min(self) -> "OneCycleConfig":
        if self.final_frac > self.min_frac:
            raise ValueError("final_frac must not exceed min_frac")
        return self


class GroupScale(BaseModel):
    """Per-group multipliers applied to the scheduled learning rate."""

    model_config = ConfigDict(frozen=True)

    g1: float = config.GROUP_SCALES[0]
    g2: float = config.GROUP_SCALES[1]
    g3: float = config.GROUP_SCALES[2]

    def of(self, group: LayerGroup) -> float:
        return {LayerGroup.G1: self.g1, LayerGroup.G2: self.g2, LayerGroup.G3: self.g3}[group]


class AugmentSpec(BaseModel):
    """Random rotation, flips and lighting applied to training samples."""

    rotation_min: float = Field(0.0, ge=0.0, le=360.0, description="Lower bound of the rotation angle in degrees.")
    rotation_max: float = Field(360.0, ge=0.0, le=360.0, description="Upper bound (exclusive) in degrees.")
    hflip_prob: float = Field(0.5, ge=0.0, le=1.0)
    vflip_prob: float = Field(0.5, ge=0.0, le=1.0)
    lighting_delta: float = Field(0.05, ge=0.0, le=0.5, description="Bound of brightness and contrast changes.")

    @model_validator(mode="after")
    def _ordered_range(self) -> "AugmentSpec":
        if self.rotation_min > self.rotation_max:
            raise ValueError("rotation_min must not exceed rotation_max")
        return self


class SizeSchedule(BaseModel):
    """Image sizes trained in order."""

    sizes: List[int] = Field(default_factory=lambda: list(config.DEFAULT_SIZES))

    @field_validator("sizes")
    @classmethod
    def _increasing_multiples(cls, value: List[int]) -> List[int]:
        if not value:
            raise ValueError("size schedule is empty")
        for size in value:
            if size <= 0 or size % config.SIZE_MULTIPLE:
                raise ValueError(f"size {size} is not a positive multiple of {config.SIZE_MULTIPLE}")
        if any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError(f"sizes must be strictly increasing, got {value}")
        return value


class ToleranceConfig(BaseModel):
    """Spatial tolerance used when matching predicted and labelled crack pixels."""

    radius: int = Field(config.DEFAULT_TOLERANCE_RADIUS, ge=0)
    distance: Literal["chebyshev"] = "chebyshev"


class TrainConfig(BaseModel):
    """Training procedure: two-stage fine-tuning, progressive sizes, ablation toggles."""

    lr_max: Optional[float] = Field(None, gt=0.0, description="Peak learning rate; required to train.")
    batch_size: int = Field(4, ge=1)
    epochs_stage1: int = Field(15, ge=1)
    epochs_stage2: int = Field(30, ge=1)
    size_schedule: SizeSchedule = Field(default_factory=SizeSchedule)
    two_stage: bool = True
    progressive: bool = True
    epochs_per_size: int = Field(30, ge=1)
    single_size_epochs: Optional[int] = Field(
        None, ge=1, description="Total epochs of a single-size run; defaults to epochs_per_size * len(sizes)."
    )
    seed: int = 0
    checkpoint_dir: str = "checkpoints"
    adamw: AdamWHyper = Field(default_factory=AdamWHyper)

    def require_lr(self) -> float:
        if self.lr_max is None:
            message = "lr_max is required for training (run a short range test to pick one)."
            config.logger.error(message)
            raise ConfigError(message)
        return self.lr_max


class RunConfig(BaseModel):
    """Everything a CLI run needs, parsed from a flat YAML file plus flag overrides."""

    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    tolerance: ToleranceConfig = Field(default_factory=ToleranceConfig)
    augment: AugmentSpec = Field(default_factory=AugmentSpec)
    dataset_root: Optional[str] = None
    output_dir: str = "runs"
    threads: Optional[int] = Field(None, ge=1)
    aggregate: Literal["image", "pixel"] = "image"
    train_ratio: float = Field(config.TRAIN_RATIO, gt=0.0, lt=1.0)

    SECTIONS: ClassVar[Tuple[str, ...]] = ("model", "train", "tolerance", "augment")

    @classmethod
    def from_flat(cls, values: dict) -> "RunConfig":
        """
        Route flat `key: value` pairs onto the nested sections.

        A key shared by several sections is applied to all of them.
        `sizes` targets the size schedule.

        Args:
            values (dict): Flat mapping from a config file and/or CLI flags.

        Returns:
            RunConfig: The validated configuration.
        """
        nested: dict = {section: {} for section in cls.SECTIONS}
        top: dict = {}
        section_fields = {
            "model": ModelConfig.model_fields,
            "train": TrainConfig.model_fields,
            "tolerance": ToleranceConfig.model_fields,
            "augment": AugmentSpec.model_fields,
        }
        for key, value in values.items():
            if value is None:
                continue
            if key == "sizes":
                nested["train"]["size_schedule"] = {"sizes": value}
                continue
            if key in AdamWHyper.model_fields:
                nested["train"].setdefault("adamw", {})[key] = value
                continue
            routed = False
            for section, fields in section_fields.items():
                if key in fields:
                    nested[section][key] = value
                    routed = True
            if key in cls.model_fields and key not in cls.SECTIONS:
                top[key] = value
                routed = True
            if not routed:
                message = f"Unknown configuration key `{key}`."
                config.logger.error(message)
                raise ConfigError(message)
        return parse_config(cls, {**top, **nested})

    def to_flat(self) -> dict:
        """Flat `key: value` mapping that `from_flat` (and so `--config`) reads back unchanged."""
        flat = self.model_dump(exclude=set(self.SECTIONS))
        flat.update(self.model.model_dump())
        flat.update(self.train.model_dump(exclude={"size_schedule", "adamw"}))
        flat["sizes"] = list(self.train.size_schedule.sizes)
        flat.update(self.train.adamw.model_dump())
        flat.update(self.tolerance.model_dump())
        flat.update(self.augment.model_dump())
        return flat

    def require_training_fields(self) -> None:
        if not self.dataset_root:
            message = "dataset_root is required for training."
            config.logger.error(message)
            raise ConfigError(message)
        self.train.require_lr()


def parse_config(model_cls: Type[ModelT], data) -> ModelT:
    """Validate `data` into `model_cls`, turning pydantic failures into ConfigError."""
    if isinstance(data, model_cls):
        return data
    try:
        return model_cls.model_validate(data)
    except ValidationError as e:
        config.logger.error(f"Invalid {model_cls.__name__}: {e}")
        raise ConfigError(str(e)) from e
