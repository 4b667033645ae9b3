import math
from typing import Dict, List, Literal

from pydantic import BaseModel, Field, field_validator


class EpochLog(BaseModel):
    """One line of the JSON-lines training log."""

    epoch: int = Field(..., ge=0, description="Global epoch index across stages and sizes.")
    stage: int = Field(..., ge=1)
    size: int = Field(..., ge=1)
    mean_train_loss: float
    lr: float = Field(..., description="Scheduled lr at the midpoint iteration of the epoch.")
    wall_time: float = Field(..., ge=0.0, description="Seconds spent in the epoch.")

    @field_validator("mean_train_loss")
    @classmethod
    def _finite_loss(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("epoch loss is not finite")
        return value


class ImageMetrics(BaseModel):
    """Tolerance-matched counts and scores of a single image."""

    image: str
    tp_pr: int = Field(..., ge=0, description="Predicted positives inside the dilated ground truth.")
    fp: int = Field(..., ge=0)
    tp_re: int = Field(..., ge=0, description="Ground-truth positives inside the dilated prediction.")
    fn: int = Field(..., ge=0)
    precision: float = Field(..., ge=0.0, le=1.0)
    recall: float = Field(..., ge=0.0, le=1.0)
    f1: float = Field(..., ge=0.0, le=1.0)


class MetricsReport(BaseModel):
    """Per-image rows plus dataset means, serialized as the evaluation JSON report."""

    per_image: List[ImageMetrics]
    mean_precision: float = Field(..., ge=0.0, le=1.0)
    mean_recall: float = Field(..., ge=0.0, le=1.0)
    mean_f1: float = Field(..., ge=0.0, le=1.0)
    tolerance_radius: int = Field(..., ge=0)
    aggregate: Literal["image", "pixel"] = "image"

    def summary_line(self) -> str:
        """Means at the 4-decimal precision of published result tables."""
        return f"Pr {self.mean_precision:.4f} Re {self.mean_recall:.4f} F1 {self.mean_f1:.4f}"


class AblationArm(BaseModel):
    """One trained-and-evaluated configuration of an ablation."""

    label: str
    overrides: Dict[str, object] = Field(default_factory=dict)
    report: MetricsReport


class AblationReport(BaseModel):
    """Side-by-side result of the two arms of an ablation."""

    name: Literal["one-stage-vs-two-stage", "scse", "progressive-sizes"]
    arms: List[AblationArm]
    columns: List[str] = Field(default_factory=lambda: ["Pr", "Re", "F1"])
