"""Report models written by training, evaluation and ablation runs."""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field


class StepReport(BaseModel):
    """Loss scalars of one optimizer step (one JSON line of the training log)."""

    model_config = ConfigDict(populate_by_name=True)

    step: int = Field(..., description="1-based optimizer step")
    l_mask: float = Field(..., alias="L_mask")
    l_sep: float = Field(..., alias="L_sep")
    l_enh: float = Field(..., alias="L_enh")
    l_all: float = Field(..., alias="L_all")
    lr: float = Field(..., description="Learning rate applied at this step")
    grad_norm: float = Field(..., description="Global gradient norm after clipping")
    grad_norm_raw: float = Field(..., description="Global gradient norm before clipping")


class MetricReport(BaseModel):
    """Evaluation result of one split under one protocol. IoU values lie in [0, 1]."""

    protocol: str = Field(..., description="pred_all or oracle_obj", examples=["oracle_obj"])
    num_samples: int = Field(..., ge=0)
    per_class_iou: dict[str, float | None] = Field(
        default_factory=dict, description="IoU per object-specific category; None = undefined"
    )
    seen_miou: float | None = None
    unseen_miou: float | None = None
    harmonic_miou: float | None = None
    per_class_boundary_iou: dict[str, float | None] = Field(default_factory=dict)
    boundary_seen_miou: float | None = None
    boundary_unseen_miou: float | None = None
    boundary_harmonic_miou: float | None = None
    per_class_recall: dict[str, float | None] = Field(default_factory=dict)
    seen_recall: float | None = None
    unseen_recall: float | None = None
    harmonic_recall: float | None = None
    part_iou: dict[str, float | None] = Field(
        default_factory=dict, description="Mean IoU per generalized part name"
    )
    overlap_fraction: float | None = Field(
        None, description="Mean overlap/union of binarized attention maps over the split"
    )
    config_hash: str | None = None


class AblationRow(BaseModel):
    label: str = Field(..., description="Row label, e.g. the threshold value")
    settings: dict[str, float | bool] = Field(default_factory=dict)
    seen: float | None = None
    unseen: float | None = None
    harmonic: float | None = None
    dot_iou: float | None = Field(None, description="IoU of the smallest generalized part")
    overlap_fraction: float | None = None


class AblationTable(BaseModel):
    title: str
    rows: list[AblationRow] = Field(default_factory=list)
