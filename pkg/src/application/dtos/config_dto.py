"""Configuration models. Every leaf is addressable by a dotted path (``train.attn.gamma``)."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ModelConfig(_Section):
    """Toy encoder/decoder geometry."""

    image_size: int = Field(64, description="Square input size H = W in pixels", gt=0)
    token_grid: int = Field(16, description="Token grid size token_h = token_w", gt=0)
    embed_dim: int = Field(32, description="Embedding dimension D", ge=1)
    decoder_blocks: int = Field(2, description="Residual self-attention blocks", ge=1)
    attention_block: int = Field(
        -1, description="Decoder block whose self-attention feeds attention control"
    )
    share_film: bool = Field(
        False, description="Share one FiLM head between the object and part branches"
    )
    upsample: Literal["bilinear", "transposed"] = Field(
        "bilinear", description="Token-to-pixel upsampling of mask logits"
    )
    seed: int = Field(0, description="Seed of the frozen encoders and initial weights")

    @model_validator(mode="after")
    def _integer_upsampling(self) -> ModelConfig:
        if self.image_size % self.token_grid != 0:
            raise ValueError("image_size must be an integer multiple of token_grid")
        if not -self.decoder_blocks <= self.attention_block < self.decoder_blocks:
            raise ValueError("attention_block out of range")
        return self


class AttnControlConfig(_Section):
    """Attention-control hyper-parameters."""

    gamma: float = Field(0.3, description="Binarization threshold", gt=0.0, lt=1.0)
    gaussian_sigma: float = Field(1.0, description="Gaussian smoothing sigma in tokens", gt=0.0)
    gaussian_kernel: int = Field(3, description="Odd Gaussian kernel size", ge=1)
    tau: float = Field(0.05, description="Soft-binarization temperature", gt=0.0)
    eps: float = Field(1e-8, description="Denominator guard", gt=0.0)
    enh_source: Literal["normalized", "raw"] = Field(
        "normalized", description="Map maximized by the enhancement loss"
    )
    sep_denominator: Literal["taxonomy", "present"] = Field(
        "taxonomy", description="|C| of the separation loss: all categories or present ones"
    )

    @field_validator("gaussian_kernel")
    @classmethod
    def _odd_kernel(cls, v: int) -> int:
        if v % 2 != 1:
            raise ValueError("gaussian_kernel must be odd")
        return v


class LossWeights(_Section):
    lambda_obj: float = Field(1.0, description="Object guidance weight", ge=0.0)
    lambda_part: float = Field(1.0, description="Generalized part guidance weight", ge=0.0)
    lambda_sep: float = Field(0.1, description="Separation loss weight", ge=0.0)
    lambda_enh: float = Field(0.1, description="Enhancement loss weight", ge=0.0)


class TrainConfig(_Section):
    """Optimizer, schedule and bookkeeping of a training run."""

    base_lr: float = Field(1e-4, description="Base learning rate", gt=0.0)
    total_iters: int = Field(20000, description="Optimizer steps", ge=1)
    batch_size: int = Field(8, description="Images per step", ge=1)
    warmup_iters: int = Field(200, description="Linear warmup steps", ge=0)
    poly_power: float = Field(0.9, description="Poly decay power", gt=0.0)
    grad_clip_norm: float = Field(0.01, description="Global gradient-norm clip", gt=0.0)
    checkpoint_every: int = Field(1000, description="Checkpoint interval in steps", ge=1)
    eval_every: int = Field(
        0, description="Validation interval for best-checkpoint (0 = off)", ge=0
    )
    weight_decay: float = Field(1e-4, description="Decoupled weight decay", ge=0.0)
    beta1: float = Field(0.9, description="First-moment decay", ge=0.0, lt=1.0)
    beta2: float = Field(0.999, description="Second-moment decay", ge=0.0, lt=1.0)
    seed: int = Field(0, description="Seed of sampling and trainable initialization")
    loss: LossWeights = Field(default_factory=LossWeights)
    attn: AttnControlConfig = Field(default_factory=AttnControlConfig)

    @model_validator(mode="after")
    def _warmup_within_run(self) -> TrainConfig:
        if self.warmup_iters >= self.total_iters:
            raise ValueError("warmup_iters must be smaller than total_iters")
        return self


class ObjectSpec(_Section):
    name: str = Field(..., description="Object category name")
    shape: Literal["ellipse", "rectangle", "diamond"] = Field(..., description="Silhouette")
    hue: float = Field(..., description="Base hue in [0, 1)", ge=0.0, lt=1.0)
    unseen: bool = Field(False, description="Excluded from the train split")


def _default_objects() -> tuple[ObjectSpec, ...]:
    return (
        ObjectSpec(name="blobA", shape="ellipse", hue=0.0),
        ObjectSpec(name="blobB", shape="rectangle", hue=0.33),
        ObjectSpec(name="blobC", shape="diamond", hue=0.66, unseen=True),
    )


class SynthConfig(_Section):
    """Synthetic object/part benchmark."""

    image_size: int = Field(64, description="Square image size in pixels", ge=16)
    objects: tuple[ObjectSpec, ...] = Field(default_factory=_default_objects)
    parts: tuple[str, str, str] = Field(
        ("cap", "body", "dot"), description="Part names: top band, remainder, small disc"
    )
    cap_fraction: float = Field(0.3, description="Height fraction of the cap band", gt=0, lt=1)
    small_part_ratio: float = Field(
        0.05, description="Upper bound of the dot area as object-area fraction", gt=0.0, le=0.2
    )
    max_objects_per_image: int = Field(2, description="Objects drawn per image", ge=1, le=4)
    noise_level: float = Field(0.04, description="Std of additive pixel noise", ge=0.0)
    train_samples: int = Field(500, description="Samples in the train split", ge=1)
    val_samples: int = Field(100, description="Samples in the val split", ge=1)
    seed: int = Field(0, description="Generator seed")

    @model_validator(mode="after")
    def _vocabulary(self) -> SynthConfig:
        names = [o.name for o in self.objects]
        if len(set(names)) != len(names):
            raise ValueError("object names must be unique")
        if len(set(self.parts)) != 3:
            raise ValueError("part names must be distinct")
        if not any(not o.unseen for o in self.objects):
            raise ValueError("at least one seen object is required")
        return self


class EvalConfig(_Section):
    include_background: bool = Field(False, description="Count background in mIoU means")
    boundary_dilation: int | None = Field(
        None, description="Boundary band width d (default 2% of the image diagonal)", ge=1
    )
    batch_size: int = Field(8, description="Images per forward pass", ge=1)
    attention_diagnostics: bool = Field(
        True, description="Report overlap fraction of binarized attention maps"
    )


class RunConfig(_Section):
    """Effective configuration of one CLI invocation."""

    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    synth: SynthConfig = Field(default_factory=SynthConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)
