from __future__ import annotations

from typing import Any

from src.application.dtos.config_dto import ModelConfig
from src.domain.entities.model_io import ImageSpec
from src.domain.model.partseg_model import PartSegModel


def image_spec(cfg: ModelConfig) -> ImageSpec:
    return ImageSpec(
        height=cfg.image_size,
        width=cfg.image_size,
        token_h=cfg.token_grid,
        token_w=cfg.token_grid,
        embed_dim=cfg.embed_dim,
    )


def build_model(cfg: ModelConfig) -> PartSegModel:
    return PartSegModel(
        image_spec(cfg),
        blocks=cfg.decoder_blocks,
        attention_block=cfg.attention_block,
        share_film=cfg.share_film,
        upsample=cfg.upsample,
        seed=cfg.seed,
    )


def recorded_model_config(extra: dict[str, Any], fallback: ModelConfig) -> ModelConfig:
    """Model section stored with a checkpoint; ``fallback`` for archives written without one."""
    recorded = extra.get("model")
    return ModelConfig.model_validate(recorded) if recorded else fallback
