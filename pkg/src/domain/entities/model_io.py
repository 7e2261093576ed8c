from __future__ import annotations

from dataclasses import dataclass

import torch

from src.domain.entities.attention import AttentionStack


@dataclass(frozen=True)
class ImageSpec:
    height: int
    width: int
    token_h: int
    token_w: int
    embed_dim: int

    def __post_init__(self) -> None:
        if self.embed_dim < 1:
            raise ValueError("embed_dim must be >= 1")
        if self.height % self.token_h or self.width % self.token_w:
            raise ValueError("Image size must be an integer multiple of the token grid")
        if self.height // self.token_h != self.width // self.token_w:
            raise ValueError("Upsampling factor must be equal along both axes")

    @property
    def factor(self) -> int:
        return self.height // self.token_h


@dataclass(frozen=True)
class EmbeddingBundle:
    """Intermediate embeddings of one batch for one category set.

    Text vectors are (n, D); image grids are (B, n, D, token_h, token_w) with
    ``img_feat`` (B, D, token_h, token_w) and ``background`` holding the two
    uncategory grids (pair group, object group).
    """

    text_obj: torch.Tensor
    text_part: torch.Tensor
    text_objpart: torch.Tensor
    img_feat: torch.Tensor
    img_obj: torch.Tensor
    img_part: torch.Tensor
    img_objpart: torch.Tensor
    final_objpart: torch.Tensor
    background: torch.Tensor


@dataclass(frozen=True)
class DecoderOutput:
    """Mask logits (B, channels, H, W) in taxonomy channel layout plus decoder attention."""

    mask_logits: torch.Tensor
    attention: AttentionStack

    @property
    def num_channels(self) -> int:
        return int(self.mask_logits.shape[1])
