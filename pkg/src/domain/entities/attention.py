from __future__ import annotations

from dataclasses import dataclass

import torch


@dataclass(frozen=True)
class AttentionStack:
    """Decoder self-attention per object channel and per generalized-part channel.

    ``obj`` is (B, |C_obj|, th, tw, th, tw) and ``part`` is (B, |C_part|, th, tw, th, tw);
    every row ``[..., h, w, :, :]`` is a softmax row.
    """

    obj: torch.Tensor
    part: torch.Tensor

    @property
    def token_shape(self) -> tuple[int, int]:
        return int(self.obj.shape[-2]), int(self.obj.shape[-1])

    def for_sample(self, b: int) -> AttentionStack:
        return AttentionStack(obj=self.obj[b], part=self.part[b])


@dataclass(frozen=True)
class MaskAttention:
    """Per present category: raw aggregated map, normalized map and its binarization."""

    pairs: tuple[int, ...]
    raw: torch.Tensor  # (n, th, tw)
    norm: torch.Tensor  # (n, th, tw) in [0, 1]
    binary: torch.Tensor  # (n, th, tw) in {0, 1}
    masks: torch.Tensor  # (n, th, tw) token-grid masks M_c
