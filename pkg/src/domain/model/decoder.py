from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn


class SelfAttentionBlock(nn.Module):
    """Pre-norm residual block: single-head self-attention followed by an MLP.

    Returns the updated tokens and the softmax attention (rows sum to 1).
    """

    def __init__(self, dim: int, mlp_ratio: int = 2) -> None:
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.qkv = nn.Linear(dim, 3 * dim)
        self.out = nn.Linear(dim, dim)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(
            nn.Linear(dim, mlp_ratio * dim),
            nn.GELU(),
            nn.Linear(mlp_ratio * dim, dim),
        )
        self.scale = 1.0 / math.sqrt(dim)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        q, k, v = self.qkv(self.norm1(x)).chunk(3, dim=-1)
        attn = torch.softmax(q @ k.transpose(-1, -2) * self.scale, dim=-1)
        x = x + self.out(attn @ v)
        x = x + self.mlp(self.norm2(x))
        return x, attn


class MaskDecoder(nn.Module):
    """Decodes every conditioned token grid independently into a mask-logit channel.

    Weights are shared across channels, so the channel count follows the
    category vocabulary and permuting the input channels permutes the output.
    """

    def __init__(
        self,
        dim: int,
        factor: int,
        blocks: int = 2,
        attention_block: int = -1,
        upsample: str = "bilinear",
    ) -> None:
        super().__init__()
        self.factor = factor
        self.blocks = nn.ModuleList(SelfAttentionBlock(dim) for _ in range(blocks))
        self.attention_block = attention_block % blocks
        self.norm = nn.LayerNorm(dim)
        self.upsample = upsample
        if upsample == "transposed":
            self.head = nn.ConvTranspose2d(dim, 1, kernel_size=factor, stride=factor)
        else:
            self.head = nn.Conv2d(dim, 1, kernel_size=1)

    def forward(self, grids: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """(B, C, D, h, w) -> logits (B, C, h*f, w*f), attention (B, C, h, w, h, w)."""
        b, c, d, h, w = grids.shape
        x = grids.reshape(b * c, d, h * w).transpose(1, 2)
        kept = None
        for i, block in enumerate(self.blocks):
            x, attn = block(x)
            if i == self.attention_block:
                kept = attn
        feat = self.norm(x).transpose(1, 2).reshape(b * c, d, h, w)
        logits = self.head(feat)
        if self.upsample != "transposed":
            logits = F.interpolate(
                logits, scale_factor=self.factor, mode="bilinear", align_corners=False
            )
        logits = logits.reshape(b, c, h * self.factor, w * self.factor)
        return logits, kept.reshape(b, c, h, w, h, w)
