from __future__ import annotations

import torch
from torch import nn

from src.domain.errors import KindMismatch, ShapeMismatch


class FilmHead(nn.Module):
    """Generates a per-dimension (scale, shift) pair from a text embedding.

    Zero-initialized so an untrained head is the identity under ``film_modulate``.
    """

    def __init__(self, dim: int) -> None:
        super().__init__()
        self.dim = dim
        self.generator = nn.Linear(dim, 2 * dim)
        nn.init.zeros_(self.generator.weight)
        nn.init.zeros_(self.generator.bias)

    def forward(self, text: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        if text.shape[-1] != self.dim:
            raise ShapeMismatch(f"FiLM head expects dim {self.dim}, got {text.shape[-1]}")
        scale, shift = self.generator(text).chunk(2, dim=-1)
        return scale, shift


class ProjHead(nn.Module):
    """Linear map of the concatenation [obj | part] (2D) back to D. No bias."""

    def __init__(self, dim: int) -> None:
        super().__init__()
        self.dim = dim
        self.linear = nn.Linear(2 * dim, dim, bias=False)
        with torch.no_grad():
            eye = torch.eye(dim)
            self.linear.weight.copy_(0.5 * torch.cat([eye, eye], dim=1))

    def forward(self, concat: torch.Tensor) -> torch.Tensor:
        return self.linear(concat)


# e^I (+) FiLM(e^T): out = feat + (scale * feat + shift), channels on axis -3 of the grid
def film_modulate(feat: torch.Tensor, text: torch.Tensor, head: FilmHead) -> torch.Tensor:
    if feat.ndim < 3:
        raise ShapeMismatch(f"Expected a token grid (..., D, h, w), got shape {tuple(feat.shape)}")
    if text.shape[-1] != feat.shape[-3]:
        raise ShapeMismatch(
            f"Text dim {text.shape[-1]} does not match feature dim {feat.shape[-3]}"
        )
    scale, shift = head(text)
    return feat + (scale[..., None, None] * feat + shift[..., None, None])


def final_modulation(img_objpart: torch.Tensor, text_objpart: torch.Tensor, head: FilmHead):
    return film_modulate(img_objpart, text_objpart, head)


def _is_grid(x: torch.Tensor) -> bool:
    return x.ndim >= 3


def compose_objpart(obj: torch.Tensor, part: torch.Tensor, head: ProjHead) -> torch.Tensor:
    """Proj([obj | part]) for text vectors (..., D) or token grids (..., D, h, w)."""
    if _is_grid(obj) != _is_grid(part):
        raise KindMismatch("Object and part inputs must both be vectors or both be grids")
    if obj.shape != part.shape:
        raise ShapeMismatch(f"Shapes differ: {tuple(obj.shape)} vs {tuple(part.shape)}")
    channel_axis = -3 if _is_grid(obj) else -1
    if obj.shape[channel_axis] != head.dim:
        raise ShapeMismatch(f"Projection expects dim {head.dim}, got {obj.shape[channel_axis]}")
    if not _is_grid(obj):
        return head(torch.cat([obj, part], dim=-1))
    concat = torch.cat([obj, part], dim=-3).movedim(-3, -1)
    return head(concat).movedim(-1, -3)
