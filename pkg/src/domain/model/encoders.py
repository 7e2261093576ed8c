"""Frozen toy stand-ins for the pretrained text and image encoders."""

from __future__ import annotations

import hashlib
from collections.abc import Sequence

import torch
from torch import nn

from src.domain.entities.model_io import ImageSpec
from src.domain.errors import EmptyCategoryList, ShapeMismatch


def _stable_seed(seed: int, name: str) -> int:
    digest = hashlib.sha256(f"{seed}:{name}".encode()).digest()
    return int.from_bytes(digest[:8], "little") & 0x7FFF_FFFF_FFFF_FFFF


class ToyTextEncoder(nn.Module):
    """Maps a category name to a seeded pseudo-random unit vector; holds no parameters."""

    def __init__(self, dim: int, seed: int = 0) -> None:
        super().__init__()
        self.dim = dim
        self.seed = seed
        self._cache: dict[str, torch.Tensor] = {}

    def _vector(self, name: str) -> torch.Tensor:
        vec = self._cache.get(name)
        if vec is None:
            gen = torch.Generator().manual_seed(_stable_seed(self.seed, name))
            vec = torch.randn(self.dim, generator=gen, dtype=torch.float64)
            vec = vec / vec.norm()
            self._cache[name] = vec
        return vec

    def forward(self, names: Sequence[str], dtype: torch.dtype = torch.float32) -> torch.Tensor:
        if len(names) == 0:
            raise EmptyCategoryList("Cannot encode an empty list of names")
        return torch.stack([self._vector(n) for n in names]).to(dtype)


class ToyImageEncoder(nn.Module):
    """Strided linear patch embedding, frozen at construction."""

    def __init__(self, spec: ImageSpec, seed: int = 0) -> None:
        super().__init__()
        self.spec = spec
        self.patch = nn.Conv2d(3, spec.embed_dim, kernel_size=spec.factor, stride=spec.factor)
        gen = torch.Generator().manual_seed(seed)
        fan_in = 3 * spec.factor * spec.factor
        with torch.no_grad():
            weight = torch.randn(self.patch.weight.shape, generator=gen) / fan_in**0.5
            self.patch.weight.copy_(weight)
            self.patch.bias.zero_()
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        """(B, H, W, 3) or (H, W, 3) in [0, 1] -> (B, D, token_h, token_w)."""
        if images.ndim == 3:
            images = images.unsqueeze(0)
        if images.ndim != 4 or tuple(images.shape[1:]) != (self.spec.height, self.spec.width, 3):
            raise ShapeMismatch(
                f"Expected images of shape (B, {self.spec.height}, {self.spec.width}, 3), "
                f"got {tuple(images.shape)}"
            )
        return self.patch(images.permute(0, 3, 1, 2))
