from __future__ import annotations

import colorsys
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from src.domain.entities.taxonomy import Taxonomy
from src.domain.services.taxonomy_service import TaxonomyService


@dataclass(frozen=True)
class ShapeSpec:
    name: str
    shape: str  # ellipse | rectangle | diamond
    hue: float
    unseen: bool = False


@dataclass(frozen=True)
class RenderParams:
    image_size: int
    cap_fraction: float
    small_part_ratio: float
    noise_level: float
    max_objects: int


# Part cues do not depend on the object: the cap is striped, the dot has one fixed
# colour, and only the flat body carries the object hue.
BODY_TONE = (0.85, 0.75)  # (saturation, value)
STRIPE_ROWS = 2
STRIPE_LIGHT = (0.95, 0.95, 0.95)
STRIPE_SHADE = 0.4
DOT_RGB = (1.0, 0.9, 0.1)
BACKGROUND = 0.12


class SyntheticService:
    """Renders images of parameterized shapes split into cap / body / dot parts."""

    @staticmethod
    def taxonomy(objects: Sequence[ShapeSpec], parts: Sequence[str]) -> Taxonomy:
        names = [TaxonomyService.format_category(o.name, p) for o in objects for p in parts]
        return TaxonomyService.build_taxonomy(names, [o.name for o in objects if o.unseen])

    @staticmethod
    def silhouette(shape: str, size: int, cy: float, cx: float, ry: float, rx: float):
        yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) + 0.5
        dy, dx = (yy - cy) / ry, (xx - cx) / rx
        if shape == "ellipse":
            return dy**2 + dx**2 <= 1.0
        if shape == "rectangle":
            return (np.abs(dy) <= 1.0) & (np.abs(dx) <= 1.0)
        return np.abs(dy) + np.abs(dx) <= 1.0

    @staticmethod
    def split_parts(
        mask: np.ndarray, cy: float, cx: float, ry: float, cap_fraction: float, ratio: float
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Top cap band, a small disc below the center and the remaining body tile ``mask``."""
        size = mask.shape[0]
        yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) + 0.5
        cap = mask & (yy < cy - ry + 2.0 * ry * cap_fraction)
        budget = ratio * int(mask.sum())
        radius = math.sqrt(budget / math.pi)
        dy = cy + 0.45 * ry
        dot = np.zeros_like(mask)
        while radius > 0.5:
            disc = mask & ~cap & ((yy - dy) ** 2 + (xx - cx) ** 2 <= radius**2)
            if disc.sum() <= budget:
                dot = disc
                break
            radius -= 0.25
        body = mask & ~cap & ~dot
        return cap, body, dot

    @staticmethod
    def paint(
        image: np.ndarray, parts: tuple[np.ndarray, np.ndarray, np.ndarray], hue: float
    ) -> None:
        cap, body, dot = parts
        body_rgb = np.array(colorsys.hsv_to_rgb(hue, *BODY_TONE))
        light = (np.arange(image.shape[0]) // STRIPE_ROWS) % 2 == 0
        stripes = np.where(light[:, None, None], STRIPE_LIGHT, body_rgb * STRIPE_SHADE)
        stripes = np.broadcast_to(stripes, image.shape)
        image[cap] = stripes[cap]
        image[body] = body_rgb
        image[dot] = DOT_RGB

    @staticmethod
    def render(
        rng: np.random.Generator,
        placements: Sequence[tuple[int, ShapeSpec]],
        params: RenderParams,
    ) -> tuple[np.ndarray, np.ndarray]:
        """One image (H, W, 3) in [0, 1] and its label grid.

        ``placements`` holds (taxonomy object index, spec) pairs, drawn left to right in
        equal-width slots so objects never overlap.
        """
        size = params.image_size
        image = np.full((size, size, 3), BACKGROUND, dtype=np.float64)
        label = np.zeros((size, size), dtype=np.int64)
        slot = size / len(placements)
        for i, (obj_pos, spec) in enumerate(placements):
            ry = rng.uniform(0.28, 0.42) * size
            rx = rng.uniform(0.28, 0.42) * slot
            cy = size / 2.0 + rng.uniform(-0.05, 0.05) * size
            cx = slot * (i + 0.5) + rng.uniform(-0.05, 0.05) * slot
            mask = SyntheticService.silhouette(spec.shape, size, cy, cx, ry, rx)
            parts = SyntheticService.split_parts(
                mask, cy, cx, ry, params.cap_fraction, params.small_part_ratio
            )
            SyntheticService.paint(image, parts, spec.hue)
            for p, part_mask in enumerate(parts):
                label[part_mask] = obj_pos * 3 + p + 1
        image += rng.normal(0.0, params.noise_level, size=image.shape)
        return np.clip(image, 0.0, 1.0).astype(np.float32), label

    @staticmethod
    def choose_objects(
        rng: np.random.Generator, pool: Sequence[int], max_objects: int, force: int | None = None
    ) -> list[int]:
        count = int(rng.integers(1, max_objects + 1))
        picked = [int(i) for i in rng.choice(pool, size=count, replace=True)]
        if force is not None and force not in picked:
            picked[0] = force
        return picked

