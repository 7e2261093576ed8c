from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from src.application.dtos.config_dto import SynthConfig
from src.domain.services.synthetic_service import RenderParams, ShapeSpec, SyntheticService
from src.infrastructure.storage.dataset_storage import DatasetStorage

logger = logging.getLogger(__name__)

SPLITS = ("train", "val")


@dataclass
class GenerateSyntheticUseCase:
    root: Path

    def execute(self, cfg: SynthConfig) -> dict[str, Any]:
        """Write ``train/`` (seen objects only) and ``val/`` (seen + unseen) dataset dirs."""
        specs = [ShapeSpec(o.name, o.shape, o.hue, o.unseen) for o in cfg.objects]
        taxonomy = SyntheticService.taxonomy(specs, cfg.parts)
        params = RenderParams(
            image_size=cfg.image_size,
            cap_fraction=cfg.cap_fraction,
            small_part_ratio=cfg.small_part_ratio,
            noise_level=cfg.noise_level,
            max_objects=cfg.max_objects_per_image,
        )
        seen_pool = [i for i, s in enumerate(specs) if not s.unseen]
        unseen_pool = [i for i, s in enumerate(specs) if s.unseen]
        counts = {"train": cfg.train_samples, "val": cfg.val_samples}
        summary: dict[str, Any] = {"root": str(self.root), "num_obj_part": taxonomy.num_pairs}

        for split_id, split in enumerate(SPLITS):
            storage = DatasetStorage(self.root / split)
            rng = np.random.default_rng([cfg.seed, split_id])
            pool = seen_pool if split == "train" else list(range(len(specs)))
            rows = []
            unseen_images = 0
            for n in range(counts[split]):
                force = unseen_pool[0] if split == "val" and n == 0 and unseen_pool else None
                picked = SyntheticService.choose_objects(rng, pool, params.max_objects, force)
                image, label = SyntheticService.render(
                    rng, [(i, specs[i]) for i in picked], params
                )
                unseen_images += any(specs[i].unseen for i in picked)
                rows.append(storage.write_sample(f"{split}_{n:05d}", image, label))
            storage.write_manifest(rows)
            storage.write_taxonomy(taxonomy)
            summary[split] = {"samples": len(rows), "unseen_images": unseen_images}
            logger.info("Wrote %d %s samples to %s", len(rows), split, storage.root)
        return summary
