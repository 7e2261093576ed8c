from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from src.domain.errors import BadLabelRange, MissingFile
from src.domain.services.taxonomy_service import TaxonomyService
from src.infrastructure.storage.dataset_storage import DatasetStorage

logger = logging.getLogger(__name__)

IGNORE_INDEX = 255


@dataclass
class ConvertDatasetUseCase:
    """Ingest ``images/*.{png,jpg}`` + ``labels/*.png`` index masks into the portable layout.

    Index i of a source mask is category i of ``categories``; 255 becomes background.
    """

    source: Path
    target: DatasetStorage

    def execute(
        self, categories: Sequence[str], unseen_objects: Sequence[str] = ()
    ) -> dict[str, Any]:
        taxonomy = TaxonomyService.build_taxonomy(categories, unseen_objects)
        images = sorted(
            p for p in (self.source / "images").glob("*") if p.suffix.lower() in {".png", ".jpg"}
        )
        rows = []
        for image_path in images:
            label_path = self.source / "labels" / f"{image_path.stem}.png"
            if not label_path.is_file():
                raise MissingFile(f"No label mask for {image_path.name}")
            index = DatasetStorage.read_label(label_path)
            valid = index != IGNORE_INDEX
            if np.any(index[valid] >= taxonomy.num_pairs) or np.any(index < 0):
                raise BadLabelRange(f"{label_path.name}: index outside the category list")
            label = np.where(valid, index + 1, 0)
            image = DatasetStorage.read_image(image_path)
            rows.append(self.target.write_sample(image_path.stem, image, label))
        self.target.write_manifest(rows)
        self.target.write_taxonomy(taxonomy)
        logger.info("Converted %d samples into %s", len(rows), self.target.root)
        return {"samples": len(rows), "num_obj_part": taxonomy.num_pairs}
