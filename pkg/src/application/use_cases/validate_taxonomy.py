from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from src.domain.errors import TaxonomyInvariantError
from src.domain.services.taxonomy_service import TaxonomyService
from src.infrastructure.storage.dataset_storage import DatasetStorage

logger = logging.getLogger(__name__)


@dataclass
class ValidateTaxonomyUseCase:
    storage: DatasetStorage

    def execute(self, source: str | Path) -> dict[str, Any]:
        """Build the taxonomy, check every invariant and the parse/format round-trip."""
        taxonomy = self.storage.load_taxonomy(source)
        for name in taxonomy.obj_part_names:
            obj, part = TaxonomyService.parse_category(name)
            if TaxonomyService.format_category(obj, part) != name:
                raise TaxonomyInvariantError(f"{name!r} does not round-trip")
        seen, unseen = TaxonomyService.split_indices(taxonomy)
        summary = {
            "source": str(source),
            "num_obj_part": taxonomy.num_pairs,
            "num_objects": taxonomy.num_objects,
            "num_parts": taxonomy.num_parts,
            "num_seen": len(seen),
            "num_unseen": len(unseen),
            "unseen_objects": sorted(taxonomy.unseen_objects),
        }
        logger.info(
            "Taxonomy %s: %d categories (%d seen, %d unseen)",
            source,
            taxonomy.num_pairs,
            len(seen),
            len(unseen),
        )
        return summary
