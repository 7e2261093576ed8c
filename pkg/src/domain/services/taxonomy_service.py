from __future__ import annotations

import logging
from collections.abc import Iterable, Sequence
from typing import Any

import numpy as np

from src.domain.entities.taxonomy import Taxonomy
from src.domain.errors import (
    DuplicateCategory,
    MalformedCategoryName,
    TaxonomyInvariantError,
    UnknownUnseenObject,
)

logger = logging.getLogger(__name__)

SEPARATOR = "'s "


class TaxonomyService:
    """Parsing of object-specific category names and taxonomy bookkeeping."""

    # "chest of drawers's drawer" -> ("chest of drawers", "drawer"); split on the LAST separator
    @staticmethod
    def parse_category(name: str) -> tuple[str, str]:
        cut = name.rfind(SEPARATOR)
        if cut < 0:
            raise MalformedCategoryName(f"Missing possessive separator in {name!r}")
        obj = name[:cut].strip()
        part = name[cut + len(SEPARATOR) :].strip()
        if not obj or not part:
            raise MalformedCategoryName(f"Empty object or part in {name!r}")
        return obj, part

    @staticmethod
    def format_category(obj: str, part: str) -> str:
        return f"{obj}{SEPARATOR}{part}"

    @staticmethod
    def build_taxonomy(names: Sequence[str], unseen_objects: Iterable[str] = ()) -> Taxonomy:
        if not names:
            raise MalformedCategoryName("Category list is empty")
        trimmed = [n.strip() for n in names]
        seen_names: set[str] = set()
        objects: list[str] = []
        parts: list[str] = []
        obj_pos: dict[str, int] = {}
        part_pos: dict[str, int] = {}
        pair_index: list[tuple[int, int]] = []
        parts_of_object: dict[int, list[int]] = {}

        for k, name in enumerate(trimmed):
            if name in seen_names:
                raise DuplicateCategory(f"Duplicate category {name!r}")
            seen_names.add(name)
            obj, part = TaxonomyService.parse_category(name)
            if obj not in obj_pos:
                obj_pos[obj] = len(objects)
                objects.append(obj)
            if part not in part_pos:
                part_pos[part] = len(parts)
                parts.append(part)
            o, p = obj_pos[obj], part_pos[part]
            pair_index.append((o, p))
            parts_of_object.setdefault(o, []).append(k)

        unseen = frozenset(u.strip() for u in unseen_objects)
        unknown = sorted(unseen - set(objects))
        if unknown:
            raise UnknownUnseenObject(f"Unseen objects not in taxonomy: {unknown}")

        taxonomy = Taxonomy(
            obj_part_names=tuple(trimmed),
            objects=tuple(objects),
            parts=tuple(parts),
            pair_index=tuple(pair_index),
            parts_of_object={o: tuple(ks) for o, ks in parts_of_object.items()},
            unseen_objects=unseen,
        )
        TaxonomyService.validate(taxonomy)
        return taxonomy

    @staticmethod
    def split_indices(taxonomy: Taxonomy) -> tuple[frozenset[int], frozenset[int]]:
        unseen = frozenset(
            k for k in range(taxonomy.num_pairs) if taxonomy.is_unseen_pair(k)
        )
        seen = frozenset(range(taxonomy.num_pairs)) - unseen
        return seen, unseen

    @staticmethod
    def restrict(taxonomy: Taxonomy, keep: Iterable[int]) -> tuple[Taxonomy, np.ndarray]:
        """Sub-taxonomy over the kept categories plus a label lookup table.

        ``lut[label]`` maps a full-vocabulary label grid onto the sub-taxonomy;
        dropped categories become background.
        """
        kept = sorted(set(keep))
        if not kept:
            raise MalformedCategoryName("Restriction keeps no categories")
        names = [taxonomy.obj_part_names[k] for k in kept]
        unseen = {taxonomy.objects[taxonomy.pair_index[k][0]] for k in kept} & set(
            taxonomy.unseen_objects
        )
        sub = TaxonomyService.build_taxonomy(names, unseen)
        lut = np.zeros(taxonomy.num_pairs + 1, dtype=np.int64)
        for new, old in enumerate(kept):
            lut[old + 1] = new + 1
        return sub, lut

    @staticmethod
    def seen_subset(taxonomy: Taxonomy) -> tuple[Taxonomy, np.ndarray]:
        seen, _ = TaxonomyService.split_indices(taxonomy)
        return TaxonomyService.restrict(taxonomy, seen)

    @staticmethod
    def validate(taxonomy: Taxonomy) -> None:
        """Assert every structural invariant; raises TaxonomyInvariantError naming the entry."""
        if len(set(taxonomy.objects)) != len(taxonomy.objects):
            raise TaxonomyInvariantError("Duplicate object names")
        if len(set(taxonomy.parts)) != len(taxonomy.parts):
            raise TaxonomyInvariantError("Duplicate part names")
        if len(taxonomy.pair_index) != taxonomy.num_pairs:
            raise TaxonomyInvariantError("pair_index does not cover every category")
        seen_pairs: set[tuple[int, int]] = set()
        for k, (o, p) in enumerate(taxonomy.pair_index):
            name = taxonomy.obj_part_names[k]
            if not (0 <= o < taxonomy.num_objects and 0 <= p < taxonomy.num_parts):
                raise TaxonomyInvariantError(f"Index out of range for {name!r}")
            if (o, p) in seen_pairs:
                raise TaxonomyInvariantError(f"Pair of {name!r} is not unique")
            seen_pairs.add((o, p))
            expected = TaxonomyService.format_category(taxonomy.objects[o], taxonomy.parts[p])
            if expected != name:
                raise TaxonomyInvariantError(f"{name!r} does not round-trip (got {expected!r})")
            if k not in taxonomy.parts_of_object.get(o, ()):
                raise TaxonomyInvariantError(f"{name!r} missing from parts_of_object")
        seen, unseen = TaxonomyService.split_indices(taxonomy)
        if seen & unseen or (seen | unseen) != set(range(taxonomy.num_pairs)):
            raise TaxonomyInvariantError("Seen/unseen split does not partition the categories")

    @staticmethod
    def from_document(doc: dict[str, Any]) -> Taxonomy:
        """Build from the JSON schema ``{"categories": [...], "unseen_objects": [...]}``."""
        if not isinstance(doc, dict) or "categories" not in doc:
            raise MalformedCategoryName("Taxonomy document needs a 'categories' list")
        categories = doc["categories"]
        if not isinstance(categories, list) or not all(isinstance(c, str) for c in categories):
            raise MalformedCategoryName("'categories' must be a list of strings")
        unseen = doc.get("unseen_objects", [])
        return TaxonomyService.build_taxonomy(categories, unseen)

    @staticmethod
    def to_document(taxonomy: Taxonomy) -> dict[str, Any]:
        unseen = [o for o in taxonomy.objects if o in taxonomy.unseen_objects]
        return {"categories": list(taxonomy.obj_part_names), "unseen_objects": unseen}
