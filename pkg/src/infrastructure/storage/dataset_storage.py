"""Portable dataset layout: ``images/``, ``labels/``, ``manifest.tsv``, ``taxonomy.json``.

Images are 8-bit RGB PNGs, labels 16-bit grayscale PNGs where 0 is background
and k is object-specific category k (1-based). Manifest rows hold
``image_path<TAB>label_path`` relative to the dataset root.
"""

from __future__ import annotations

import json
import logging
from collections.abc import Iterable
from pathlib import Path

import numpy as np
from PIL import Image

from src.domain.entities.sample import Sample, SampleRef
from src.domain.entities.taxonomy import Taxonomy
from src.domain.errors import BadLabelRange, MissingFile
from src.domain.services.taxonomy_service import TaxonomyService

logger = logging.getLogger(__name__)

MANIFEST = "manifest.tsv"
TAXONOMY = "taxonomy.json"
RESOURCES = Path(__file__).resolve().parent.parent / "resources"
PRESETS = ("pascal_part_116", "ade20k_part_234", "partimagenet_40")


def resolve_taxonomy_source(source: str | Path) -> Path:
    """Preset name of a bundled category table, a taxonomy JSON, or a dataset directory."""
    if str(source) in PRESETS:
        return RESOURCES / f"{source}.json"
    path = Path(source)
    return path / TAXONOMY if path.is_dir() else path


class DatasetStorage:
    """Filesystem adapter for one dataset directory."""

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)

    # --------- encoding ---------
    @staticmethod
    def encode_image(array: np.ndarray) -> Image.Image:
        arr = np.clip(np.asarray(array, dtype=np.float32), 0.0, 1.0)
        return Image.fromarray(np.round(arr[..., :3] * 255.0).astype("uint8"), mode="RGB")

    @staticmethod
    def encode_label(label: np.ndarray) -> Image.Image:
        label = np.asarray(label)
        if label.min(initial=0) < 0 or label.max(initial=0) > 65535:
            raise BadLabelRange("Label values must fit in 16 bits")
        return Image.fromarray(label.astype(np.uint16))

    @staticmethod
    def read_image(path: Path) -> np.ndarray:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB")).astype(np.float32) / 255.0

    @staticmethod
    def read_label(path: Path) -> np.ndarray:
        with Image.open(path) as img:
            return np.asarray(img).astype(np.int64)

    # --------- writing ---------
    def write_sample(self, sample_id: str, image: np.ndarray, label: np.ndarray) -> tuple[str, str]:
        image_rel = f"images/{sample_id}.png"
        label_rel = f"labels/{sample_id}.png"
        for rel in (image_rel, label_rel):
            (self.root / rel).parent.mkdir(parents=True, exist_ok=True)
        self.encode_image(image).save(self.root / image_rel, format="PNG")
        self.encode_label(label).save(self.root / label_rel, format="PNG")
        return image_rel, label_rel

    def write_manifest(self, rows: Iterable[tuple[str, str]], name: str = MANIFEST) -> Path:
        path = self.root / name
        path.parent.mkdir(parents=True, exist_ok=True)
        text = "".join(f"{image}\t{label}\n" for image, label in rows)
        path.write_text(text, encoding="utf-8")
        return path

    def write_taxonomy(self, taxonomy: Taxonomy) -> Path:
        path = self.root / TAXONOMY
        path.parent.mkdir(parents=True, exist_ok=True)
        doc = TaxonomyService.to_document(taxonomy)
        path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
        return path

    # --------- reading ---------
    def load_taxonomy(self, path: str | Path | None = None) -> Taxonomy:
        path = resolve_taxonomy_source(path) if path is not None else self.root / TAXONOMY
        if not path.is_file():
            raise MissingFile(f"Taxonomy file not found: {path}")
        return TaxonomyService.from_document(json.loads(path.read_text(encoding="utf-8")))

    def load_manifest(self, name: str = MANIFEST) -> list[SampleRef]:
        path = self.root / name
        if not path.is_file():
            raise MissingFile(f"Manifest not found: {path}")
        refs: list[SampleRef] = []
        for row, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) != 2:
                raise MissingFile(f"{path.name} row {row}: expected image<TAB>label")
            image_path, label_path = (self.root / c.strip() for c in cols)
            for p in (image_path, label_path):
                if not p.is_file():
                    raise MissingFile(f"{path.name} row {row}: file not found {p}")
            refs.append(SampleRef(Path(cols[0]).stem, image_path, label_path, row))
        logger.debug("Loaded %d samples from %s", len(refs), path)
        return refs

    def load_sample(self, ref: SampleRef, taxonomy: Taxonomy) -> Sample:
        image = self.read_image(ref.image_path)
        label = self.read_label(ref.label_path)
        if label.shape != image.shape[:2]:
            raise BadLabelRange(f"Row {ref.row}: label and image sizes differ")
        if label.min() < 0 or label.max() > taxonomy.num_pairs:
            raise BadLabelRange(
                f"Row {ref.row}: label values outside [0, {taxonomy.num_pairs}] in {ref.label_path}"
            )
        obj_lut = np.concatenate([[0], taxonomy.pair_to_object() + 1])
        return Sample(id=ref.id, image=image, label=label, object_label=obj_lut[label])
