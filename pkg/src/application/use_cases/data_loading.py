from __future__ import annotations

import logging
from collections.abc import Iterator
from dataclasses import dataclass

import numpy as np

from src.domain.entities.taxonomy import Taxonomy
from src.domain.errors import EmptySplit
from src.infrastructure.storage.dataset_storage import DatasetStorage

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SplitArrays:
    """A whole split held in memory; labels follow the taxonomy it was loaded with."""

    ids: tuple[str, ...]
    images: np.ndarray  # (N, H, W, 3) float32
    labels: np.ndarray  # (N, H, W) int64
    object_labels: np.ndarray  # (N, H, W) int64

    def __len__(self) -> int:
        return len(self.ids)

    def take(self, index: np.ndarray) -> SplitArrays:
        return SplitArrays(
            ids=tuple(self.ids[i] for i in index),
            images=self.images[index],
            labels=self.labels[index],
            object_labels=self.object_labels[index],
        )


def load_split(
    storage: DatasetStorage, taxonomy: Taxonomy, lut: np.ndarray | None = None
) -> SplitArrays:
    """Load every manifest row; ``lut`` remaps labels onto a restricted taxonomy."""
    refs = storage.load_manifest()
    if not refs:
        raise EmptySplit(f"No samples in {storage.root}")
    full = storage.load_taxonomy()
    samples = [storage.load_sample(ref, full) for ref in refs]
    labels = np.stack([s.label for s in samples])
    if lut is not None:
        labels = lut[labels]
    obj_lut = np.concatenate([[0], taxonomy.pair_to_object() + 1])
    logger.info("Loaded %d samples from %s", len(samples), storage.root)
    return SplitArrays(
        ids=tuple(s.id for s in samples),
        images=np.stack([s.image for s in samples]),
        labels=labels,
        object_labels=obj_lut[labels],
    )


def iterate_batches(size: int, batch_size: int, seed: int) -> Iterator[np.ndarray]:
    """Endless epochs of a seeded permutation; every batch is full."""
    rng = np.random.default_rng(seed)
    order = np.empty(0, dtype=np.int64)
    while True:
        while len(order) < batch_size:
            order = np.concatenate([order, rng.permutation(size)])
        batch, order = order[:batch_size], order[batch_size:]
        yield batch


def iterate_in_order(size: int, batch_size: int) -> Iterator[np.ndarray]:
    for start in range(0, size, batch_size):
        yield np.arange(start, min(start + batch_size, size))
