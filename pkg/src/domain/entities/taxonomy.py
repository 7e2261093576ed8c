from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Taxonomy:
    """Category universe: object-specific parts, objects, generalized parts and the split.

    Indices are 0-based everywhere inside the package; label grids shift
    object-specific parts by one so that 0 stays background.
    """

    obj_part_names: tuple[str, ...]
    objects: tuple[str, ...]
    parts: tuple[str, ...]
    pair_index: tuple[tuple[int, int], ...]  # obj-part index -> (object index, part index)
    parts_of_object: dict[int, tuple[int, ...]] = field(hash=False)
    unseen_objects: frozenset[str] = frozenset()

    @property
    def num_pairs(self) -> int:
        return len(self.obj_part_names)

    @property
    def num_objects(self) -> int:
        return len(self.objects)

    @property
    def num_parts(self) -> int:
        return len(self.parts)

    # Channel layout of the decoder: pairs, pair uncategory, objects, object uncategory, parts
    @property
    def num_channels(self) -> int:
        return self.num_pairs + 1 + self.num_objects + 1 + self.num_parts

    @property
    def pair_bg_channel(self) -> int:
        return self.num_pairs

    @property
    def object_channel_offset(self) -> int:
        return self.num_pairs + 1

    @property
    def object_bg_channel(self) -> int:
        return self.num_pairs + 1 + self.num_objects

    @property
    def part_channel_offset(self) -> int:
        return self.num_pairs + 1 + self.num_objects + 1

    def pair_to_object(self) -> np.ndarray:
        return np.array([o for o, _ in self.pair_index], dtype=np.int64)

    def pair_to_part(self) -> np.ndarray:
        return np.array([p for _, p in self.pair_index], dtype=np.int64)

    def object_index(self, name: str) -> int:
        return self.objects.index(name)

    def is_unseen_pair(self, pair: int) -> bool:
        obj, _ = self.pair_index[pair]
        return self.objects[obj] in self.unseen_objects
