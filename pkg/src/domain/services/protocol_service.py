from __future__ import annotations

import numpy as np

from src.domain.entities.taxonomy import Taxonomy
from src.domain.errors import EmptyMask, ShapeMismatch, UnknownObject


def _as_numpy(logits) -> np.ndarray:
    if hasattr(logits, "detach"):
        logits = logits.detach().cpu().numpy()
    return np.asarray(logits)


class ProtocolService:
    """Decoding of mask logits into label grids under the Pred-All and Oracle-Obj protocols.

    Logits are (C, H, W) in the ``Taxonomy`` channel layout. Argmax ties go to the
    lowest channel index.
    """

    @staticmethod
    def pred_all_decode(logits, taxonomy: Taxonomy) -> np.ndarray:
        """Argmax over every pair channel and the pair uncategory channel; uncategory -> 0."""
        z = _as_numpy(logits)[: taxonomy.num_pairs + 1]
        winner = np.argmax(z, axis=0)
        return np.where(winner == taxonomy.pair_bg_channel, 0, winner + 1).astype(np.int64)

    @staticmethod
    def oracle_obj_restrict(
        logits, gt_object_mask: np.ndarray, gt_object: int, taxonomy: Taxonomy
    ) -> np.ndarray:
        """Inside the object mask, argmax over that object's pairs only; background elsewhere."""
        if not 0 <= gt_object < taxonomy.num_objects:
            raise UnknownObject(f"Object index {gt_object} is not in the taxonomy")
        z = _as_numpy(logits)
        mask = np.asarray(gt_object_mask, dtype=bool)
        if mask.shape != z.shape[-2:]:
            raise ShapeMismatch(f"Mask {mask.shape} does not match logits {z.shape[-2:]}")
        if not mask.any():
            raise EmptyMask(f"Object mask of {taxonomy.objects[gt_object]!r} is empty")
        channels = np.array(sorted(taxonomy.parts_of_object[gt_object]), dtype=np.int64)
        winner = channels[np.argmax(z[channels], axis=0)]
        return np.where(mask, winner + 1, 0).astype(np.int64)

    @staticmethod
    def oracle_obj_decode(logits, object_label: np.ndarray, taxonomy: Taxonomy) -> np.ndarray:
        """Oracle-Obj over every ground-truth object in the image (object index + 1, 0 = none)."""
        object_label = np.asarray(object_label)
        out = np.zeros(object_label.shape, dtype=np.int64)
        z = _as_numpy(logits)
        for value in np.unique(object_label):
            if value == 0:
                continue
            mask = object_label == value
            restricted = ProtocolService.oracle_obj_restrict(z, mask, int(value) - 1, taxonomy)
            out[mask] = restricted[mask]
        return out

    @staticmethod
    def decode(logits, protocol: str, taxonomy: Taxonomy, object_label=None) -> np.ndarray:
        if protocol == "oracle_obj":
            if object_label is None:
                raise UnknownObject("Oracle-Obj decoding needs the ground-truth object label")
            return ProtocolService.oracle_obj_decode(logits, object_label, taxonomy)
        return ProtocolService.pred_all_decode(logits, taxonomy)
