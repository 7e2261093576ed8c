from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F

from src.domain.entities.sample import SupervisionTargets
from src.domain.entities.taxonomy import Taxonomy
from src.domain.errors import ChannelMismatch, LabelOutOfRange


class LossService:
    """Composite mask supervision and the total training objective."""

    @staticmethod
    def derive_targets(label: np.ndarray, taxonomy: Taxonomy) -> SupervisionTargets:
        """Object and generalized-part targets are unions of the object-specific ones.

        Accepts (H, W) or (B, H, W) label grids with 0 = background.
        """
        label = np.asarray(label)
        if label.size and (label.min() < 0 or label.max() > taxonomy.num_pairs):
            raise LabelOutOfRange(
                f"Label values must lie in [0, {taxonomy.num_pairs}], "
                f"got [{label.min()}, {label.max()}]"
            )
        background = label == 0
        obj_lut = np.concatenate([[-1], taxonomy.pair_to_object()])
        part_lut = np.concatenate([[-1], taxonomy.pair_to_part()])
        obj_label = obj_lut[label]
        part_label = part_lut[label]

        pair_axis = np.arange(1, taxonomy.num_pairs + 1).reshape(-1, 1, 1)
        obj_axis = np.arange(taxonomy.num_objects).reshape(-1, 1, 1)
        part_axis = np.arange(taxonomy.num_parts).reshape(-1, 1, 1)

        # channel axis sits at -3 with or without a batch axis
        objpart = label[..., None, :, :] == pair_axis
        obj = obj_label[..., None, :, :] == obj_axis
        part = part_label[..., None, :, :] == part_axis
        objpart = np.concatenate([objpart, background[..., None, :, :]], axis=-3)
        obj = np.concatenate([obj, background[..., None, :, :]], axis=-3)
        return SupervisionTargets(objpart=objpart, obj=obj, part=part)

    @staticmethod
    def targets_to_tensors(
        targets: SupervisionTargets, dtype: torch.dtype = torch.float32, device=None
    ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        return tuple(
            torch.as_tensor(np.ascontiguousarray(t), device=device).to(dtype)
            for t in (targets.objpart, targets.obj, targets.part)
        )

    @staticmethod
    def bce_masked(logits: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
        return F.binary_cross_entropy_with_logits(logits, target.to(logits.dtype))

    @staticmethod
    def _group_loss(logits: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
        per_pixel = F.binary_cross_entropy_with_logits(
            logits, target.to(logits.dtype), reduction="none"
        )
        reduce_dims = [d for d in range(per_pixel.ndim) if d != per_pixel.ndim - 3]
        return per_pixel.mean(dim=reduce_dims).sum()

    @staticmethod
    def mask_loss(
        logits: torch.Tensor,
        targets: SupervisionTargets | tuple[torch.Tensor, torch.Tensor, torch.Tensor],
        lambda_obj: float = 1.0,
        lambda_part: float = 1.0,
    ) -> torch.Tensor:
        """Sum of per-channel BCE over pairs (+ uncategory), objects (+ uncategory) and parts.

        ``logits`` is (B, C, H, W) or (C, H, W) in the ``Taxonomy`` channel layout.
        """
        if isinstance(targets, SupervisionTargets):
            targets = LossService.targets_to_tensors(
                targets, dtype=logits.dtype, device=logits.device
            )
        objpart, obj, part = targets
        sizes = [objpart.shape[-3], obj.shape[-3], part.shape[-3]]
        if logits.shape[-3] != sum(sizes):
            raise ChannelMismatch(
                f"Logits have {logits.shape[-3]} channels, targets need {sum(sizes)}"
            )
        z_objpart, z_obj, z_part = torch.split(logits, sizes, dim=-3)
        loss = LossService._group_loss(z_objpart, objpart)
        if lambda_obj:
            loss = loss + lambda_obj * LossService._group_loss(z_obj, obj)
        if lambda_part:
            loss = loss + lambda_part * LossService._group_loss(z_part, part)
        return loss

    @staticmethod
    def total_loss(
        mask: torch.Tensor | float,
        sep: torch.Tensor | float,
        enh: torch.Tensor | float,
        lambda_sep: float = 0.1,
        lambda_enh: float = 0.1,
    ):
        return mask + lambda_sep * sep + lambda_enh * enh
