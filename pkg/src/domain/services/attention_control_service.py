from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass

import torch
import torch.nn.functional as F

from src.domain.entities.attention import AttentionStack, MaskAttention
from src.domain.entities.taxonomy import Taxonomy
from src.domain.errors import EmptyCategoryList, EmptyMask, ShapeMismatch

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AttentionLosses:
    sep_soft: torch.Tensor
    sep_hard: float
    enh: torch.Tensor
    overlap_fraction: float
    maps: MaskAttention | None


class AttentionControlService:
    """Mask-level attention aggregation, normalization, binarization and the
    separation / enhancement losses. Maps are torch tensors shaped (..., th, tw).
    """

    # Majority vote per token cell; a category whose vote is empty keeps its best-covered cell
    @staticmethod
    def token_masks(label: torch.Tensor, num_pairs: int, factor: int) -> torch.Tensor:
        """(H, W) label grid (0 = background) -> (num_pairs, th, tw) boolean token masks."""
        h, w = label.shape
        if h % factor or w % factor:
            raise ShapeMismatch(f"Label {h}x{w} is not divisible by factor {factor}")
        onehot = F.one_hot(label.long(), num_pairs + 1)[..., 1:].to(torch.float64)
        coverage = onehot.reshape(h // factor, factor, w // factor, factor, num_pairs)
        coverage = coverage.mean(dim=(1, 3)).permute(2, 0, 1)
        masks = coverage > 0.5
        for k in torch.nonzero(~masks.flatten(1).any(dim=1)).flatten().tolist():
            if coverage[k].max() > 0:
                flat = torch.argmax(coverage[k].flatten())
                masks[k].view(-1)[flat] = True
        return masks

    @staticmethod
    def aggregate_mask_attention(
        stack: AttentionStack, mask: torch.Tensor, obj_idx: int, part_idx: int
    ) -> torch.Tensor:
        """Mean over tokens in the mask of A_obj[h, w] + A_part[h, w]; stack is per sample."""
        mask = mask.bool()
        count = int(mask.sum())
        if count == 0:
            raise EmptyMask(f"Empty mask for object {obj_idx}, part {part_idx}")
        rows = stack.obj[obj_idx][mask] + stack.part[part_idx][mask]
        return rows.sum(dim=0) / count

    @staticmethod
    def gaussian_kernel(kernel: int, sigma: float, dtype: torch.dtype = torch.float64):
        radius = kernel // 2
        x = torch.arange(-radius, radius + 1, dtype=dtype)
        g = torch.exp(-(x**2) / (2.0 * sigma**2))
        g = g / g.sum()
        return torch.outer(g, g)

    @staticmethod
    def normalize_and_smooth(raw: torch.Tensor, sigma: float = 1.0, kernel: int = 3):
        """Min-max normalize each map to [0, 1] (constant map -> zeros), then Gaussian blur."""
        *lead, h, w = raw.shape
        flat = raw.reshape(-1, h, w)
        lo = flat.amin(dim=(-2, -1), keepdim=True)
        hi = flat.amax(dim=(-2, -1), keepdim=True)
        span = hi - lo
        safe = torch.where(span > 0, span, torch.ones_like(span))
        norm = torch.where(span > 0, (flat - lo) / safe, torch.zeros_like(flat))
        if kernel > 1:
            pad = kernel // 2
            weight = AttentionControlService.gaussian_kernel(kernel, sigma, dtype=raw.dtype)
            padded = AttentionControlService.symmetric_pad(norm[:, None], pad)
            norm = F.conv2d(padded, weight[None, None].to(raw.device))[:, 0]
        return norm.reshape(*lead, h, w)

    # Half-sample reflection (d c b a | a b c d); edge replication where the grid is too small
    @staticmethod
    def symmetric_pad(x: torch.Tensor, pad: int) -> torch.Tensor:
        h, w = x.shape[-2:]
        if pad > h or pad > w:
            return F.pad(x, (pad, pad, pad, pad), mode="replicate")
        x = torch.cat([x[..., :pad, :].flip(-2), x, x[..., h - pad :, :].flip(-2)], dim=-2)
        return torch.cat([x[..., :pad].flip(-1), x, x[..., w - pad :].flip(-1)], dim=-1)

    # B = 1 exactly where norm >= gamma
    @staticmethod
    def binarize(norm: torch.Tensor, gamma: float) -> torch.Tensor:
        return (norm >= gamma).to(norm.dtype)

    @staticmethod
    def _stack(maps: Sequence[torch.Tensor] | torch.Tensor) -> torch.Tensor:
        if isinstance(maps, torch.Tensor):
            return maps
        if len(maps) == 0:
            raise EmptyCategoryList("No maps given")
        shapes = {tuple(m.shape) for m in maps}
        if len(shapes) != 1:
            raise ShapeMismatch(f"Maps differ in shape: {sorted(shapes)}")
        return torch.stack(list(maps))

    @staticmethod
    def overlap_counts(binaries: Sequence[torch.Tensor] | torch.Tensor) -> tuple[int, int]:
        coverage = AttentionControlService._stack(binaries).sum(dim=0)
        return int((coverage > 1).sum()), int((coverage >= 1).sum())

    @staticmethod
    def separation_loss_hard(
        binaries: Sequence[torch.Tensor] | torch.Tensor, num_categories: int
    ) -> float:
        overlap, union = AttentionControlService.overlap_counts(binaries)
        if union == 0:
            return 0.0
        return overlap / union / num_categories

    @staticmethod
    def separation_loss_soft(
        norms: Sequence[torch.Tensor] | torch.Tensor,
        gamma: float,
        tau: float,
        eps: float = 1e-8,
        num_categories: int | None = None,
    ) -> torch.Tensor:
        """Differentiable surrogate: sigmoid memberships, hinge overlap, product-form union."""
        stacked = AttentionControlService._stack(norms)
        n = num_categories if num_categories is not None else stacked.shape[0]
        b = torch.sigmoid((stacked - gamma) / tau)
        overlap = torch.relu(b.sum(dim=0) - 1.0).sum()
        union = (1.0 - torch.prod(1.0 - b, dim=0)).sum()
        return overlap / (union + eps) / n

    @staticmethod
    def enhancement_loss(maps: Sequence[tuple[torch.Tensor, torch.Tensor]]) -> torch.Tensor:
        """1 - min over categories of the in-mask maximum of each map."""
        if len(maps) == 0:
            raise EmptyCategoryList("Enhancement loss needs at least one category")
        peaks = []
        for i, (value, mask) in enumerate(maps):
            mask = mask.bool()
            if not bool(mask.any()):
                raise EmptyMask(f"Mask {i} is empty")
            peaks.append(value[mask].max())
        return 1.0 - torch.stack(peaks).min()

    @staticmethod
    def mask_attention(
        stack: AttentionStack,
        token_masks: torch.Tensor,
        taxonomy: Taxonomy,
        *,
        gamma: float,
        sigma: float,
        kernel: int,
    ) -> MaskAttention | None:
        """Raw, normalized and binarized maps of the categories present in one sample."""
        present = [k for k in range(taxonomy.num_pairs) if bool(token_masks[k].any())]
        if not present:
            return None
        logger.debug("Skipping %d absent categories", taxonomy.num_pairs - len(present))
        raw = torch.stack(
            [
                AttentionControlService.aggregate_mask_attention(
                    stack, token_masks[k], *taxonomy.pair_index[k]
                )
                for k in present
            ]
        )
        norm = AttentionControlService.normalize_and_smooth(raw, sigma=sigma, kernel=kernel)
        return MaskAttention(
            pairs=tuple(present),
            raw=raw,
            norm=norm,
            binary=AttentionControlService.binarize(norm.detach(), gamma),
            masks=token_masks[present],
        )

    @staticmethod
    def attention_losses(
        stack: AttentionStack,
        token_masks: torch.Tensor,
        taxonomy: Taxonomy,
        *,
        gamma: float,
        sigma: float,
        kernel: int,
        tau: float,
        eps: float,
        enh_source: str = "normalized",
        sep_denominator: str = "taxonomy",
    ) -> AttentionLosses:
        """Separation (soft for the optimizer, hard for reporting) and enhancement of one sample."""
        maps = AttentionControlService.mask_attention(
            stack, token_masks, taxonomy, gamma=gamma, sigma=sigma, kernel=kernel
        )
        if maps is None:
            zero = stack.obj.new_zeros(())
            return AttentionLosses(zero, 0.0, zero, 0.0, None)
        n = taxonomy.num_pairs if sep_denominator == "taxonomy" else len(maps.pairs)
        sep_soft = AttentionControlService.separation_loss_soft(
            maps.norm, gamma, tau, eps, num_categories=n
        )
        sep_hard = AttentionControlService.separation_loss_hard(maps.binary, n)
        source = maps.raw if enh_source == "raw" else maps.norm
        enh = AttentionControlService.enhancement_loss(list(zip(source, maps.masks, strict=True)))
        overlap, union = AttentionControlService.overlap_counts(maps.binary)
        fraction = overlap / union if union else 0.0
        return AttentionLosses(sep_soft, sep_hard, enh, fraction, maps)

    @staticmethod
    def center_weight(kernel: int, sigma: float) -> float:
        """Weight of the kernel center; equals the blurred value of a centered unit impulse."""
        radius = kernel // 2
        total = sum(math.exp(-(x**2) / (2.0 * sigma**2)) for x in range(-radius, radius + 1))
        return (1.0 / total) ** 2
