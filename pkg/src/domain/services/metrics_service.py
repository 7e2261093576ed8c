from __future__ import annotations

import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from src.domain.entities.taxonomy import Taxonomy
from src.domain.errors import InvalidDilation, NoDefinedClasses, ShapeMismatch

logger = logging.getLogger(__name__)

FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


def _check_pair(pred: np.ndarray, gt: np.ndarray) -> None:
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"Prediction {pred.shape} and ground truth {gt.shape} differ")


def _resolve_dilation(d: int | None, shape: tuple[int, ...]) -> int:
    if d is None:
        return MetricsService.default_dilation(*shape)
    if d < 1:
        raise InvalidDilation(f"Boundary dilation must be at least 1, got {d}")
    return d


@dataclass
class ConfusionAccumulator:
    """Streaming (gt, pred) confusion counts over classes 0..num_classes-1.

    Mergeable: ``a.merge(b)`` equals accumulating both streams serially.
    """

    num_classes: int
    matrix: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.matrix is None:
            self.matrix = np.zeros((self.num_classes, self.num_classes), dtype=np.int64)

    def update(self, pred: np.ndarray, gt: np.ndarray) -> ConfusionAccumulator:
        pred = np.asarray(pred, dtype=np.int64)
        gt = np.asarray(gt, dtype=np.int64)
        _check_pair(pred, gt)
        n = self.num_classes
        counts = np.bincount((gt * n + pred).ravel(), minlength=n * n)
        self.matrix += counts.reshape(n, n)
        return self

    def merge(self, other: ConfusionAccumulator) -> ConfusionAccumulator:
        if other.num_classes != self.num_classes:
            raise ShapeMismatch("Cannot merge accumulators over different class counts")
        return ConfusionAccumulator(self.num_classes, self.matrix + other.matrix)

    @property
    def intersection(self) -> np.ndarray:
        return np.diag(self.matrix).copy()

    @property
    def union(self) -> np.ndarray:
        return self.matrix.sum(axis=0) + self.matrix.sum(axis=1) - np.diag(self.matrix)

    @property
    def true_positive(self) -> np.ndarray:
        return self.intersection

    @property
    def false_negative(self) -> np.ndarray:
        return self.matrix.sum(axis=1) - np.diag(self.matrix)

    def per_class_iou(self) -> np.ndarray:
        """IoU per class; NaN where the class is absent in both prediction and ground truth."""
        union = self.union
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(union > 0, self.intersection / union, np.nan)

    def per_class_recall(self) -> np.ndarray:
        support = self.true_positive + self.false_negative
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(support > 0, self.true_positive / support, np.nan)


@dataclass
class BoundaryAccumulator:
    """Per-class intersection and union of boundary bands, summed over images."""

    num_classes: int
    dilation: int | None = None
    intersection: np.ndarray = field(default=None)  # type: ignore[assignment]
    union: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.intersection is None:
            self.intersection = np.zeros(self.num_classes, dtype=np.int64)
        if self.union is None:
            self.union = np.zeros(self.num_classes, dtype=np.int64)
        if self.dilation is not None and self.dilation < 1:
            raise InvalidDilation(f"Boundary dilation must be at least 1, got {self.dilation}")

    def update(self, pred: np.ndarray, gt: np.ndarray) -> BoundaryAccumulator:
        pred = np.asarray(pred)
        gt = np.asarray(gt)
        _check_pair(pred, gt)
        d = _resolve_dilation(self.dilation, gt.shape)
        for k in np.union1d(np.unique(pred), np.unique(gt)):
            band_p = MetricsService.boundary_band(pred == k, d)
            band_g = MetricsService.boundary_band(gt == k, d)
            self.intersection[k] += int(np.logical_and(band_p, band_g).sum())
            self.union[k] += int(np.logical_or(band_p, band_g).sum())
        return self

    def merge(self, other: BoundaryAccumulator) -> BoundaryAccumulator:
        if other.num_classes != self.num_classes:
            raise ShapeMismatch("Cannot merge accumulators over different class counts")
        return BoundaryAccumulator(
            self.num_classes,
            self.dilation,
            self.intersection + other.intersection,
            self.union + other.union,
        )

    def per_class_iou(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.union > 0, self.intersection / self.union, np.nan)


class MetricsService:
    """mIoU, recall, Boundary IoU, harmonic mean and attention overlap."""

    @staticmethod
    def _mean_over(values: np.ndarray, class_subset: Iterable[int]) -> float:
        subset = sorted(set(class_subset))
        picked = values[subset] if subset else np.array([])
        defined = picked[~np.isnan(picked)]
        if defined.size == 0:
            raise NoDefinedClasses("No class in the subset is defined")
        undefined = len(subset) - defined.size
        if undefined:
            logger.debug("Excluding %d undefined classes from the mean", undefined)
        return float(defined.mean())

    @staticmethod
    def miou(acc: ConfusionAccumulator, class_subset: Iterable[int]) -> float:
        return MetricsService._mean_over(acc.per_class_iou(), class_subset)

    @staticmethod
    def recall(acc: ConfusionAccumulator, class_subset: Iterable[int]) -> float:
        return MetricsService._mean_over(acc.per_class_recall(), class_subset)

    @staticmethod
    def boundary_miou(acc: BoundaryAccumulator, class_subset: Iterable[int]) -> float:
        return MetricsService._mean_over(acc.per_class_iou(), class_subset)

    @staticmethod
    def harmonic(seen: float, unseen: float) -> float:
        if seen + unseen == 0:
            return 0.0
        return 2.0 * seen * unseen / (seen + unseen)

    @staticmethod
    def default_dilation(height: int, width: int) -> int:
        return max(1, round(0.02 * math.sqrt(height**2 + width**2)))

    # Mask minus its erosion by d steps of the 4-connected cross; outside the image counts as empty
    @staticmethod
    def boundary_band(mask: np.ndarray, d: int) -> np.ndarray:
        mask = np.asarray(mask, dtype=bool)
        if not mask.any():
            return mask
        eroded = ndimage.binary_erosion(
            mask, structure=FOUR_CONNECTED, iterations=d, border_value=0
        )
        return mask & ~eroded

    @staticmethod
    def boundary_iou(pred: np.ndarray, gt: np.ndarray, k: int, d: int | None = None):
        """Band IoU of class ``k``; ``None`` when the class is absent from both grids."""
        pred = np.asarray(pred)
        gt = np.asarray(gt)
        _check_pair(pred, gt)
        d = _resolve_dilation(d, gt.shape)
        band_p = MetricsService.boundary_band(pred == k, d)
        band_g = MetricsService.boundary_band(gt == k, d)
        union = int(np.logical_or(band_p, band_g).sum())
        if union == 0:
            return None
        return int(np.logical_and(band_p, band_g).sum()) / union

    @staticmethod
    def overlap_fraction(binaries: Sequence[np.ndarray] | np.ndarray) -> float:
        stacked = np.asarray(binaries)
        if stacked.ndim < 3 or stacked.shape[0] == 0:
            return 0.0
        coverage = (stacked > 0).sum(axis=0)
        union = int((coverage >= 1).sum())
        if union == 0:
            return 0.0
        return int((coverage > 1).sum()) / union

    @staticmethod
    def class_subsets(
        taxonomy: Taxonomy, include_background: bool = False
    ) -> tuple[list[int], list[int]]:
        """Label-value subsets (pair index + 1) for the seen and unseen means."""
        seen = [k + 1 for k in range(taxonomy.num_pairs) if not taxonomy.is_unseen_pair(k)]
        unseen = [k + 1 for k in range(taxonomy.num_pairs) if taxonomy.is_unseen_pair(k)]
        if include_background:
            seen, unseen = [0, *seen], [0, *unseen]
        return seen, unseen

    @staticmethod
    def part_iou(per_class_iou: np.ndarray, taxonomy: Taxonomy) -> dict[str, float | None]:
        """Mean IoU per generalized part name over the object-specific categories having it."""
        out: dict[str, float | None] = {}
        for p, name in enumerate(taxonomy.parts):
            values = [
                per_class_iou[k + 1]
                for k, (_, part) in enumerate(taxonomy.pair_index)
                if part == p and not np.isnan(per_class_iou[k + 1])
            ]
            out[name] = float(np.mean(values)) if values else None
        return out

    @staticmethod
    def safe_mean(values: np.ndarray, class_subset: Iterable[int]) -> float | None:
        try:
            return MetricsService._mean_over(values, class_subset)
        except NoDefinedClasses:
            return None
