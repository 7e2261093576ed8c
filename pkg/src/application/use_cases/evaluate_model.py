from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import torch

from src.application.dtos.config_dto import AttnControlConfig, EvalConfig
from src.application.dtos.report_dto import MetricReport
from src.application.use_cases.data_loading import SplitArrays, iterate_in_order
from src.domain.entities.taxonomy import Taxonomy
from src.domain.errors import EmptySplit
from src.domain.model.partseg_model import PartSegModel
from src.domain.services.attention_control_service import AttentionControlService
from src.domain.services.metrics_service import (
    BoundaryAccumulator,
    ConfusionAccumulator,
    MetricsService,
)
from src.domain.services.protocol_service import ProtocolService

logger = logging.getLogger(__name__)

PROTOCOLS = ("pred_all", "oracle_obj")


def _maybe(value: float) -> float | None:
    return None if np.isnan(value) else float(value)


def _harmonic(seen: float | None, unseen: float | None) -> float | None:
    if seen is None or unseen is None:
        return None
    return MetricsService.harmonic(seen, unseen)


@dataclass
class EvaluateModelUseCase:
    eval_cfg: EvalConfig
    attn_cfg: AttnControlConfig

    def execute(
        self,
        model: PartSegModel,
        split: SplitArrays,
        taxonomy: Taxonomy,
        protocol: str,
        config_hash: str | None = None,
    ) -> MetricReport:
        """Decode every image under ``protocol`` and score it against the ground truth."""
        if len(split) == 0:
            raise EmptySplit("Cannot evaluate an empty split")
        if protocol not in PROTOCOLS:
            raise ValueError(f"Unknown protocol {protocol!r}")
        model.eval()
        preds: list[np.ndarray] = []
        overlaps: list[float] = []
        with torch.no_grad():
            for index in iterate_in_order(len(split), self.eval_cfg.batch_size):
                out = model(torch.from_numpy(split.images[index]), taxonomy)
                for j, i in enumerate(index):
                    preds.append(
                        ProtocolService.decode(
                            out.mask_logits[j], protocol, taxonomy, split.object_labels[i]
                        )
                    )
                    if self.eval_cfg.attention_diagnostics:
                        stack = out.attention.for_sample(j)
                        fraction = self._overlap(model, stack, split.labels[i], taxonomy)
                        if fraction is not None:
                            overlaps.append(fraction)
        report = self.score(preds, list(split.labels), taxonomy, protocol, config_hash)
        if overlaps:
            report = report.model_copy(update={"overlap_fraction": float(np.mean(overlaps))})
        logger.info(
            "%s: seen %.4f unseen %s harmonic %s",
            protocol,
            report.seen_miou or 0.0,
            report.unseen_miou,
            report.harmonic_miou,
        )
        return report

    def _overlap(self, model, stack, label: np.ndarray, taxonomy: Taxonomy) -> float | None:
        masks = AttentionControlService.token_masks(
            torch.from_numpy(label), taxonomy.num_pairs, model.spec.factor
        )
        maps = AttentionControlService.mask_attention(
            stack,
            masks,
            taxonomy,
            gamma=self.attn_cfg.gamma,
            sigma=self.attn_cfg.gaussian_sigma,
            kernel=self.attn_cfg.gaussian_kernel,
        )
        if maps is None:
            return None
        return MetricsService.overlap_fraction(maps.binary.cpu().numpy())

    def score(
        self,
        preds: Sequence[np.ndarray],
        gts: Sequence[np.ndarray],
        taxonomy: Taxonomy,
        protocol: str,
        config_hash: str | None = None,
    ) -> MetricReport:
        """MetricReport of already-decoded label grids."""
        if len(gts) == 0:
            raise EmptySplit("Cannot score an empty split")
        n = taxonomy.num_pairs + 1
        conf = ConfusionAccumulator(n)
        boundary = BoundaryAccumulator(n, self.eval_cfg.boundary_dilation)
        for pred, gt in zip(preds, gts, strict=True):
            conf.update(pred, gt)
            boundary.update(pred, gt)

        seen, unseen = MetricsService.class_subsets(taxonomy, self.eval_cfg.include_background)
        iou = conf.per_class_iou()
        biou = boundary.per_class_iou()
        rec = conf.per_class_recall()
        names = ["background", *taxonomy.obj_part_names]
        keep = range(n) if self.eval_cfg.include_background else range(1, n)

        def per_class(values: np.ndarray) -> dict[str, float | None]:
            return {names[k]: _maybe(values[k]) for k in keep}

        def split_means(values: np.ndarray) -> tuple[float | None, float | None, float | None]:
            s = MetricsService.safe_mean(values, seen)
            u = MetricsService.safe_mean(values, unseen)
            return s, u, _harmonic(s, u)

        s_iou, u_iou, h_iou = split_means(iou)
        s_b, u_b, h_b = split_means(biou)
        s_r, u_r, h_r = split_means(rec)
        return MetricReport(
            protocol=protocol,
            num_samples=len(gts),
            per_class_iou=per_class(iou),
            seen_miou=s_iou,
            unseen_miou=u_iou,
            harmonic_miou=h_iou,
            per_class_boundary_iou=per_class(biou),
            boundary_seen_miou=s_b,
            boundary_unseen_miou=u_b,
            boundary_harmonic_miou=h_b,
            per_class_recall=per_class(rec),
            seen_recall=s_r,
            unseen_recall=u_r,
            harmonic_recall=h_r,
            part_iou=MetricsService.part_iou(iou, taxonomy),
            config_hash=config_hash,
        )
