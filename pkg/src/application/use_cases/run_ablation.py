from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from src.application.dtos.config_dto import RunConfig
from src.application.dtos.report_dto import AblationRow, AblationTable, MetricReport
from src.application.model_factory import build_model, recorded_model_config
from src.application.use_cases.data_loading import SplitArrays
from src.application.use_cases.evaluate_model import EvaluateModelUseCase
from src.application.use_cases.train_model import TrainModelUseCase
from src.domain.entities.taxonomy import Taxonomy
from src.infrastructure.config.run_config import (
    build_config,
    config_document,
    config_hash,
    flatten,
)
from src.infrastructure.storage.checkpoint_storage import CheckpointStorage
from src.infrastructure.storage.run_storage import RunStorage

logger = logging.getLogger(__name__)

DEFAULT_GAMMAS = (0.1, 0.2, 0.3, 0.4, 0.5)

# (label, lambda_obj, lambda_part, attention losses on)
GUIDANCE_GRID = (
    ("obj 0 / part 0", 0.0, 0.0, True),
    ("obj 1 / part 0", 1.0, 0.0, True),
    ("obj 0 / part 1", 0.0, 1.0, True),
    ("w/o sep + enh", 1.0, 1.0, False),
    ("obj 1 / part 1", 1.0, 1.0, True),
)
# (label, sep on, enh on)
ATTENTION_GRID = (
    ("w/o sep + enh", False, False),
    ("sep only", True, False),
    ("sep + enh", True, True),
)


@dataclass(frozen=True)
class AblationData:
    train: SplitArrays
    train_taxonomy: Taxonomy
    val: SplitArrays
    val_taxonomy: Taxonomy
    small_part: str | None = None


def dedupe_gammas(gammas: Sequence[float]) -> list[float]:
    unique: list[float] = []
    for g in gammas:
        if g in unique:
            logger.warning("Duplicate gamma %s ignored", g)
            continue
        unique.append(g)
    return unique


def with_overrides(config: RunConfig, overrides: dict[str, Any]) -> RunConfig:
    flat = flatten(config_document(config))
    flat.update(overrides)
    return build_config(flat)


@dataclass
class RunAblationUseCase:
    runs: RunStorage
    checkpoints: CheckpointStorage
    show_progress: bool = False

    def gamma(
        self,
        base: RunConfig,
        data: AblationData,
        gammas: Sequence[float] = DEFAULT_GAMMAS,
        seeds: Sequence[int] = (0,),
        checkpoint: Path | None = None,
    ) -> AblationTable:
        """One row per threshold; fixed weights from ``checkpoint`` skip the retraining."""
        settings = [(f"{g:g}", {"train.attn.gamma": g}) for g in dedupe_gammas(gammas)]
        return self._table("Binarization threshold", base, data, settings, seeds, checkpoint)

    def lambdas(
        self,
        base: RunConfig,
        data: AblationData,
        grid: str = "guidance",
        seeds: Sequence[int] = (0,),
    ) -> AblationTable:
        w = base.train.loss
        if grid == "attention":
            settings = [
                (
                    label,
                    {
                        "train.loss.lambda_sep": w.lambda_sep if sep else 0.0,
                        "train.loss.lambda_enh": w.lambda_enh if enh else 0.0,
                    },
                )
                for label, sep, enh in ATTENTION_GRID
            ]
            title = "Attention-control losses"
        else:
            settings = [
                (
                    label,
                    {
                        "train.loss.lambda_obj": obj,
                        "train.loss.lambda_part": part,
                        "train.loss.lambda_sep": w.lambda_sep if attn else 0.0,
                        "train.loss.lambda_enh": w.lambda_enh if attn else 0.0,
                    },
                )
                for label, obj, part, attn in GUIDANCE_GRID
            ]
            title = "Object and part guidance"
        return self._table(title, base, data, settings, seeds, None)

    def _table(
        self,
        title: str,
        base: RunConfig,
        data: AblationData,
        settings: Sequence[tuple[str, dict[str, Any]]],
        seeds: Sequence[int],
        checkpoint: Path | None,
    ) -> AblationTable:
        rows = []
        for label, overrides in settings:
            reports = [
                self._run_one(base, data, label, overrides, seed, checkpoint) for seed in seeds
            ]
            rows.append(self._row(label, overrides, reports, data.small_part))
        return AblationTable(title=title, rows=rows)

    def _run_one(
        self,
        base: RunConfig,
        data: AblationData,
        label: str,
        overrides: dict[str, Any],
        seed: int,
        checkpoint: Path | None,
    ) -> MetricReport:
        seeded = {"train.seed": seed} if checkpoint else {"train.seed": seed, "model.seed": seed}
        config = with_overrides(base, {**overrides, **seeded})
        if checkpoint is not None:
            # text embeddings depend on model.seed, so the archive's model section wins
            info = self.checkpoints.inspect(checkpoint)
            model_cfg = recorded_model_config(info.extra, config.model)
            config = config.model_copy(update={"model": model_cfg})
        digest = config_hash(config)
        slug = "".join(c if c.isalnum() else "_" for c in label).strip("_")
        runs = RunStorage(self.runs.path(f"{slug}_seed{seed}"))
        runs.write_config(config_document(config), digest)
        if checkpoint is not None:
            model = build_model(config.model)
            self.checkpoints.load(model, checkpoint)
        else:
            trainer = TrainModelUseCase(runs, self.checkpoints, self.show_progress)
            result = trainer.execute(config, digest, data.train, data.train_taxonomy)
            model = build_model(config.model)
            self.checkpoints.load(model, result.last_checkpoint)
        evaluator = EvaluateModelUseCase(config.eval, config.train.attn)
        report = evaluator.execute(model, data.val, data.val_taxonomy, "oracle_obj", digest)
        runs.write_report(report, "eval_oracle_obj")
        return report

    @staticmethod
    def _row(
        label: str,
        overrides: dict[str, Any],
        reports: Sequence[MetricReport],
        small_part: str | None,
    ) -> AblationRow:
        def mean(values: list[float | None]) -> float | None:
            kept = [v for v in values if v is not None]
            return float(np.mean(kept)) if kept else None

        return AblationRow(
            label=label,
            settings=overrides,
            seen=mean([r.seen_miou for r in reports]),
            unseen=mean([r.unseen_miou for r in reports]),
            harmonic=mean([r.harmonic_miou for r in reports]),
            dot_iou=mean([r.part_iou.get(small_part) for r in reports]) if small_part else None,
            overlap_fraction=mean([r.overlap_fraction for r in reports]),
        )
