from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch.nn.utils import clip_grad_norm_
from torch.optim import AdamW
from torch.optim.lr_scheduler import LambdaLR
from tqdm import tqdm

from src.application.dtos.config_dto import RunConfig, TrainConfig
from src.application.dtos.report_dto import MetricReport, StepReport
from src.application.model_factory import build_model
from src.application.use_cases.data_loading import SplitArrays, iterate_batches
from src.application.use_cases.evaluate_model import EvaluateModelUseCase
from src.domain.entities.taxonomy import Taxonomy
from src.domain.errors import NonFiniteLoss
from src.domain.model.partseg_model import PartSegModel
from src.domain.services.attention_control_service import AttentionControlService
from src.domain.services.loss_service import LossService
from src.domain.services.schedule_service import ScheduleService
from src.infrastructure.storage.checkpoint_storage import CheckpointStorage
from src.infrastructure.storage.run_storage import RunStorage

logger = logging.getLogger(__name__)

TRAIN_LOG = "train_log.jsonl"


def global_grad_norm(params) -> float:
    grads = [p.grad.detach().flatten() for p in params if p.grad is not None]
    if not grads:
        return 0.0
    return float(torch.cat(grads).norm())


def parameter_checksum(params) -> str:
    digest = hashlib.sha256()
    for p in params:
        digest.update(p.detach().cpu().numpy().tobytes())
    return digest.hexdigest()


def train_step(
    model: PartSegModel,
    images: np.ndarray,
    labels: np.ndarray,
    taxonomy: Taxonomy,
    cfg: TrainConfig,
    optimizer: torch.optim.Optimizer,
    step: int,
) -> StepReport:
    """One optimizer step on the full objective; returns the logged scalars."""
    model.train()
    out = model(torch.from_numpy(images), taxonomy)
    w, attn = cfg.loss, cfg.attn
    targets = LossService.derive_targets(labels, taxonomy)
    l_mask = LossService.mask_loss(out.mask_logits, targets, w.lambda_obj, w.lambda_part)

    seps, enhs = [], []
    for b in range(labels.shape[0]):
        masks = AttentionControlService.token_masks(
            torch.from_numpy(labels[b]), taxonomy.num_pairs, model.spec.factor
        )
        losses = AttentionControlService.attention_losses(
            out.attention.for_sample(b),
            masks,
            taxonomy,
            gamma=attn.gamma,
            sigma=attn.gaussian_sigma,
            kernel=attn.gaussian_kernel,
            tau=attn.tau,
            eps=attn.eps,
            enh_source=attn.enh_source,
            sep_denominator=attn.sep_denominator,
        )
        seps.append(losses.sep_soft)
        enhs.append(losses.enh)
    l_sep = torch.stack(seps).mean()
    l_enh = torch.stack(enhs).mean()
    l_all = LossService.total_loss(l_mask, l_sep, l_enh, w.lambda_sep, w.lambda_enh)

    components = {
        "L_mask": float(l_mask),
        "L_sep": float(l_sep),
        "L_enh": float(l_enh),
        "L_all": float(l_all),
    }
    if not all(math.isfinite(v) for v in components.values()):
        raise NonFiniteLoss(step, components)

    params = [p for g in optimizer.param_groups for p in g["params"]]
    optimizer.zero_grad(set_to_none=True)
    l_all.backward()
    raw_norm = float(clip_grad_norm_(params, cfg.grad_clip_norm))
    clipped_norm = global_grad_norm(params)
    lr = optimizer.param_groups[0]["lr"]
    optimizer.step()
    return StepReport(
        step=step,
        lr=lr,
        grad_norm=clipped_norm,
        grad_norm_raw=raw_norm,
        **components,
    )


@dataclass
class TrainResult:
    steps: int
    last_checkpoint: Path
    best_checkpoint: Path | None
    best_report: MetricReport | None
    frozen_checksum_before: str
    frozen_checksum_after: str
    reports: list[StepReport] = field(default_factory=list)


@dataclass
class TrainModelUseCase:
    runs: RunStorage
    checkpoints: CheckpointStorage
    show_progress: bool = True

    def execute(
        self,
        config: RunConfig,
        config_hash: str,
        train: SplitArrays,
        taxonomy: Taxonomy,
        val: SplitArrays | None = None,
        val_taxonomy: Taxonomy | None = None,
        resume: Path | None = None,
        allow_config_mismatch: bool = False,
    ) -> TrainResult:
        """Train on the (seen-only) ``taxonomy``; optionally track the best val checkpoint."""
        tc = config.train
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(tc.seed)
            model = build_model(config.model)
            start = 0
            if resume is not None:
                info = self.checkpoints.load(
                    model, resume, expected_hash=config_hash, allow_mismatch=allow_config_mismatch
                )
                start = info.step
                logger.info("Resuming from %s at step %d", resume, start)
            return self._run(model, config, config_hash, train, taxonomy, val, val_taxonomy, start)

    def _run(
        self,
        model: PartSegModel,
        config: RunConfig,
        config_hash: str,
        train: SplitArrays,
        taxonomy: Taxonomy,
        val: SplitArrays | None,
        val_taxonomy: Taxonomy | None,
        start: int,
    ) -> TrainResult:
        tc = config.train
        params = model.trainable_parameters()
        frozen_before = parameter_checksum(model.frozen_parameters())
        optimizer = AdamW(
            params, lr=tc.base_lr, betas=(tc.beta1, tc.beta2), weight_decay=tc.weight_decay
        )
        # after i scheduler steps the optimizer is about to run 1-based step start + i + 1
        scheduler = LambdaLR(
            optimizer,
            lambda i: ScheduleService.lr_factor(
                start + i + 1, tc.total_iters, tc.warmup_iters, tc.poly_power
            ),
        )
        batches = iterate_batches(len(train), tc.batch_size, tc.seed)
        for _ in range(start):
            next(batches)
        if start == 0:
            self.runs.reset_jsonl(TRAIN_LOG)
        evaluator = EvaluateModelUseCase(config.eval, tc.attn)
        ckpt_dir = self.runs.path("checkpoints")
        extra = {"model": config.model.model_dump(mode="json")}
        best_score, best_path, best_report = -1.0, None, None
        reports: list[StepReport] = []

        progress = tqdm(
            range(start + 1, tc.total_iters + 1),
            desc="train",
            disable=not self.show_progress,
            leave=False,
        )
        for step in progress:
            index = next(batches)
            report = train_step(
                model, train.images[index], train.labels[index], taxonomy, tc, optimizer, step
            )
            scheduler.step()
            reports.append(report)
            self.runs.append_jsonl(TRAIN_LOG, report.model_dump(by_alias=True))
            progress.set_postfix(loss=f"{report.l_all:.4f}")

            if step % tc.checkpoint_every == 0:
                self.checkpoints.save(
                    model, ckpt_dir / f"step_{step:06d}.ckpt", step, config_hash, extra
                )
            if tc.eval_every and val is not None and step % tc.eval_every == 0:
                metrics = evaluator.execute(
                    model, val, val_taxonomy or taxonomy, "oracle_obj", config_hash
                )
                score = metrics.harmonic_miou
                if score is None:
                    score = metrics.seen_miou or 0.0
                if score > best_score:
                    best_score, best_report = score, metrics
                    best_path = self.checkpoints.save(
                        model, ckpt_dir / "best.ckpt", step, config_hash, {**extra, "score": score}
                    )
                    logger.info("New best checkpoint at step %d (%.4f)", step, score)

        last = self.checkpoints.save(
            model, ckpt_dir / "last.ckpt", tc.total_iters, config_hash, extra
        )
        frozen_after = parameter_checksum(model.frozen_parameters())
        if frozen_after != frozen_before:
            logger.error("Frozen encoder parameters changed during training")
        return TrainResult(
            steps=len(reports),
            last_checkpoint=last,
            best_checkpoint=best_path,
            best_report=best_report,
            frozen_checksum_before=frozen_before,
            frozen_checksum_after=frozen_after,
            reports=reports,
        )
