from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import torch
from PIL import Image

from src.application.dtos.config_dto import AttnControlConfig
from src.domain.entities.taxonomy import Taxonomy
from src.domain.model.partseg_model import PartSegModel
from src.domain.services.attention_control_service import AttentionControlService
from src.domain.services.protocol_service import ProtocolService
from src.infrastructure.storage.dataset_storage import DatasetStorage
from src.infrastructure.storage.run_storage import RunStorage

logger = logging.getLogger(__name__)


@dataclass
class InferImageUseCase:
    runs: RunStorage
    attn_cfg: AttnControlConfig

    def execute(
        self,
        model: PartSegModel,
        image_path: Path,
        taxonomy: Taxonomy,
        category: str | None = None,
    ) -> dict[str, Any]:
        """Pred-All label PNG plus a figure with the attention map of one predicted category."""
        spec = model.spec
        with Image.open(image_path) as img:
            rgb = img.convert("RGB")
            if rgb.size != (spec.width, spec.height):
                rgb = rgb.resize((spec.width, spec.height), Image.Resampling.BILINEAR)
            image = np.asarray(rgb).astype(np.float32) / 255.0

        model.eval()
        with torch.no_grad():
            out = model(torch.from_numpy(image[None]), taxonomy)
        pred = ProtocolService.pred_all_decode(out.mask_logits[0], taxonomy)
        stem = Path(image_path).stem
        label_path = self.runs.path(f"{stem}_pred.png")
        DatasetStorage.encode_label(pred).save(label_path, format="PNG")

        present = [int(v) - 1 for v in np.unique(pred) if v > 0]
        if category is not None:
            target = taxonomy.obj_part_names.index(category)
        else:
            target = present[0] if present else None
        attention = None
        title = ""
        if target is not None and target in present:
            masks = AttentionControlService.token_masks(
                torch.from_numpy(pred), taxonomy.num_pairs, spec.factor
            )
            maps = AttentionControlService.mask_attention(
                out.attention.for_sample(0),
                masks,
                taxonomy,
                gamma=self.attn_cfg.gamma,
                sigma=self.attn_cfg.gaussian_sigma,
                kernel=self.attn_cfg.gaussian_kernel,
            )
            attention = maps.norm[maps.pairs.index(target)].cpu().numpy()
            title = taxonomy.obj_part_names[target]
        elif target is not None:
            logger.warning("%r is not predicted in %s", taxonomy.obj_part_names[target], stem)

        figure = self.runs.save_inference_figure(
            image, pred, taxonomy.num_pairs, attention, title, f"{stem}_figure.png"
        )
        predicted = [taxonomy.obj_part_names[k] for k in present]
        return {"label": str(label_path), "figure": str(figure), "predicted": predicted}
