from __future__ import annotations

from pathlib import Path

import numpy as np

from src.application.dtos.config_dto import RunConfig
from src.application.model_factory import build_model, recorded_model_config
from src.application.use_cases.data_loading import SplitArrays, load_split
from src.domain.entities.taxonomy import Taxonomy
from src.domain.model.partseg_model import PartSegModel
from src.domain.services.taxonomy_service import TaxonomyService
from src.infrastructure.storage.checkpoint_storage import CheckpointStorage
from src.infrastructure.storage.dataset_storage import DatasetStorage
from src.infrastructure.storage.run_storage import RunStorage


def get_dataset_storage(root: str | Path) -> DatasetStorage:
    return DatasetStorage(root)


def get_run_storage(out_dir: str | Path) -> RunStorage:
    return RunStorage(out_dir)


def get_checkpoint_storage() -> CheckpointStorage:
    return CheckpointStorage()


def get_train_split(data_dir: Path) -> tuple[SplitArrays, Taxonomy]:
    """Train split restricted to the seen categories."""
    storage = get_dataset_storage(data_dir / "train")
    seen_taxonomy, lut = TaxonomyService.seen_subset(storage.load_taxonomy())
    return load_split(storage, seen_taxonomy, lut), seen_taxonomy


def get_eval_split(
    data_dir: Path, split: str = "val", taxonomy_source: str | Path | None = None
) -> tuple[SplitArrays, Taxonomy]:
    storage = get_dataset_storage(data_dir / split)
    taxonomy = storage.load_taxonomy(taxonomy_source)
    lut = None
    if taxonomy_source is not None:
        lut = _label_bridge(storage.load_taxonomy(), taxonomy)
    return load_split(storage, taxonomy, lut), taxonomy


def _label_bridge(source: Taxonomy, target: Taxonomy) -> np.ndarray:
    """Map labels of ``source`` onto ``target`` by category name; unknown names -> background."""
    lut = np.zeros(source.num_pairs + 1, dtype=np.int64)
    index = {name: k for k, name in enumerate(target.obj_part_names)}
    for k, name in enumerate(source.obj_part_names):
        if name in index:
            lut[k + 1] = index[name] + 1
    return lut


def get_model_from_checkpoint(
    path: Path, config: RunConfig, checkpoints: CheckpointStorage
) -> PartSegModel:
    """Rebuild the architecture recorded in the checkpoint, then restore its weights."""
    model = build_model(recorded_model_config(checkpoints.inspect(path).extra, config.model))
    checkpoints.load(model, path)
    return model
