import os
import sys
from pathlib import Path

import pytest

# Ensure project root is on sys.path so 'src' is importable during tests
ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

os.environ.setdefault("PARTSEG_LOG_LEVEL", "WARNING")

TINY_OVERRIDES = {
    "model.image_size": 32,
    "model.token_grid": 8,
    "model.embed_dim": 8,
    "model.decoder_blocks": 1,
    "train.total_iters": 6,
    "train.warmup_iters": 2,
    "train.batch_size": 2,
    "train.checkpoint_every": 3,
    "train.base_lr": 0.003,
    "synth.image_size": 32,
    "synth.train_samples": 8,
    "synth.val_samples": 4,
    "eval.batch_size": 4,
}


@pytest.fixture()
def taxonomy():
    from src.domain.services.taxonomy_service import TaxonomyService

    return TaxonomyService.build_taxonomy(
        ["dog's head", "dog's leg", "cat's head", "cat's tail"], unseen_objects=["cat"]
    )


@pytest.fixture()
def tiny_config():
    from src.infrastructure.config.run_config import build_config

    return build_config(TINY_OVERRIDES)


@pytest.fixture()
def tiny_model(tiny_config):
    from src.application.model_factory import build_model

    return build_model(tiny_config.model)


@pytest.fixture(scope="session")
def synthetic_root(tmp_path_factory) -> Path:
    # lazy import so sys.path is configured first
    from src.application.use_cases.generate_synthetic import GenerateSyntheticUseCase
    from src.infrastructure.config.run_config import build_config

    root = tmp_path_factory.mktemp("synthetic")
    GenerateSyntheticUseCase(root).execute(build_config(TINY_OVERRIDES).synth)
    return root


@pytest.fixture()
def tiny_overrides() -> list[str]:
    """``--set`` arguments matching ``TINY_OVERRIDES``."""
    args: list[str] = []
    for key, value in TINY_OVERRIDES.items():
        args += ["--set", f"{key}={value}"]
    return args
