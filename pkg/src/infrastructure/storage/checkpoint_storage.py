from __future__ import annotations

import hashlib
import json
import logging
import zipfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import torch
from torch import nn

from src.domain.errors import ConfigMismatch, CorruptArchive

logger = logging.getLogger(__name__)

MANIFEST_KEY = "__manifest__"


@dataclass(frozen=True)
class CheckpointInfo:
    path: Path
    step: int
    config_hash: str
    extra: dict[str, Any]


def _digest(array: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(array).tobytes()).hexdigest()


class CheckpointStorage:
    """Named-array archive (``.npz``) of the trainable state plus a JSON manifest.

    The manifest records the step, the config hash and a SHA-256 per array;
    any mismatch on load raises ``CorruptArchive``.
    """

    @staticmethod
    def save(
        model: nn.Module,
        path: str | Path,
        step: int,
        config_hash: str,
        extra: dict[str, Any] | None = None,
    ) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        arrays = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
        manifest = {
            "step": step,
            "config_hash": config_hash,
            "extra": extra or {},
            "arrays": {
                k: {"sha256": _digest(a), "dtype": str(a.dtype), "shape": list(a.shape)}
                for k, a in sorted(arrays.items())
            },
        }
        blob = np.frombuffer(json.dumps(manifest, sort_keys=True).encode(), dtype=np.uint8)
        # np.savez appends .npz to bare names; write through a handle to keep the given path
        with path.open("wb") as fh:
            np.savez(fh, **arrays, **{MANIFEST_KEY: blob})
        logger.info("Saved checkpoint %s (step %d)", path, step)
        return path

    @staticmethod
    def _read(path: Path) -> tuple[dict[str, Any], dict[str, np.ndarray]]:
        if not path.is_file():
            raise CorruptArchive(f"Checkpoint not found: {path}")
        try:
            with np.load(path, allow_pickle=False) as archive:
                arrays = {k: archive[k] for k in archive.files}
            manifest = json.loads(arrays.pop(MANIFEST_KEY).tobytes().decode())
        except (zipfile.BadZipFile, ValueError, KeyError, OSError, EOFError) as exc:
            raise CorruptArchive(f"Unreadable checkpoint {path}: {exc}") from exc
        expected = manifest.get("arrays", {})
        if set(expected) != set(arrays):
            raise CorruptArchive(f"Checkpoint {path} array set does not match its manifest")
        for key, meta in expected.items():
            if _digest(arrays[key]) != meta["sha256"]:
                raise CorruptArchive(f"Checksum mismatch for {key!r} in {path}")
        return manifest, arrays

    @staticmethod
    def inspect(path: str | Path) -> CheckpointInfo:
        path = Path(path)
        manifest, _ = CheckpointStorage._read(path)
        return CheckpointInfo(path, manifest["step"], manifest["config_hash"], manifest["extra"])

    @staticmethod
    def load(
        model: nn.Module,
        path: str | Path,
        expected_hash: str | None = None,
        allow_mismatch: bool = False,
    ) -> CheckpointInfo:
        """Restore parameters bit-for-bit; a config-hash mismatch needs ``allow_mismatch``."""
        path = Path(path)
        manifest, arrays = CheckpointStorage._read(path)
        if expected_hash is not None and manifest["config_hash"] != expected_hash:
            message = (
                f"Checkpoint {path} was written with config {manifest['config_hash'][:12]}, "
                f"current config is {expected_hash[:12]}"
            )
            if not allow_mismatch:
                raise ConfigMismatch(message + " (pass --allow-config-mismatch to override)")
            logger.warning(message)
        state = {k: torch.from_numpy(np.array(v)) for k, v in arrays.items()}
        try:
            model.load_state_dict(state, strict=True)
        except RuntimeError as exc:
            raise CorruptArchive(f"Checkpoint {path} does not fit the model: {exc}") from exc
        return CheckpointInfo(path, manifest["step"], manifest["config_hash"], manifest["extra"])
