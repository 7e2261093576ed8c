"""Flat dotted-key configuration: TOML file, then ``--set KEY=VALUE`` overrides."""

from __future__ import annotations

import hashlib
import json
import os
import tomllib
from collections.abc import Iterable, Iterator, Mapping
from pathlib import Path
from typing import Any, get_origin

from pydantic import BaseModel, ValidationError

from src.application.dtos.config_dto import RunConfig
from src.domain.errors import ConfigError


def default_out_dir() -> Path:
    return Path(os.getenv("PARTSEG_OUT", "runs"))


def default_log_level() -> str:
    return os.getenv("PARTSEG_LOG_LEVEL", "INFO")


def flatten(nested: Mapping[str, Any], prefix: str = "") -> dict[str, Any]:
    flat: dict[str, Any] = {}
    for key, value in nested.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, Mapping):
            flat.update(flatten(value, prefix=f"{dotted}."))
        else:
            flat[dotted] = value
    return flat


def unflatten(flat: Mapping[str, Any]) -> dict[str, Any]:
    nested: dict[str, Any] = {}
    for dotted, value in flat.items():
        node = nested
        *path, leaf = dotted.split(".")
        for part in path:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(dotted, "conflicts with a scalar key")
            node = child
        node[leaf] = value
    return nested


def _leaf_keys(model: type[BaseModel], prefix: str = "") -> Iterator[tuple[str, Any]]:
    for name, info in model.model_fields.items():
        annotation = info.annotation
        is_class = get_origin(annotation) is None and isinstance(annotation, type)
        if is_class and issubclass(annotation, BaseModel):
            yield from _leaf_keys(annotation, prefix=f"{prefix}{name}.")
        else:
            yield f"{prefix}{name}", info


def config_keys() -> list[tuple[str, str]]:
    """Every addressable dotted key with its default, for ``--help``."""
    defaults = flatten(RunConfig().model_dump(mode="json"))
    return [(key, json.dumps(defaults.get(key))) for key, _ in _leaf_keys(RunConfig)]


def parse_value(text: str) -> Any:
    """TOML literal (``1e-4``, ``true``, ``"x"``, ``[0.1, 0.2]``); bare strings otherwise."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def parse_overrides(items: Iterable[str]) -> dict[str, Any]:
    overrides: dict[str, Any] = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(item, "expected KEY=VALUE")
        overrides[key.strip()] = parse_value(value.strip())
    return overrides


def read_config_file(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(str(path), "config file not found")
    try:
        return flatten(tomllib.loads(path.read_text(encoding="utf-8")))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(path), f"invalid TOML: {exc}") from exc


def build_config(flat: Mapping[str, Any]) -> RunConfig:
    known = {key for key, _ in _leaf_keys(RunConfig)}
    for key in flat:
        if key not in known:
            raise ConfigError(key, "unknown configuration key")
    try:
        return RunConfig.model_validate(unflatten(flat))
    except ValidationError as exc:
        err = exc.errors()[0]
        key = ".".join(str(p) for p in err["loc"] if not isinstance(p, int)) or "config"
        raise ConfigError(key, err["msg"]) from exc


def load_config(
    path: str | Path | None = None,
    overrides: Iterable[str] = (),
    extra: Mapping[str, Any] | None = None,
) -> RunConfig:
    flat: dict[str, Any] = {}
    if path is not None:
        flat.update(read_config_file(path))
    flat.update(extra or {})
    flat.update(parse_overrides(overrides))
    return build_config(flat)


def config_document(config: RunConfig) -> dict[str, Any]:
    return config.model_dump(mode="json")


def config_hash(config: RunConfig) -> str:
    payload = json.dumps(config_document(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()
