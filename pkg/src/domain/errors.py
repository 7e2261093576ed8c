"""Exception hierarchy shared by every layer.

Input-validation failures also derive from ``ValueError`` and infrastructure
failures from ``RuntimeError`` so callers can catch the builtin families.
"""

from __future__ import annotations

from typing import Any


class PartSegError(Exception):
    """Base class for all project errors."""


# --------- taxonomy ---------
class MalformedCategoryName(PartSegError, ValueError):
    pass


class DuplicateCategory(PartSegError, ValueError):
    pass


class UnknownUnseenObject(PartSegError, ValueError):
    pass


class TaxonomyInvariantError(PartSegError, ValueError):
    pass


# --------- model ---------
class EncoderUnavailable(PartSegError, ValueError):
    pass


class ShapeMismatch(PartSegError, ValueError):
    pass


class KindMismatch(PartSegError, ValueError):
    pass


class IncompleteBundle(PartSegError, ValueError):
    pass


# --------- attention control / losses ---------
class EmptyMask(PartSegError, ValueError):
    pass


class EmptyCategoryList(PartSegError, ValueError):
    pass


class LabelOutOfRange(PartSegError, ValueError):
    pass


class ChannelMismatch(PartSegError, ValueError):
    pass


# --------- metrics / protocols ---------
class NoDefinedClasses(PartSegError, ValueError):
    pass


class UnknownObject(PartSegError, ValueError):
    pass


class InvalidDilation(PartSegError, ValueError):
    pass


# --------- data / harness ---------
class EmptySplit(PartSegError, ValueError):
    pass


class MissingFile(PartSegError, ValueError):
    pass


class BadLabelRange(PartSegError, ValueError):
    pass


class ConfigError(PartSegError, ValueError):
    """Invalid configuration; ``key`` names the offending dotted path."""

    def __init__(self, key: str, message: str) -> None:
        super().__init__(f"{key}: {message}")
        self.key = key


class ConfigMismatch(PartSegError, ValueError):
    pass


class NonFiniteLoss(PartSegError, RuntimeError):
    """Training produced a NaN/Inf loss; carries the step and component values."""

    def __init__(self, step: int, components: dict[str, Any]) -> None:
        parts = ", ".join(f"{k}={v}" for k, v in sorted(components.items()))
        super().__init__(f"Non-finite loss at step {step}: {parts}")
        self.step = step
        self.components = components


class CorruptArchive(PartSegError, RuntimeError):
    pass
