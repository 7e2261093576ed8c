from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class SampleRef:
    """Manifest row; pixels are loaded on demand by DatasetStorage."""

    id: str
    image_path: Path
    label_path: Path
    row: int


@dataclass(frozen=True)
class Sample:
    id: str
    image: np.ndarray  # (H, W, 3) float32 in [0, 1]
    label: np.ndarray  # (H, W) int64 obj-part index + 1, 0 = background
    object_label: np.ndarray  # (H, W) int64 object index + 1, 0 = background


@dataclass(frozen=True)
class SupervisionTargets:
    """Binary targets per channel group; uncategory channel last in its group.

    ``objpart`` is (|C_obj-part| + 1, H, W), ``obj`` is (|C_obj| + 1, H, W) and
    ``part`` is (|C_part|, H, W). A leading batch axis is allowed.
    """

    objpart: np.ndarray
    obj: np.ndarray
    part: np.ndarray
