"""Root-relative pose vectors.

A pose is a float64 vector of length 3*J holding (x, y, z) per joint in
millimetres, joint 0 being the root and sitting at the origin. Batches of
poses are (n, 3*J) arrays.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, DomainError

DEFAULT_JOINTS = 17


def as_pose(y, check_root: bool = True) -> np.ndarray:
    arr = np.asarray(y, dtype=np.float64)
    if arr.ndim not in (1, 2) or arr.shape[-1] % 3 or arr.shape[-1] == 0:
        raise DimensionError(f"pose length must be a positive multiple of 3, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("pose contains non-finite coordinates")
    if check_root and np.any(arr[..., :3] != 0.0):
        raise DomainError("pose root joint is not at the origin")
    return arr


def joints(y: np.ndarray) -> np.ndarray:
    """View a pose (or batch) as (..., J, 3)."""
    return y.reshape(y.shape[:-1] + (-1, 3))


def zero_root(y: np.ndarray) -> np.ndarray:
    out = np.array(y, dtype=np.float64)
    out[..., :3] = 0.0
    return out


def joint_count(y: np.ndarray) -> int:
    return y.shape[-1] // 3
