"""Sparse linear map from mesh vertices to the 21-joint hand skeleton."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..errors import InputError

NUM_JOINTS = 21
MAX_ROW_NONZEROS = 16

# Joint order: wrist, then 4 joints (base -> tip) per finger in the order
# thumb, index, middle, ring, pinky.
JOINT_NAMES = ["wrist"] + [
    f"{finger}_{part}"
    for finger in ("thumb", "index", "middle", "ring", "pinky")
    for part in ("mcp", "pip", "dip", "tip")
]
FINGER_JOINTS = {
    finger: list(range(1 + 4 * i, 1 + 4 * (i + 1)))
    for i, finger in enumerate(("thumb", "index", "middle", "ring", "pinky"))
}


@dataclass(frozen=True)
class JointRegressor:
    """Non-negative, row-stochastic (21 x V) matrix with <= 16 nonzeros per row."""

    weights: sp.csr_matrix  # (21, V)

    def __post_init__(self):
        w = self.weights
        if w.shape[0] != NUM_JOINTS:
            raise InputError(f"regressor must have {NUM_JOINTS} rows, got {w.shape[0]}")
        if w.nnz and w.data.min() < -1e-12:
            raise InputError("regressor weights must be non-negative")
        rows = np.diff(w.indptr)
        if rows.max() > MAX_ROW_NONZEROS:
            raise InputError(
                f"regressor rows may hold at most {MAX_ROW_NONZEROS} nonzeros, "
                f"got {rows.max()}"
            )
        sums = np.asarray(w.sum(axis=1)).ravel()
        if not np.allclose(sums, 1.0, atol=1e-6):
            raise InputError("regressor rows must sum to 1")

    @property
    def vertex_count(self) -> int:
        return int(self.weights.shape[1])


def make_regressor(rows: np.ndarray) -> JointRegressor:
    """Build a JointRegressor from a dense (21, V) weight matrix.

    Tiny negatives from the solver are clipped, rows renormalized to sum 1.
    """
    rows = np.asarray(rows, dtype=np.float64)
    rows = np.clip(rows, 0.0, None)
    sums = rows.sum(axis=1, keepdims=True)
    if np.any(sums <= 0):
        raise InputError("every regressor row needs at least one positive weight")
    return JointRegressor(weights=sp.csr_matrix(rows / sums))


def regress_joints(vertices: np.ndarray, regressor: JointRegressor) -> np.ndarray:
    """Joint positions (21, 3) as convex combinations of vertices."""
    v = np.asarray(vertices, dtype=np.float64)
    if v.ndim != 2 or v.shape != (regressor.vertex_count, 3):
        raise InputError(
            f"vertices must have shape ({regressor.vertex_count}, 3), got {v.shape}"
        )
    return regressor.weights @ v
