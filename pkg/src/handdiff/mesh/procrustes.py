"""Similarity Procrustes alignment (the "rigid alignment" of PA metrics).

Scale is included by default, matching the field-standard PA protocol;
pass ``with_scale=False`` for a scale-free rigid alignment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InputError


@dataclass(frozen=True)
class SimilarityTransform:
    scale: float
    rotation: np.ndarray     # (3, 3)
    translation: np.ndarray  # (3,)

    def apply(self, points: np.ndarray) -> np.ndarray:
        return self.scale * points @ self.rotation.T + self.translation


def procrustes_align(pred: np.ndarray, target: np.ndarray,
                     with_scale: bool = True):
    """Least-squares similarity alignment of ``pred`` onto ``target``.

    Returns ``(aligned_pred, transform)`` where the transform minimizes the
    sum of squared distances over {scale, rotation, translation} (or
    {rotation, translation} when ``with_scale`` is off).
    """
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape or p.ndim != 2 or p.shape[1] != 3 or p.shape[0] < 3:
        raise InputError(f"need matching (N>=3, 3) point sets, got {p.shape} and {t.shape}")

    mu_p = p.mean(axis=0)
    mu_t = t.mean(axis=0)
    pc = p - mu_p
    tc = t - mu_t
    var_p = (pc ** 2).sum() / p.shape[0]
    if var_p < 1e-18:
        raise InputError("pred points are coincident; alignment is degenerate")

    cov = tc.T @ pc / p.shape[0]
    u, s, vt = np.linalg.svd(cov)
    if s[1] < 1e-15 * max(s[0], 1.0):
        raise InputError("point configuration is rank-deficient (collinear)")
    d = np.sign(np.linalg.det(u @ vt))
    diag = np.array([1.0, 1.0, d])
    rot = u @ np.diag(diag) @ vt
    scale = float((s * diag).sum() / var_p) if with_scale else 1.0
    trans = mu_t - scale * rot @ mu_p
    transform = SimilarityTransform(scale=scale, rotation=rot, translation=trans)
    return transform.apply(p), transform


def alignment_residual(pred: np.ndarray, target: np.ndarray,
                       with_scale: bool = True) -> float:
    """Sum of squared distances after optimal alignment."""
    aligned, _ = procrustes_align(pred, target, with_scale=with_scale)
    return float(((aligned - np.asarray(target, dtype=np.float64)) ** 2).sum())
