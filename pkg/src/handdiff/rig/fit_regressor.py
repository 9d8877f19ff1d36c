"""Fit the sparse vertex-to-joint regression matrix on sampled poses."""

from __future__ import annotations

import numpy as np
from scipy.optimize import nnls

from ..errors import CalibrationError, InputError
from ..mesh import MAX_ROW_NONZEROS, NUM_JOINTS, JointRegressor, make_regressor
from .pose import pose_hand, posed_joints, sample_pose
from .template import HandRig

HELD_OUT_THRESHOLD_MM = 2.0
EXACT_MATCH_TOL = 1e-9


def fit_regressor_from_pairs(vertex_sets, joint_sets, vertex_count: int,
                             candidates: np.ndarray | None = None) -> JointRegressor:
    """Non-negative least-squares fit of per-joint vertex weights.

    ``vertex_sets``: list of (V, 3) arrays; ``joint_sets``: matching (21, 3)
    arrays. ``candidates`` optionally restricts each joint's support to a
    (21, K) index array. A candidate vertex that matches a joint exactly in
    every pair short-circuits to a one-hot row.
    """
    if len(vertex_sets) != len(joint_sets) or not vertex_sets:
        raise InputError("need matching, non-empty vertex/joint set lists")
    verts = np.stack([np.asarray(v, dtype=np.float64) for v in vertex_sets])
    joints = np.stack([np.asarray(j, dtype=np.float64) for j in joint_sets])
    rows = np.zeros((NUM_JOINTS, vertex_count))
    for j in range(NUM_JOINTS):
        cand = candidates[j] if candidates is not None \
            else _nearest_candidates(verts[0], joints[0, j])
        # exact hit: a single vertex coincides with the joint in every pair
        errs = np.linalg.norm(verts[:, cand, :] - joints[:, None, j, :], axis=2)
        exact = np.nonzero(errs.max(axis=0) < EXACT_MATCH_TOL)[0]
        if exact.size:
            rows[j, cand[exact[0]]] = 1.0
            continue
        a = verts[:, cand, :].transpose(0, 2, 1).reshape(-1, len(cand))
        b = joints[:, j, :].reshape(-1)
        w, _ = nnls(a, b)
        if w.sum() <= 0:
            raise CalibrationError(f"joint {j}: no usable support found")
        rows[j, cand] = w
    return make_regressor(rows)


def _nearest_candidates(rest_vertices: np.ndarray, joint: np.ndarray,
                        k: int = MAX_ROW_NONZEROS) -> np.ndarray:
    d = np.linalg.norm(rest_vertices - joint[None, :], axis=1)
    return np.argsort(d, kind="stable")[:k]


def derive_joint_regressor(rig: HandRig, n_poses: int,
                           rng: np.random.Generator) -> JointRegressor:
    """Fit the regressor on random in-limit poses; validate held out.

    Raises CalibrationError when the held-out mean joint error reaches
    2 mm.
    """
    if n_poses < 100:
        raise InputError(f"need at least 100 poses, got {n_poses}")
    poses = [sample_pose(rng, rig, rotation="uniform") for _ in range(n_poses)]
    verts = [pose_hand(rig, p) for p in poses]
    joints = [posed_joints(rig, p) for p in poses]
    n_train = int(0.8 * n_poses)
    candidates = np.stack([
        _nearest_candidates(rig.template_vertices, rig.rest_joints[j])
        for j in range(NUM_JOINTS)])
    reg = fit_regressor_from_pairs(verts[:n_train], joints[:n_train],
                                   rig.vertex_count, candidates=candidates)
    held = np.array([
        np.linalg.norm(reg.weights @ v - gt, axis=1).mean()
        for v, gt in zip(verts[n_train:], joints[n_train:])])
    err = float(held.mean())
    if err >= HELD_OUT_THRESHOLD_MM:
        raise CalibrationError(
            f"held-out joint error {err:.3f} mm >= {HELD_OUT_THRESHOLD_MM} mm")
    return reg
