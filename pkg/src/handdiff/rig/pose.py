"""Forward kinematics, linear blend skinning and the kinematic Jacobian."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import PoseError
from ..mesh import NUM_JOINTS
from .template import HandRig


@dataclass(frozen=True)
class PoseSample:
    joint_angles: np.ndarray                  # (n_dofs,) radians, canonical order
    global_rotation: np.ndarray = field(
        default_factory=lambda: np.eye(3))    # (3, 3)
    global_translation: np.ndarray = field(
        default_factory=lambda: np.zeros(3))  # mm
    scale: float = 1.0


def _axis_rotation(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation about a unit axis."""
    c, s = np.cos(angle), np.sin(angle)
    x, y, z = axis
    k = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.eye(3) + s * k + (1.0 - c) * (k @ k)


def validate_pose(rig: HandRig, pose: PoseSample) -> None:
    limits = rig.dof_limits()
    lo_bad = pose.joint_angles < limits[:, 0] - 1e-12
    hi_bad = pose.joint_angles > limits[:, 1] + 1e-12
    if lo_bad.any() or hi_bad.any():
        k = int(np.argmax(lo_bad | hi_bad))
        raise PoseError(
            f"dof '{rig.dofs[k].name}' angle {pose.joint_angles[k]:+.4f} outside "
            f"[{limits[k, 0]:+.4f}, {limits[k, 1]:+.4f}]")
    if pose.scale <= 0:
        raise PoseError(f"scale must be positive, got {pose.scale}")


def _dofs_by_joint(rig: HandRig):
    by_joint = [[] for _ in range(NUM_JOINTS)]
    for k, d in enumerate(rig.dofs):
        by_joint[d.joint].append(k)
    return by_joint


def forward_kinematics(rig: HandRig, pose: PoseSample):
    """World transforms per joint, before the global similarity.

    Returns (joint_positions (21,3), world_rotations (21,3,3),
    skin_transforms (21,3,4)) where a skin transform maps rest-space
    points: p' = R p + t.
    """
    by_joint = _dofs_by_joint(rig)
    world_rot = np.zeros((NUM_JOINTS, 3, 3))
    world_pos = np.zeros((NUM_JOINTS, 3))
    for j in range(NUM_JOINTS):
        local = np.eye(3)
        for k in by_joint[j]:
            local = local @ _axis_rotation(rig.dofs[k].axis, pose.joint_angles[k])
        p = rig.parents[j]
        if p < 0:
            world_rot[j] = local
            world_pos[j] = rig.rest_joints[j]
        else:
            offset = rig.rest_joints[j] - rig.rest_joints[p]
            world_rot[j] = world_rot[p] @ local
            world_pos[j] = world_pos[p] + world_rot[p] @ offset
    skin = np.zeros((NUM_JOINTS, 3, 4))
    skin[:, :, :3] = world_rot
    skin[:, :, 3] = world_pos - np.einsum("jab,jb->ja", world_rot, rig.rest_joints)
    return world_pos, world_rot, skin


def _apply_global(points: np.ndarray, pose: PoseSample,
                  pivot: np.ndarray) -> np.ndarray:
    return (pose.scale * (points - pivot) @ pose.global_rotation.T
            + pivot + pose.global_translation)


def pose_hand(rig: HandRig, pose: PoseSample, validate: bool = True) -> np.ndarray:
    """Posed vertices (V, 3): LBS then the global similarity about the wrist."""
    if validate:
        validate_pose(rig, pose)
    _, _, skin = forward_kinematics(rig, pose)
    v = rig.template_vertices
    # per-vertex blended affine transform
    blended = np.einsum("vj,jab->vab", rig.skinning_weights, skin)
    posed = np.einsum("vab,vb->va", blended[:, :, :3], v) + blended[:, :, 3]
    return _apply_global(posed, pose, rig.rest_joints[0])


def posed_joints(rig: HandRig, pose: PoseSample, validate: bool = True) -> np.ndarray:
    """Skeleton joints (21, 3) under the same map as pose_hand."""
    if validate:
        validate_pose(rig, pose)
    world_pos, _, _ = forward_kinematics(rig, pose)
    return _apply_global(world_pos, pose, rig.rest_joints[0])


def sample_pose(rng: np.random.Generator, rig: HandRig,
                translation_range: float = 0.0,
                scale_range: tuple[float, float] = (1.0, 1.0),
                rotation: str = "uniform",
                rotation_limit: float = 1.0) -> PoseSample:
    """Random in-limit pose: per-DoF uniform, global rotation uniform on SO(3).

    Deterministic given the generator state. ``rotation="none"`` keeps the
    canonical orientation; ``"limited"`` rotates about a uniform random axis
    by an angle uniform in [0, rotation_limit].
    """
    limits = rig.dof_limits()
    angles = rng.uniform(limits[:, 0], limits[:, 1])
    if rotation == "uniform":
        q = rng.standard_normal(4)
        q /= np.linalg.norm(q)
        w, x, y, z = q
        rot = np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ])
    elif rotation == "limited":
        axis = rng.standard_normal(3)
        axis /= np.linalg.norm(axis)
        rot = _axis_rotation(axis, rng.uniform(0.0, rotation_limit))
    elif rotation == "none":
        rot = np.eye(3)
    else:
        raise ValueError(f"unknown rotation mode {rotation!r}")
    trans = rng.uniform(-translation_range, translation_range, size=3) \
        if translation_range > 0 else np.zeros(3)
    scale = float(rng.uniform(*scale_range))
    return PoseSample(joint_angles=angles, global_rotation=rot,
                      global_translation=trans, scale=scale)


def pose_jacobian(rig: HandRig, pose: PoseSample,
                  validate: bool = True) -> np.ndarray:
    """Analytic d(posed vertices)/d(joint angles), shape (V, 3, n_dofs).

    Uses the geometric rule: a revolute DoF with world axis w and pivot p
    moves a chain point x at rate w x (x - p). The world axis of a DoF is
    the composition of every rotation applied before it.
    """
    if validate:
        validate_pose(rig, pose)
    by_joint = _dofs_by_joint(rig)
    world_pos, world_rot, skin = forward_kinematics(rig, pose)

    # world axis and pivot per dof
    axes = np.zeros((rig.n_dofs, 3))
    pivots = np.zeros((rig.n_dofs, 3))
    for j in range(NUM_JOINTS):
        p = rig.parents[j]
        prefix = np.eye(3) if p < 0 else world_rot[p]
        for k in by_joint[j]:
            d = rig.dofs[k]
            axes[k] = prefix @ d.axis
            pivots[k] = world_pos[j]
            prefix = prefix @ _axis_rotation(d.axis, pose.joint_angles[k])

    # chain membership: dof k influences joint j iff k's joint is an ancestor
    influences = np.zeros((rig.n_dofs, NUM_JOINTS), dtype=bool)
    for j in range(NUM_JOINTS):
        a = j
        while a >= 0:
            for k in by_joint[a]:
                influences[k, j] = True
            a = rig.parents[a]

    v = rig.template_vertices
    # per-(vertex, joint) transformed positions
    pos_vj = (np.einsum("jab,vb->vja", skin[:, :, :3], v) + skin[None, :, :, 3])
    w = rig.skinning_weights  # (V, J)
    jac = np.zeros((rig.vertex_count, 3, rig.n_dofs))
    for k in range(rig.n_dofs):
        mask = influences[k]
        if not mask.any():
            continue
        rel = pos_vj[:, mask, :] - pivots[k][None, None, :]
        spin = np.cross(np.broadcast_to(axes[k], rel.shape), rel)
        jac[:, :, k] = np.einsum("vj,vja->va", w[:, mask], spin)
    # global similarity is linear: chain rule through scale * R
    return np.einsum("ab,vbk->vak", pose.scale * pose.global_rotation, jac)
