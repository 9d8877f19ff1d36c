"""Training losses: L1 data term on the denoiser output, vertex/joint L1
sums, and the two mesh smoothness terms (normal consistency and edge
length). All differentiable in the prediction; reductions follow the
written sums except the data term, which is mean-reduced (recorded in the
run config)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .errors import InputError
from .mesh import JointRegressor, MeshTopology


@dataclass(frozen=True)
class LossWeights:
    data: float = 1.0
    vertex: float = 1.0
    joint: float = 1.0
    normal: float = 0.1
    edge: float = 1.0

    def __post_init__(self):
        vals = (self.data, self.vertex, self.joint, self.normal, self.edge)
        if any(v < 0 for v in vals):
            raise InputError(f"loss weights must be non-negative, got {vals}")
        if all(v == 0 for v in vals):
            raise InputError("at least one loss weight must be positive")


def joint_matrix(regressor: JointRegressor, dtype=torch.float32) -> torch.Tensor:
    """Dense (21, V) torch copy of the sparse regressor."""
    return torch.from_numpy(regressor.weights.toarray()).to(dtype)


def data_loss(x0_pred: torch.Tensor, x0: torch.Tensor) -> torch.Tensor:
    """Mean absolute error over every coordinate."""
    if x0_pred.shape != x0.shape:
        raise InputError(f"shape mismatch {x0_pred.shape} vs {x0.shape}")
    return (x0_pred - x0).abs().mean()


def vertex_joint_loss(v_pred: torch.Tensor, v_gt: torch.Tensor,
                      regressor_mat: torch.Tensor):
    """(L_V, L_J): summed L1 over vertices and over regressed joints.

    Batched inputs reduce by mean over the batch of per-sample sums.
    """
    if v_pred.shape != v_gt.shape:
        raise InputError(f"shape mismatch {v_pred.shape} vs {v_gt.shape}")
    diff = (v_pred - v_gt).abs().sum(dim=(-1, -2))
    j = regressor_mat.to(v_pred.dtype)
    jdiff = (j @ v_pred - j @ v_gt).abs().sum(dim=(-1, -2))
    return diff.mean(), jdiff.mean()


def _face_gather(v: torch.Tensor, faces: torch.Tensor):
    return v[..., faces[:, 0], :], v[..., faces[:, 1], :], v[..., faces[:, 2], :]


def normal_loss(v_pred: torch.Tensor, v_gt: torch.Tensor,
                topology: MeshTopology, area_eps: float = 1e-12) -> torch.Tensor:
    """Normal consistency: per face, |dot| of the predicted mesh's three
    edge vectors with the ground-truth unit face normal, summed.

    Degenerate ground-truth faces are excluded from the sum.
    """
    faces = torch.from_numpy(topology.faces)
    g0, g1, g2 = _face_gather(v_gt, faces)
    n = torch.cross(g1 - g0, g2 - g0, dim=-1)
    norm = torch.linalg.norm(n, dim=-1, keepdim=True)
    valid = (norm.squeeze(-1) > 2.0 * area_eps).to(v_pred.dtype)
    n = n / torch.clamp(norm, min=1e-30)
    p0, p1, p2 = _face_gather(v_pred, faces)
    total = ((p1 - p0) * n).sum(-1).abs() \
        + ((p2 - p1) * n).sum(-1).abs() \
        + ((p0 - p2) * n).sum(-1).abs()
    return (total * valid).sum(dim=-1).mean()


def edge_loss(v_pred: torch.Tensor, v_gt: torch.Tensor,
              topology: MeshTopology) -> torch.Tensor:
    """Summed L1 distance between per-edge lengths of the two meshes."""
    edges = torch.from_numpy(topology.edges)
    dp = v_pred[..., edges[:, 1], :] - v_pred[..., edges[:, 0], :]
    dg = v_gt[..., edges[:, 1], :] - v_gt[..., edges[:, 0], :]
    lp = torch.linalg.norm(dp, dim=-1)
    lg = torch.linalg.norm(dg, dim=-1)
    return (lp - lg).abs().sum(dim=-1).mean()


def total_loss(x0_pred: torch.Tensor, x0: torch.Tensor,
               regressor_mat: torch.Tensor, topology: MeshTopology,
               weights: LossWeights):
    """Weighted sum plus the per-term breakdown (floats, for logging)."""
    terms = {}
    terms["data"] = data_loss(x0_pred, x0)
    lv, lj = vertex_joint_loss(x0_pred, x0, regressor_mat)
    terms["vertex"] = lv
    terms["joint"] = lj
    terms["normal"] = normal_loss(x0_pred, x0, topology)
    terms["edge"] = edge_loss(x0_pred, x0, topology)
    total = (weights.data * terms["data"] + weights.vertex * terms["vertex"]
             + weights.joint * terms["joint"] + weights.normal * terms["normal"]
             + weights.edge * terms["edge"])
    breakdown = {k: float(v.detach()) for k, v in terms.items()}
    return total, breakdown
