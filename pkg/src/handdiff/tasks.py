"""Downstream procedures: unconditional generation, mesh/skeleton
inpainting, image reconstruction and 2D-skeleton fitting. Each one is
conditioning plus a guidance operator handed to the reverse sampler; the
guidance bias follows the condition-aligned gradient rule (operator
residual differentiated back to the noisy mesh, through the denoiser)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch

from .conditions import ConditionBundle, ConditionEncoder, ConditionTokens
from .diffusion import NoiseSchedule, SamplerConfig, hypothesis_rng, sample
from .errors import InputError, TaskError
from .losses import joint_matrix
from .mesh import JointRegressor, MeshTopology, regress_joints
from .net import GraphDenoiser
from .rig import Camera, HandRig, PoseSample, posed_joints, project

CONFIDENCE_THRESHOLD = 0.5
MIN_CONFIDENT_JOINTS = 4


@dataclass
class PriorModel:
    """A trained prior: denoiser + condition encoder + the normalization
    that maps millimeter meshes into the unit diffusion space."""

    denoiser: GraphDenoiser
    encoder: ConditionEncoder
    schedule: NoiseSchedule
    regressor: JointRegressor
    topology: MeshTopology
    center: np.ndarray          # (3,) mm
    scale: float                # mm

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64)
        self._joint_mat = joint_matrix(self.regressor, torch.float64)

    @property
    def vertex_count(self) -> int:
        return self.topology.vertex_count

    def normalize(self, mm: np.ndarray) -> np.ndarray:
        return (mm - self.center) / self.scale

    def denormalize(self, x: np.ndarray) -> np.ndarray:
        return x * self.scale + self.center

    def denormalize_torch(self, x: torch.Tensor) -> torch.Tensor:
        c = torch.from_numpy(self.center).to(x.dtype)
        return x * self.scale + c

    def model_dtype(self) -> torch.dtype:
        p = next(iter(self.denoiser.parameters()), None)
        return p.dtype if p is not None else torch.float64

    def denoise_np(self, x: np.ndarray, t: int,
                   tokens: ConditionTokens) -> np.ndarray:
        """Numpy-in/numpy-out denoiser call for the sampler."""
        self.denoiser.eval()
        with torch.no_grad():
            xt = torch.from_numpy(np.ascontiguousarray(x)).to(self.model_dtype())
            out = self.denoiser(xt, t, tokens.tokens, tokens.mask)
        return out.double().numpy()


@dataclass(frozen=True)
class GuidanceSpec:
    """Operator, target and scale of the reverse-mean bias.

    kinds: identity | joint_regression | vertex_mask |
    masked_joint_regression | projected_joints.
    """

    kind: str
    target: np.ndarray
    scale: float
    vertex_mask: np.ndarray | None = None   # (V,) bool
    joint_mask: np.ndarray | None = None    # (21,) bool
    camera: Camera | None = None
    norm: str = "l2"                        # "l2" | "l1"
    through_network: bool = True

    def __post_init__(self):
        if self.kind not in ("identity", "joint_regression", "vertex_mask",
                             "masked_joint_regression", "projected_joints"):
            raise InputError(f"unknown guidance operator {self.kind!r}")
        if self.norm not in ("l2", "l1"):
            raise InputError(f"unknown guidance norm {self.norm!r}")
        if not np.isfinite(self.scale) or self.scale < 0:
            raise InputError(f"guidance scale must be finite >= 0, got {self.scale}")


def _project_torch(points: torch.Tensor, camera: Camera) -> torch.Tensor:
    rot = torch.from_numpy(camera.rotation).to(points.dtype)
    trans = torch.from_numpy(camera.translation).to(points.dtype)
    pc = points @ rot.T + trans
    z = torch.clamp(pc[:, 2], min=1.0)
    fx, fy = camera.focal
    cx, cy = camera.principal
    return torch.stack([fx * pc[:, 0] / z + cx, fy * pc[:, 1] / z + cy], dim=1)


def apply_operator(mesh_mm: torch.Tensor, spec: GuidanceSpec,
                   joint_mat: torch.Tensor) -> torch.Tensor:
    """Evaluate the guidance operator on a (V, 3) mesh in millimeters."""
    if spec.kind == "identity":
        return mesh_mm
    if spec.kind == "vertex_mask":
        return mesh_mm[torch.from_numpy(spec.vertex_mask)]
    joints = joint_mat.to(mesh_mm.dtype) @ mesh_mm
    if spec.kind == "joint_regression":
        return joints
    if spec.kind == "masked_joint_regression":
        return joints[torch.from_numpy(spec.joint_mask)]
    projected = _project_torch(joints, spec.camera)
    return projected[torch.from_numpy(spec.joint_mask)]


def guidance_gradient(x_t: np.ndarray, t: int, tokens: ConditionTokens,
                      spec: GuidanceSpec, model: PriorModel,
                      trace: list | None = None) -> np.ndarray:
    """Gradient of ||P f(x_t, c, t) - P target|| w.r.t. the noisy mesh.

    Differentiates through the denoiser by default; the locally-constant
    option treats the network Jacobian as 1/sqrt(alpha_bar_t) * I.
    Returns a (V, 3) array in the normalized diffusion space; exact zero
    at zero residual.
    """
    model.denoiser.eval()
    dtype = model.model_dtype()
    target = torch.from_numpy(np.asarray(spec.target, dtype=np.float64))
    if spec.through_network:
        x = torch.from_numpy(np.ascontiguousarray(x_t)).to(dtype)
        x.requires_grad_(True)
        x0p = model.denoiser(x, t, tokens.tokens, tokens.mask)
        leaf = x
    else:
        with torch.no_grad():
            xt = torch.from_numpy(np.ascontiguousarray(x_t)).to(dtype)
            x0p = model.denoiser(xt, t, tokens.tokens, tokens.mask)
        x0p = x0p.detach().requires_grad_(True)
        leaf = x0p
    mesh_mm = model.denormalize_torch(x0p.double())
    residual = apply_operator(mesh_mm, spec, model._joint_mat) - target
    if spec.norm == "l2":
        sq = (residual ** 2).sum()
        if float(sq.detach()) < 1e-24:
            if trace is not None:
                trace.append(0.0)
            return np.zeros_like(x_t)
        loss = torch.sqrt(sq)
    else:
        loss = residual.abs().sum()
    if trace is not None:
        trace.append(float(loss.detach()))
    grad = torch.autograd.grad(loss, leaf)[0]
    g = grad.detach().double().numpy()
    if not spec.through_network:
        g = g / math.sqrt(model.schedule.alpha_bar(t))
    return g.astype(np.float64)


@dataclass
class HypothesisSet:
    """n sampled meshes (mm) plus reproduction metadata."""

    meshes: np.ndarray                 # (n, V, 3) mm
    seed: int
    sampler: SamplerConfig
    residual_traces: list | None = None  # per hypothesis, per guided step
    extras: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return int(self.meshes.shape[0])


def _run_sampler(model: PriorModel, tokens: ConditionTokens,
                 config: SamplerConfig, spec: GuidanceSpec | None):
    guided = spec is not None and config.guidance_scale > 0
    traces = [[] for _ in range(config.hypotheses)] if guided else None
    guidance = None
    if guided:
        guidance = lambda x, t, i: guidance_gradient(
            x, t, tokens, spec, model, traces[i])
    outputs = sample(lambda x, t, c: model.denoise_np(x, t, tokens),
                     tokens, model.schedule, config,
                     (model.vertex_count, 3), guidance=guidance)
    meshes = np.stack([model.denormalize(o) for o in outputs])
    return meshes, traces


def generate(model: PriorModel, n: int, seed: int, num_steps: int = 50,
             eta: float = 0.0, method: str = "ddim") -> HypothesisSet:
    """Unconditional generation: every condition token masked."""
    tokens = model.encoder.assemble_tokens(ConditionBundle())
    cfg = SamplerConfig(num_steps=num_steps, eta=eta, guidance_scale=0.0,
                        hypotheses=n, seed=seed, method=method)
    meshes, _ = _run_sampler(model, tokens, cfg, None)
    return HypothesisSet(meshes=meshes, seed=seed, sampler=cfg)


def inpaint_mesh(model: PriorModel, partial_vertices: np.ndarray,
                 vertex_mask: np.ndarray, n: int, scale: float, seed: int,
                 num_steps: int = 50, eta: float = 0.0,
                 hard_replace: bool = False) -> HypothesisSet:
    """Complete a partial mesh: unconditional sampling with a vertex-mask
    guidance target on the given part.

    ``hard_replace`` additionally overwrites the given vertices after each
    step (off by default; the soft guidance alone is the documented path).
    """
    vertex_mask = np.asarray(vertex_mask, dtype=bool)
    if vertex_mask.shape != (model.vertex_count,):
        raise InputError(f"vertex mask must be ({model.vertex_count},)")
    if vertex_mask.all() or not vertex_mask.any():
        raise TaskError("vertex mask must mark at least one given and one "
                        "missing vertex")
    spec = GuidanceSpec(kind="vertex_mask",
                        target=np.asarray(partial_vertices)[vertex_mask],
                        scale=scale, vertex_mask=vertex_mask)
    tokens = model.encoder.assemble_tokens(ConditionBundle())
    cfg = SamplerConfig(num_steps=num_steps, eta=eta, guidance_scale=scale,
                        hypotheses=n, seed=seed)
    meshes, traces = _run_sampler(model, tokens, cfg, spec)
    if hard_replace:
        meshes[:, vertex_mask] = np.asarray(partial_vertices)[vertex_mask]
    given_err = np.linalg.norm(
        meshes[:, vertex_mask] - np.asarray(partial_vertices)[None, vertex_mask],
        axis=2).mean(axis=1)
    return HypothesisSet(meshes=meshes, seed=seed, sampler=cfg,
                         residual_traces=traces,
                         extras={"given_part_error_mm": given_err.tolist()})


def inpaint_skeleton(model: PriorModel, partial_joints3d: np.ndarray,
                     joint_mask: np.ndarray, n: int, scale: float, seed: int,
                     num_steps: int = 50, eta: float = 0.0) -> HypothesisSet:
    """Complete a hand from a partial 3D skeleton: conditions on the valid
    joints and guides the regressed joints toward them."""
    joint_mask = np.asarray(joint_mask, dtype=bool)
    if joint_mask.shape != (21,):
        raise InputError("joint mask must be (21,)")
    if not joint_mask.any():
        raise TaskError("need at least one given joint")
    joints = np.asarray(partial_joints3d, dtype=np.float64)
    bundle = ConditionBundle(skel3d=joints,
                             skel3d_validity=joint_mask.astype(np.float64))
    tokens = model.encoder.assemble_tokens(bundle)
    spec = GuidanceSpec(kind="masked_joint_regression",
                        target=joints[joint_mask], scale=scale,
                        joint_mask=joint_mask)
    cfg = SamplerConfig(num_steps=num_steps, eta=eta, guidance_scale=scale,
                        hypotheses=n, seed=seed)
    meshes, traces = _run_sampler(model, tokens, cfg, spec)
    reg_err = np.stack([
        np.linalg.norm(regress_joints(m, model.regressor)[joint_mask]
                       - joints[joint_mask], axis=1).mean()
        for m in meshes])
    return HypothesisSet(meshes=meshes, seed=seed, sampler=cfg,
                         residual_traces=traces,
                         extras={"given_joint_error_mm": reg_err.tolist()})


def reconstruct(model: PriorModel, image: np.ndarray, n: int, seed: int,
                num_steps: int = 10, eta: float = 0.0,
                skel2d: np.ndarray | None = None,
                skel2d_confidence: np.ndarray | None = None,
                camera: Camera | None = None,
                guidance_scale: float = 0.0) -> HypothesisSet:
    """Image-conditional reconstruction; n hypotheses from n noises.

    Optionally adds a 2D-skeleton condition and, when ``guidance_scale``
    is positive, the projected-joint guidance (requires the camera).
    """
    bundle = ConditionBundle(image=image, skel2d=skel2d,
                             skel2d_confidence=skel2d_confidence)
    tokens = model.encoder.assemble_tokens(bundle)
    spec = None
    if guidance_scale > 0:
        if skel2d is None or camera is None:
            raise TaskError("projected-joint guidance needs skel2d and camera")
        conf = np.ones(21) if skel2d_confidence is None else skel2d_confidence
        mask = conf >= CONFIDENCE_THRESHOLD
        spec = GuidanceSpec(kind="projected_joints", target=skel2d[mask],
                            scale=guidance_scale, joint_mask=mask, camera=camera)
    cfg = SamplerConfig(num_steps=num_steps, eta=eta,
                        guidance_scale=guidance_scale, hypotheses=n, seed=seed)
    meshes, traces = _run_sampler(model, tokens, cfg, spec)
    return HypothesisSet(meshes=meshes, seed=seed, sampler=cfg,
                         residual_traces=traces)


def fit2d(model: PriorModel, joints2d: np.ndarray, confidence: np.ndarray,
          camera: Camera, n: int, scale: float, seed: int,
          image: np.ndarray | None = None, num_steps: int = 10,
          eta: float = 0.0) -> HypothesisSet:
    """Fit the prior to detected 2D joints: skeleton-conditional sampling
    guided by the confident joints' reprojection residual."""
    joints2d = np.asarray(joints2d, dtype=np.float64)
    confidence = np.asarray(confidence, dtype=np.float64)
    mask = confidence >= CONFIDENCE_THRESHOLD
    if mask.sum() < MIN_CONFIDENT_JOINTS:
        raise TaskError(
            f"need >= {MIN_CONFIDENT_JOINTS} joints with confidence >= "
            f"{CONFIDENCE_THRESHOLD}, got {int(mask.sum())}")
    bundle = ConditionBundle(image=image, skel2d=joints2d,
                             skel2d_confidence=confidence)
    tokens = model.encoder.assemble_tokens(bundle)
    spec = None
    if scale > 0:
        spec = GuidanceSpec(kind="projected_joints", target=joints2d[mask],
                            scale=scale, joint_mask=mask, camera=camera)
    cfg = SamplerConfig(num_steps=num_steps, eta=eta, guidance_scale=scale,
                        hypotheses=n, seed=seed)
    meshes, traces = _run_sampler(model, tokens, cfg, spec)
    res = np.stack([
        np.linalg.norm(project(regress_joints(m, model.regressor), camera)[mask]
                       - joints2d[mask], axis=1).mean()
        for m in meshes])
    return HypothesisSet(meshes=meshes, seed=seed, sampler=cfg,
                         residual_traces=traces,
                         extras={"joint2d_residual_px": res.tolist()})


def fit2d_descent_baseline(rig: HandRig, joints2d: np.ndarray,
                           confidence: np.ndarray, camera: Camera,
                           iters: int = 400, step: float = 0.05) -> PoseSample:
    """Plain gradient-descent joint-angle fitter on the synthetic rig.

    An optimization baseline independent of the learned prior (analogous
    in role to classical 2D-skeleton fitting); not part of the diffusion
    pipeline.
    """
    from .rig import project_jacobian

    mask = np.asarray(confidence) >= CONFIDENCE_THRESHOLD
    if mask.sum() < MIN_CONFIDENT_JOINTS:
        raise TaskError("need >= 4 confident joints")
    target = np.asarray(joints2d, dtype=np.float64)[mask]

    angles = np.zeros(rig.n_dofs)
    translation = np.array([0.0, 0.0, 420.0]) - rig.rest_joints[0]
    limits = rig.dof_limits()
    mom_ang = np.zeros_like(angles)
    mom_tr = np.zeros_like(translation)
    for _ in range(iters):
        pose = PoseSample(joint_angles=angles, global_translation=translation)
        joints = posed_joints(rig, pose, validate=False)
        uv = project(joints, camera)
        jp = project_jacobian(joints, camera)
        r = uv[mask] - target  # (M, 2)
        jj = _joint_jacobian(rig, pose)  # (21, 3, n_dofs)
        g_ang = np.einsum("ma,mak->k", r,
                          np.einsum("mab,mbk->mak", jp[mask], jj[mask]))
        g_tr = np.einsum("ma,mab->b", r, jp[mask])
        mom_ang = 0.9 * mom_ang + g_ang
        mom_tr = 0.9 * mom_tr + g_tr
        angles = np.clip(angles - step * 1e-4 * mom_ang,
                         limits[:, 0], limits[:, 1])
        translation = translation - step * 1e-2 * mom_tr
    return PoseSample(joint_angles=angles, global_translation=translation)


def _joint_jacobian(rig: HandRig, pose: PoseSample) -> np.ndarray:
    """d(posed joints)/d(joint angles) via the geometric rule."""
    from .rig.pose import (_axis_rotation, _dofs_by_joint, forward_kinematics)

    by_joint = _dofs_by_joint(rig)
    world_pos, world_rot, _ = forward_kinematics(rig, pose)
    axes = np.zeros((rig.n_dofs, 3))
    pivots = np.zeros((rig.n_dofs, 3))
    for j in range(21):
        p = rig.parents[j]
        prefix = np.eye(3) if p < 0 else world_rot[p]
        for k in by_joint[j]:
            d = rig.dofs[k]
            axes[k] = prefix @ d.axis
            pivots[k] = world_pos[j]
            prefix = prefix @ _axis_rotation(d.axis, pose.joint_angles[k])
    jac = np.zeros((21, 3, rig.n_dofs))
    for j in range(21):
        a = j
        while a >= 0:
            for k in by_joint[a]:
                jac[j, :, k] = np.cross(axes[k], world_pos[j] - pivots[k])
            a = rig.parents[a]
    rot = pose.scale * pose.global_rotation
    return np.einsum("ab,jbk->jak", rot, jac)
