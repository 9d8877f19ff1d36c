"""Paired (mesh, skeleton, image) record generation and on-disk layout.

Layout of a dataset directory:
  manifest.json   versioned; seed, counts, rig fingerprint, config, splits
  regressor.npz   fitted joint regression matrix
  records/NNNNNN.npz   one record per sample, little-endian float32 arrays

A configurable fraction of records is pose-only (no image channel),
mirroring training corpora that carry skeleton annotations only.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from ..errors import InputError, StorageError
from ..mesh import JointRegressor, regress_joints
from .camera import Camera, project
from .fit_regressor import derive_joint_regressor
from .pose import PoseSample, pose_hand, posed_joints, sample_pose
from .render import joint_visibility, render
from .template import HandRig, RigConfig, build_template

MANIFEST_VERSION = 1
RECORD_VERSION = 1


@dataclass(frozen=True)
class PlacementConfig:
    center: tuple[float, float, float] = (0.0, 0.0, 420.0)  # mm, camera frame
    translation_jitter: float = 30.0                        # mm, uniform cube
    scale_range: tuple[float, float] = (0.95, 1.05)
    rotation: str = "uniform"        # "uniform" | "limited" | "none"
    rotation_limit: float = 1.0      # radians, for the "limited" mode


@dataclass(frozen=True)
class DatasetConfig:
    rig: RigConfig = field(default_factory=RigConfig)
    image_size: int = 64
    focal: float = 90.0
    placement: PlacementConfig = field(default_factory=PlacementConfig)
    pose_only_fraction: float = 0.2
    regressor_poses: int = 200


@dataclass(frozen=True)
class HandSample:
    vertices: np.ndarray        # (V, 3) mm
    joints3d: np.ndarray        # (21, 3) mm
    joints2d: np.ndarray        # (21, 2) px
    joint_confidence: np.ndarray  # (21,) in [0, 1]
    camera: Camera
    pose: PoseSample
    image: np.ndarray | None = None  # (H, W, 2) or None for pose-only records


def default_camera(config: DatasetConfig) -> Camera:
    s = config.image_size
    return Camera(focal=(config.focal, config.focal),
                  principal=(s / 2.0, s / 2.0), image_size=(s, s))


def make_sample(rig: HandRig, config: DatasetConfig, camera: Camera,
                rng: np.random.Generator, with_image: bool) -> HandSample:
    base = sample_pose(rng, rig, rotation=config.placement.rotation,
                       rotation_limit=config.placement.rotation_limit,
                       scale_range=config.placement.scale_range)
    jitter = rng.uniform(-config.placement.translation_jitter,
                         config.placement.translation_jitter, size=3)
    center = np.asarray(config.placement.center)
    pose = dataclasses.replace(
        base, global_translation=center - rig.rest_joints[0] + jitter)
    vertices = pose_hand(rig, pose)
    joints3d = posed_joints(rig, pose)
    joints2d = project(joints3d, camera)
    if with_image:
        image, depth = render(vertices, rig.topology, camera,
                              return_depth_buffer=True)
        conf = joint_visibility(joints3d, depth, camera)
    else:
        image = None
        conf = np.ones(joints3d.shape[0])
    return HandSample(vertices=vertices, joints3d=joints3d, joints2d=joints2d,
                      joint_confidence=conf, camera=camera, pose=pose, image=image)


def _record_arrays(sample: HandSample) -> dict:
    arrays = {
        "version": np.array([RECORD_VERSION], dtype="<i4"),
        "vertices": sample.vertices.astype("<f4"),
        "joints3d": sample.joints3d.astype("<f4"),
        "joints2d": sample.joints2d.astype("<f4"),
        "joint_confidence": sample.joint_confidence.astype("<f4"),
        "camera_focal": np.asarray(sample.camera.focal, dtype="<f4"),
        "camera_principal": np.asarray(sample.camera.principal, dtype="<f4"),
        "camera_image_size": np.asarray(sample.camera.image_size, dtype="<i4"),
        "camera_rotation": sample.camera.rotation.astype("<f4"),
        "camera_translation": sample.camera.translation.astype("<f4"),
        "pose_angles": sample.pose.joint_angles.astype("<f4"),
        "pose_rotation": sample.pose.global_rotation.astype("<f4"),
        "pose_translation": sample.pose.global_translation.astype("<f4"),
        "pose_scale": np.array([sample.pose.scale], dtype="<f4"),
    }
    if sample.image is not None:
        arrays["image"] = sample.image.astype("<f4")
    return arrays


def load_record(path: Path) -> HandSample:
    with np.load(path) as data:
        camera = Camera(focal=tuple(data["camera_focal"].astype(float)),
                        principal=tuple(data["camera_principal"].astype(float)),
                        image_size=tuple(int(x) for x in data["camera_image_size"]),
                        rotation=data["camera_rotation"].astype(np.float64),
                        translation=data["camera_translation"].astype(np.float64))
        pose = PoseSample(joint_angles=data["pose_angles"].astype(np.float64),
                          global_rotation=data["pose_rotation"].astype(np.float64),
                          global_translation=data["pose_translation"].astype(np.float64),
                          scale=float(data["pose_scale"][0]))
        image = data["image"].astype(np.float32) if "image" in data else None
        return HandSample(vertices=data["vertices"].astype(np.float64),
                          joints3d=data["joints3d"].astype(np.float64),
                          joints2d=data["joints2d"].astype(np.float64),
                          joint_confidence=data["joint_confidence"].astype(np.float64),
                          camera=camera, pose=pose, image=image)


def _config_dict(config: DatasetConfig) -> dict:
    def convert(obj):
        if dataclasses.is_dataclass(obj):
            return {k: convert(v) for k, v in dataclasses.asdict(obj).items()}
        if isinstance(obj, dict):
            return {k: convert(v) for k, v in obj.items()}
        if isinstance(obj, (tuple, list)):
            return [convert(v) for v in obj]
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        return obj
    return convert(config)


def generate_dataset(n: int, seed: int, split_ratios: tuple[float, float, float],
                     out_dir, config: DatasetConfig | None = None,
                     rig: HandRig | None = None) -> dict:
    """Write ``n`` records plus manifest and fitted regressor; returns the
    manifest. Pure function of (n, seed, rig, config): rerunning yields a
    byte-identical manifest and identical records.
    """
    if n < 1:
        raise InputError(f"n must be >= 1, got {n}")
    if abs(sum(split_ratios) - 1.0) > 1e-9:
        raise InputError(f"split ratios must sum to 1, got {split_ratios}")
    config = config or DatasetConfig()
    rig = rig or build_template(config.rig)
    out = Path(out_dir)
    try:
        (out / "records").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise StorageError(f"cannot create dataset directory {out}: {exc}") from exc

    reg_rng = np.random.default_rng(np.random.SeedSequence((seed, 0xFEED)))
    regressor = derive_joint_regressor(rig, config.regressor_poses, reg_rng)
    sp.save_npz(out / "regressor.npz", regressor.weights.astype("<f8"))

    camera = default_camera(config)
    split_rng = np.random.default_rng(np.random.SeedSequence((seed, 0x51DE)))
    order = split_rng.permutation(n)
    n_train = int(round(split_ratios[0] * n))
    n_val = int(round(split_ratios[1] * n))
    splits = {"train": sorted(order[:n_train].tolist()),
              "val": sorted(order[n_train:n_train + n_val].tolist()),
              "test": sorted(order[n_train + n_val:].tolist())}

    names = []
    for i in range(n):
        rng = np.random.default_rng(np.random.SeedSequence((seed, 1, i)))
        with_image = bool(rng.uniform() >= config.pose_only_fraction)
        sample = make_sample(rig, config, camera, rng, with_image)
        name = f"{i:06d}.npz"
        path = out / "records" / name
        try:
            with open(path, "wb") as fh:
                np.savez(fh, **_record_arrays(sample))
        except OSError as exc:
            raise StorageError(f"cannot write record {path}: {exc}") from exc
        names.append(name)

    manifest = {
        "version": MANIFEST_VERSION,
        "n": n,
        "seed": seed,
        "split_ratios": list(split_ratios),
        "splits": splits,
        "records": names,
        "rig_fingerprint": rig.fingerprint(),
        "config": _config_dict(config),
        "regressor_sha256": hashlib.sha256(
            regressor.weights.toarray().astype("<f8").tobytes()).hexdigest(),
    }
    payload = json.dumps(manifest, sort_keys=True, indent=1).encode()
    try:
        (out / "manifest.json").write_bytes(payload)
    except OSError as exc:
        raise StorageError(f"cannot write manifest: {exc}") from exc
    return manifest


def load_manifest(dataset_dir) -> dict:
    path = Path(dataset_dir) / "manifest.json"
    if not path.exists():
        raise StorageError(f"no manifest at {path}")
    return json.loads(path.read_text())


def load_regressor(dataset_dir) -> JointRegressor:
    mat = sp.load_npz(Path(dataset_dir) / "regressor.npz").tocsr()
    return JointRegressor(weights=mat)


def load_split(dataset_dir, split: str) -> list[HandSample]:
    manifest = load_manifest(dataset_dir)
    if split not in manifest["splits"]:
        raise InputError(f"unknown split {split!r}")
    base = Path(dataset_dir) / "records"
    return [load_record(base / manifest["records"][i])
            for i in manifest["splits"][split]]


def check_sample_invariants(sample: HandSample, regressor: JointRegressor,
                            joint_tol_mm: float = 1.0,
                            pixel_tol: float = 0.5) -> None:
    """Assert the record-level contracts; raises InputError on violation."""
    reg_joints = regress_joints(sample.vertices, regressor)
    err = np.linalg.norm(reg_joints - sample.joints3d, axis=1).max()
    if err > joint_tol_mm:
        raise InputError(f"regressed joints deviate {err:.3f} mm from record")
    reproj = project(sample.joints3d, sample.camera)
    perr = np.linalg.norm(reproj - sample.joints2d, axis=1).max()
    if perr > pixel_tol:
        raise InputError(f"2D joints deviate {perr:.3f} px from projection")
