"""Procedural hand rig, posing, camera, rendering and dataset generation."""

from .camera import Camera, fraction_in_frame, project, project_jacobian
from .dataset import (DatasetConfig, HandSample, PlacementConfig,
                      check_sample_invariants, default_camera, generate_dataset,
                      load_manifest, load_record, load_regressor, load_split,
                      make_sample)
from .fit_regressor import derive_joint_regressor, fit_regressor_from_pairs
from .pose import (PoseSample, forward_kinematics, pose_hand, pose_jacobian,
                   posed_joints, sample_pose, validate_pose)
from .render import joint_visibility, render
from .template import (FINGERS, TOY_RIG, DoF, FingerSpec, HandRig, RigConfig,
                       build_template, scale_tessellation)

__all__ = [
    "Camera", "project", "project_jacobian", "fraction_in_frame",
    "DatasetConfig", "PlacementConfig", "HandSample", "generate_dataset",
    "load_manifest", "load_record", "load_regressor", "load_split",
    "make_sample", "default_camera", "check_sample_invariants",
    "derive_joint_regressor", "fit_regressor_from_pairs",
    "PoseSample", "pose_hand", "posed_joints", "pose_jacobian", "sample_pose",
    "forward_kinematics", "validate_pose", "joint_visibility", "render",
    "HandRig", "RigConfig", "FingerSpec", "DoF", "build_template",
    "scale_tessellation", "FINGERS", "TOY_RIG",
]
