"""Pinhole camera: projection, its Jacobian, and frame checks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError, ProjectionError

MIN_DEPTH = 1.0  # mm


@dataclass(frozen=True)
class Camera:
    focal: tuple[float, float]            # (fx, fy) px
    principal: tuple[float, float]        # (cx, cy) px
    image_size: tuple[int, int]           # (width, height) px
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))  # mm

    def __post_init__(self):
        if self.focal[0] <= 0 or self.focal[1] <= 0:
            raise ConfigurationError(f"focal must be positive, got {self.focal}")
        w, h = self.image_size
        cx, cy = self.principal
        if not (0 <= cx <= w and 0 <= cy <= h):
            raise ConfigurationError(
                f"principal point {self.principal} outside image {self.image_size}")

    def to_camera_frame(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.rotation.T \
            + self.translation


def project(points: np.ndarray, camera: Camera) -> np.ndarray:
    """Pinhole projection of (N, 3) mm points to (N, 2) px.

    Raises ProjectionError when any point sits at or behind the camera
    plane (depth <= 1 mm).
    """
    pc = camera.to_camera_frame(points)
    z = pc[:, 2]
    if np.any(z <= MIN_DEPTH):
        raise ProjectionError(
            f"{int((z <= MIN_DEPTH).sum())} point(s) at or behind the camera plane")
    fx, fy = camera.focal
    cx, cy = camera.principal
    return np.stack([fx * pc[:, 0] / z + cx, fy * pc[:, 1] / z + cy], axis=1)


def project_jacobian(points: np.ndarray, camera: Camera) -> np.ndarray:
    """Analytic d(pixel)/d(point), shape (N, 2, 3)."""
    pc = camera.to_camera_frame(points)
    z = pc[:, 2]
    if np.any(z <= MIN_DEPTH):
        raise ProjectionError("point at or behind the camera plane")
    fx, fy = camera.focal
    n = pc.shape[0]
    jac_cam = np.zeros((n, 2, 3))
    jac_cam[:, 0, 0] = fx / z
    jac_cam[:, 0, 2] = -fx * pc[:, 0] / z ** 2
    jac_cam[:, 1, 1] = fy / z
    jac_cam[:, 1, 2] = -fy * pc[:, 1] / z ** 2
    return jac_cam @ camera.rotation


def fraction_in_frame(points: np.ndarray, camera: Camera) -> float:
    """Fraction of points projecting inside the image with positive depth."""
    pc = camera.to_camera_frame(points)
    z = pc[:, 2]
    ok = z > MIN_DEPTH
    if not ok.any():
        return 0.0
    fx, fy = camera.focal
    cx, cy = camera.principal
    u = fx * pc[ok, 0] / z[ok] + cx
    v = fy * pc[ok, 1] / z[ok] + cy
    w, h = camera.image_size
    inside = (u >= 0) & (u < w) & (v >= 0) & (v < h)
    return float(inside.sum()) / points.shape[0]
