"""Deterministic z-buffer rasterizer producing the 2-channel observation:
binary silhouette and normalized inverse depth."""

from __future__ import annotations

import numpy as np

from ..errors import VisibilityError
from ..mesh import MeshTopology
from .camera import MIN_DEPTH, Camera, fraction_in_frame

# fixed inverse-depth normalization window (mm); keeps the depth channel
# comparable across records
DEPTH_NEAR = 280.0
DEPTH_FAR = 560.0

MIN_VISIBLE_FRACTION = 0.5
JOINT_OCCLUSION_TOLERANCE = 14.0  # mm of flesh allowed in front of a visible joint


def render(vertices: np.ndarray, topology: MeshTopology, camera: Camera,
           return_depth_buffer: bool = False):
    """Rasterize a mesh into (H, W, 2): silhouette and inverse depth.

    Depth is interpolated linearly in screen space per triangle, which is
    exact for the silhouette and a good approximation for these small
    triangles. Raises VisibilityError when less than half of the vertices
    project inside the frame.
    """
    if fraction_in_frame(vertices, camera) < MIN_VISIBLE_FRACTION:
        raise VisibilityError("camera sees less than half of the hand")
    pc = camera.to_camera_frame(vertices)
    z = pc[:, 2]
    fx, fy = camera.focal
    cx, cy = camera.principal
    w, h = camera.image_size
    uv = np.stack([fx * pc[:, 0] / np.maximum(z, MIN_DEPTH) + cx,
                   fy * pc[:, 1] / np.maximum(z, MIN_DEPTH) + cy], axis=1)

    depth = np.full((h, w), np.inf)
    for face in topology.faces:
        if np.any(z[face] <= MIN_DEPTH):
            continue
        tri = uv[face]
        tz = z[face]
        x0 = max(int(np.floor(tri[:, 0].min())), 0)
        x1 = min(int(np.ceil(tri[:, 0].max())) + 1, w)
        y0 = max(int(np.floor(tri[:, 1].min())), 0)
        y1 = min(int(np.ceil(tri[:, 1].max())) + 1, h)
        if x0 >= x1 or y0 >= y1:
            continue
        xs = np.arange(x0, x1) + 0.5
        ys = np.arange(y0, y1) + 0.5
        gx, gy = np.meshgrid(xs, ys)
        a, b, c = tri
        det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
        if abs(det) < 1e-12:
            continue
        l1 = ((gx - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (gy - a[1])) / det
        l2 = ((b[0] - a[0]) * (gy - a[1]) - (gx - a[0]) * (b[1] - a[1])) / det
        l0 = 1.0 - l1 - l2
        inside = (l0 >= 0) & (l1 >= 0) & (l2 >= 0)
        if not inside.any():
            continue
        zi = l0 * tz[0] + l1 * tz[1] + l2 * tz[2]
        patch = depth[y0:y1, x0:x1]
        better = inside & (zi < patch)
        patch[better] = zi[better]

    covered = np.isfinite(depth)
    image = np.zeros((h, w, 2), dtype=np.float32)
    image[:, :, 0] = covered.astype(np.float32)
    inv = np.zeros_like(depth)
    inv[covered] = 1.0 / depth[covered]
    lo, hi = 1.0 / DEPTH_FAR, 1.0 / DEPTH_NEAR
    image[:, :, 1] = np.where(covered, np.clip((inv - lo) / (hi - lo), 0.0, 1.0),
                              0.0).astype(np.float32)
    if return_depth_buffer:
        return image, depth
    return image


def joint_visibility(joints3d: np.ndarray, depth_buffer: np.ndarray,
                     camera: Camera) -> np.ndarray:
    """Per-joint confidence: 1.0 where the joint is not self-occluded.

    A joint counts as visible when the rasterized surface at its pixel is
    no more than JOINT_OCCLUSION_TOLERANCE mm in front of it (the joint
    itself is inside the flesh). Joints outside the frame get 0.
    """
    pc = camera.to_camera_frame(joints3d)
    z = pc[:, 2]
    fx, fy = camera.focal
    cx, cy = camera.principal
    h, w = depth_buffer.shape
    conf = np.zeros(joints3d.shape[0], dtype=np.float64)
    for i in range(joints3d.shape[0]):
        if z[i] <= MIN_DEPTH:
            continue
        u = int(np.floor(fx * pc[i, 0] / z[i] + cx))
        v = int(np.floor(fy * pc[i, 1] / z[i] + cy))
        if not (0 <= u < w and 0 <= v < h):
            continue
        surface = depth_buffer[v, u]
        if np.isfinite(surface) and surface >= z[i] - JOINT_OCCLUSION_TOLERANCE:
            conf[i] = 1.0
    return conf
