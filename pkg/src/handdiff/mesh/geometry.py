"""Per-face and per-edge geometry of a mesh embedding (coordinates in mm)."""

from __future__ import annotations

import numpy as np

from ..errors import InputError
from .topology import MeshTopology

DEGENERATE_AREA = 1e-12  # mm^2


def face_normals(vertices: np.ndarray, topology: MeshTopology,
                 return_degenerate: bool = False):
    """Unit face normals following the counter-clockwise winding.

    Faces with area below ``DEGENERATE_AREA`` get a zero normal and their
    indices are reported when ``return_degenerate`` is set.
    """
    v = _check_vertices(vertices, topology)
    f = topology.faces
    cross = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    norms = np.linalg.norm(cross, axis=1)
    degenerate = norms <= 2.0 * DEGENERATE_AREA  # area = |cross| / 2
    safe = np.where(degenerate, 1.0, norms)
    normals = cross / safe[:, None]
    normals[degenerate] = 0.0
    if return_degenerate:
        return normals, np.nonzero(degenerate)[0]
    return normals


def edge_vectors(vertices: np.ndarray, topology: MeshTopology) -> np.ndarray:
    """Per-edge displacement vectors, ordered as ``topology.edges``."""
    v = _check_vertices(vertices, topology)
    e = topology.edges
    return v[e[:, 1]] - v[e[:, 0]]


def edge_lengths(vertices: np.ndarray, topology: MeshTopology) -> np.ndarray:
    """Euclidean edge lengths, ordered as ``topology.edges``."""
    return np.linalg.norm(edge_vectors(vertices, topology), axis=1)


def _check_vertices(vertices, topology: MeshTopology) -> np.ndarray:
    v = np.asarray(vertices, dtype=np.float64)
    if v.ndim != 2 or v.shape != (topology.vertex_count, 3):
        raise InputError(
            f"vertices must have shape ({topology.vertex_count}, 3), got {v.shape}"
        )
    return v
