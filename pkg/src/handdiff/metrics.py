"""Evaluation metrics: pairwise diversity (APD), self-intersection rate (SI),
Procrustes-aligned joint/vertex errors, and hypothesis aggregation.

The SI triangle-triangle predicate below is the normative reference: the
native kernel replays the same float64 operations so intersecting-face
sets match exactly.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .mesh import (JointRegressor, MeshTopology, procrustes_align,
                   regress_joints)

SI_EPSILON = 1e-9  # mm


# ---------------------------------------------------------------------------
# diversity
# ---------------------------------------------------------------------------

def pairwise_mean_distances(meshes: np.ndarray) -> np.ndarray:
    """Condensed matrix of mean per-vertex distances between mesh pairs.

    ``meshes``: (M, V, 3). Entry order matches
    ``itertools.combinations(range(M), 2)``.
    """
    m = np.asarray(meshes, dtype=np.float64)
    if m.ndim != 3 or m.shape[0] < 2:
        raise InputError(f"need a (M>=2, V, 3) batch, got {m.shape}")
    n = m.shape[0]
    out = []
    for i in range(n - 1):
        d = np.linalg.norm(m[i + 1:] - m[i][None], axis=2).mean(axis=1)
        out.append(d)
    return np.concatenate(out)


def apd(meshes) -> float:
    """Average Pairwise Distance (mm): mean over unordered mesh pairs of the
    mean per-vertex Euclidean distance."""
    return float(pairwise_mean_distances(np.asarray(meshes)).mean())


# ---------------------------------------------------------------------------
# self-intersection
# ---------------------------------------------------------------------------

def _orient2d(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def _segments_cross(p0, p1, q0, q1):
    d1 = _orient2d(p0[0], p0[1], p1[0], p1[1], q0[0], q0[1])
    d2 = _orient2d(p0[0], p0[1], p1[0], p1[1], q1[0], q1[1])
    d3 = _orient2d(q0[0], q0[1], q1[0], q1[1], p0[0], p0[1])
    d4 = _orient2d(q0[0], q0[1], q1[0], q1[1], p1[0], p1[1])
    return d1 * d2 <= 0.0 and d3 * d4 <= 0.0


def _point_in_tri2d(p, a, b, c):
    d1 = _orient2d(a[0], a[1], b[0], b[1], p[0], p[1])
    d2 = _orient2d(b[0], b[1], c[0], c[1], p[0], p[1])
    d3 = _orient2d(c[0], c[1], a[0], a[1], p[0], p[1])
    neg = (d1 < 0.0) or (d2 < 0.0) or (d3 < 0.0)
    pos = (d1 > 0.0) or (d2 > 0.0) or (d3 > 0.0)
    return not (neg and pos)


def _coplanar_overlap(p, q, normal):
    axis = int(np.argmax(np.abs(normal)))
    keep = [k for k in range(3) if k != axis]
    p2 = p[:, keep]
    q2 = q[:, keep]
    for i in range(3):
        for j in range(3):
            if _segments_cross(p2[i], p2[(i + 1) % 3], q2[j], q2[(j + 1) % 3]):
                return True
    if _point_in_tri2d(p2[0], q2[0], q2[1], q2[2]):
        return True
    if _point_in_tri2d(q2[0], p2[0], p2[1], p2[2]):
        return True
    return False


def tri_tri_intersect(p: np.ndarray, q: np.ndarray,
                      eps: float = SI_EPSILON) -> bool:
    """Interval-based triangle intersection test (float64, inclusive).

    Signed plane distances within ``eps * |plane normal|`` snap to zero;
    touching configurations count as intersecting. The native kernel
    mirrors this exact operation sequence.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    n2 = np.cross(q[1] - q[0], q[2] - q[0])
    norm2 = float(np.linalg.norm(n2))
    if norm2 == 0.0:
        return False
    dp = (p - q[0]) @ n2
    dp[np.abs(dp) <= eps * norm2] = 0.0
    if (dp > 0).all() or (dp < 0).all():
        return False

    n1 = np.cross(p[1] - p[0], p[2] - p[0])
    norm1 = float(np.linalg.norm(n1))
    if norm1 == 0.0:
        return False
    dq = (q - p[0]) @ n1
    dq[np.abs(dq) <= eps * norm1] = 0.0
    if (dq > 0).all() or (dq < 0).all():
        return False

    if (dp == 0).all():
        return _coplanar_overlap(p, q, n2)

    line = np.cross(n1, n2)
    axis = int(np.argmax(np.abs(line)))

    def interval(tri, dists):
        ts = []
        for i in range(3):
            if dists[i] == 0.0:
                ts.append(float(tri[i, axis]))
        for i, j in ((0, 1), (1, 2), (2, 0)):
            if dists[i] * dists[j] < 0.0:
                t = tri[i, axis] + (tri[j, axis] - tri[i, axis]) \
                    * dists[i] / (dists[i] - dists[j])
                ts.append(float(t))
        return min(ts), max(ts)

    lo1, hi1 = interval(p, dp)
    lo2, hi2 = interval(q, dq)
    return lo1 <= hi2 and lo2 <= hi1


def degenerate_faces(vertices: np.ndarray, faces: np.ndarray,
                     area_eps: float = 1e-12) -> np.ndarray:
    v = np.asarray(vertices, dtype=np.float64)
    cross = np.cross(v[faces[:, 1]] - v[faces[:, 0]], v[faces[:, 2]] - v[faces[:, 0]])
    return np.nonzero(np.linalg.norm(cross, axis=1) <= 2.0 * area_eps)[0]


def self_intersections(vertices: np.ndarray, topology: MeshTopology,
                       eps: float = SI_EPSILON) -> np.ndarray:
    """Sorted indices of faces intersecting at least one non-adjacent face.

    Faces sharing any vertex are skipped; degenerate faces are excluded.
    O(F^2) with an eps-inflated bounding-box reject that cannot change the
    result set.
    """
    v = np.asarray(vertices, dtype=np.float64)
    faces = topology.faces
    bad = set(degenerate_faces(v, faces).tolist())
    tris = v[faces]  # (F, 3, 3)
    lo = tris.min(axis=1) - eps
    hi = tris.max(axis=1) + eps
    n = faces.shape[0]
    hit = np.zeros(n, dtype=bool)
    face_sets = [set(f.tolist()) for f in faces]
    for i in range(n - 1):
        if i in bad:
            continue
        overlap = np.nonzero(
            (lo[i + 1:] <= hi[i]).all(axis=1) & (hi[i + 1:] >= lo[i]).all(axis=1)
        )[0] + i + 1
        for j in overlap:
            j = int(j)
            if j in bad or (hit[i] and hit[j]):
                continue
            if face_sets[i] & face_sets[j]:
                continue
            if tri_tri_intersect(tris[i], tris[j], eps):
                hit[i] = True
                hit[j] = True
    return np.nonzero(hit)[0]


def si(vertices: np.ndarray, topology: MeshTopology,
       eps: float = SI_EPSILON) -> float:
    """Percentage of faces involved in at least one self-intersection."""
    hits = self_intersections(vertices, topology, eps)
    return 100.0 * len(hits) / topology.face_count


# ---------------------------------------------------------------------------
# reconstruction errors
# ---------------------------------------------------------------------------

def pa_error(pred_meshes, gt_mesh: np.ndarray, regressor: JointRegressor,
             mode: str = "similarity"):
    """Procrustes-aligned MPJPE and MPVPE (mm) per hypothesis.

    ``mode`` is "similarity" (scale included, the default protocol) or
    "rigid". Hypotheses with degenerate alignment come back as NaN.
    """
    if mode not in ("similarity", "rigid"):
        raise InputError(f"unknown alignment mode {mode!r}")
    with_scale = mode == "similarity"
    gt = np.asarray(gt_mesh, dtype=np.float64)
    gt_joints = regress_joints(gt, regressor)
    mpjpe, mpvpe = [], []
    for pred in pred_meshes:
        pred = np.asarray(pred, dtype=np.float64)
        if pred.shape != gt.shape:
            raise InputError(f"hypothesis shape {pred.shape} != gt {gt.shape}")
        try:
            aligned_v, _ = procrustes_align(pred, gt, with_scale=with_scale)
            joints = regress_joints(pred, regressor)
            aligned_j, _ = procrustes_align(joints, gt_joints, with_scale=with_scale)
        except InputError:
            mpjpe.append(np.nan)
            mpvpe.append(np.nan)
            continue
        mpvpe.append(float(np.linalg.norm(aligned_v - gt, axis=1).mean()))
        mpjpe.append(float(np.linalg.norm(aligned_j - gt_joints, axis=1).mean()))
    return np.array(mpjpe), np.array(mpvpe)


def min_over_hypotheses(errors) -> float:
    """Minimum error over a hypothesis set (NaN-flagged entries ignored)."""
    e = np.asarray(errors, dtype=np.float64)
    if e.size < 1:
        raise InputError("need at least one hypothesis")
    if np.isnan(e).all():
        return float("nan")
    return float(np.nanmin(e))


# ---------------------------------------------------------------------------
# reporting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EvalReport:
    metric: str
    value: float
    units: str          # "mm" or "percent"
    n: int
    steps: int
    seed: int
    config_hash: str
    extra: dict | None = None

    def __post_init__(self):
        if self.units not in ("mm", "percent"):
            raise InputError(f"units must be mm or percent, got {self.units!r}")
        if not np.isfinite(self.value):
            raise InputError(f"metric value must be finite, got {self.value}")

    def to_json(self) -> str:
        d = dataclasses.asdict(self)
        if d["extra"] is None:
            del d["extra"]
        return json.dumps(d, sort_keys=True)


def report_from_json(line: str) -> EvalReport:
    d = json.loads(line)
    return EvalReport(**d)
