"""Procedural articulated hand: palm tube plus five tapered-cylinder fingers,
welded into one connected mesh, with a 21-joint skeleton and smooth
bone-hat skinning weights.

Geometry conventions: +z points from wrist toward the fingertips, +x toward
the thumb side, +y out of the back of the hand. All lengths in mm.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import ConfigurationError
from ..mesh import (FINGER_JOINTS, JOINT_NAMES, NUM_JOINTS, MeshTopology,
                    build_topology)

FINGERS = ("thumb", "index", "middle", "ring", "pinky")


@dataclass(frozen=True)
class FingerSpec:
    knuckle: tuple[float, float, float]   # MCP position (mm)
    splay_deg: float                      # in-plane tilt of the finger axis
    lengths: tuple[float, float, float]   # proximal, middle, distal bone (mm)
    radius_base: float
    radius_tip: float
    attach_angle_deg: float               # palm-rim angle hosting the weld


@dataclass(frozen=True)
class RigConfig:
    ring_vertices_finger: int = 8
    ring_vertices_palm: int = 14
    stations_per_bone: int = 2            # interior rings between joint rings
    palm_rings: int = 4
    palm_length: float = 80.0
    palm_half_width_wrist: float = 26.0
    palm_half_width_knuckle: float = 40.0
    palm_half_thickness: float = 13.0
    palm_top_fraction: float = 0.83       # palm tube ends short of the knuckles
    wrist_z_fraction: float = 0.29        # wrist joint sits near the palm centroid
    knuckle_inset_fraction: float = 0.16  # knuckle rings behind the MCP
    tip_cap_offsets: tuple[float, float] = (2.5, 4.5)  # cap ring, apex (mm past tip)
    weight_exponent: float = 1.5
    palm_ramp_start: float = 0.4
    palm_ramp_full: float = 0.75
    palm_ramp_max: float = 0.8
    fingers: dict = field(default_factory=lambda: dict(DEFAULT_FINGERS))
    # per-DoF angle ranges (radians)
    wrist_limit: float = 0.45
    mcp_flex_range: tuple[float, float] = (-0.20, 1.35)
    mcp_abd_range: tuple[float, float] = (-0.25, 0.25)
    pip_flex_range: tuple[float, float] = (0.0, 1.55)
    dip_flex_range: tuple[float, float] = (0.0, 1.10)


DEFAULT_FINGERS = {
    "thumb": FingerSpec(knuckle=(46.0, -4.0, 36.0), splay_deg=52.0,
                        lengths=(34.0, 28.0, 24.0), radius_base=7.5,
                        radius_tip=5.5, attach_angle_deg=0.0),
    "index": FingerSpec(knuckle=(26.0, 0.0, 80.0), splay_deg=8.0,
                        lengths=(40.0, 25.0, 22.0), radius_base=7.0,
                        radius_tip=5.0, attach_angle_deg=0.0),
    "middle": FingerSpec(knuckle=(9.0, 0.0, 82.0), splay_deg=0.0,
                         lengths=(45.0, 28.0, 24.0), radius_base=7.2,
                         radius_tip=5.0, attach_angle_deg=0.0),
    "ring": FingerSpec(knuckle=(-9.0, 0.0, 80.0), splay_deg=-7.0,
                       lengths=(42.0, 26.0, 22.0), radius_base=6.8,
                       radius_tip=4.8, attach_angle_deg=0.0),
    "pinky": FingerSpec(knuckle=(-26.0, 0.0, 76.0), splay_deg=-14.0,
                        lengths=(33.0, 20.0, 18.0), radius_base=6.0,
                        radius_tip=4.2, attach_angle_deg=0.0),
}

# desk-scale presets
TOY_RIG = RigConfig(ring_vertices_finger=7, ring_vertices_palm=10,
                    stations_per_bone=1, palm_rings=3)


@dataclass(frozen=True)
class DoF:
    name: str
    joint: int
    axis: np.ndarray  # unit vector, rest frame
    lo: float
    hi: float


@dataclass(frozen=True)
class HandRig:
    template_vertices: np.ndarray   # (V, 3) mm, rest pose
    topology: MeshTopology
    parents: np.ndarray             # (21,) int, parents[0] == -1
    rest_joints: np.ndarray         # (21, 3) mm
    skinning_weights: np.ndarray    # (V, 21), rows sum to 1
    dofs: tuple                     # tuple of DoF, canonical order
    config: RigConfig

    @property
    def vertex_count(self) -> int:
        return int(self.template_vertices.shape[0])

    @property
    def n_dofs(self) -> int:
        return len(self.dofs)

    def dof_limits(self) -> np.ndarray:
        return np.array([[d.lo, d.hi] for d in self.dofs])

    def joint_children(self) -> list:
        children = [[] for _ in range(NUM_JOINTS)]
        for j, p in enumerate(self.parents):
            if p >= 0:
                children[p].append(j)
        return children

    def subtree(self, joint: int) -> list:
        children = self.joint_children()
        out, stack = [], [joint]
        while stack:
            j = stack.pop()
            out.append(j)
            stack.extend(children[j])
        return sorted(out)

    def fingerprint(self) -> str:
        import hashlib
        h = hashlib.sha256()
        h.update(self.template_vertices.astype("<f8").tobytes())
        h.update(self.topology.faces.astype("<i8").tobytes())
        h.update(self.skinning_weights.astype("<f8").tobytes())
        h.update(self.rest_joints.astype("<f8").tobytes())
        return h.hexdigest()[:16]


def _rot_y(deg: float) -> np.ndarray:
    a = np.deg2rad(deg)
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _ring(center, e1, e2, radius_x, radius_y, m):
    phi = 2.0 * np.pi * np.arange(m) / m
    return (center[None, :] + radius_x * np.cos(phi)[:, None] * e1[None, :]
            + radius_y * np.sin(phi)[:, None] * e2[None, :])


def _band_faces(lower, upper):
    m = len(lower)
    faces = []
    for i in range(m):
        j = (i + 1) % m
        faces.append((lower[i], lower[j], upper[j]))
        faces.append((lower[i], upper[j], upper[i]))
    return faces


def _fan_faces(ring, apex, point_up: bool):
    m = len(ring)
    faces = []
    for i in range(m):
        j = (i + 1) % m
        faces.append((ring[i], ring[j], apex) if point_up else (ring[j], ring[i], apex))
    return faces


def _skeleton(config: RigConfig):
    """Joint positions, parents and per-finger frames."""
    joints = np.zeros((NUM_JOINTS, 3))
    parents = np.full(NUM_JOINTS, -1, dtype=np.int64)
    frames = {}
    joints[0] = np.array([0.0, 0.0, config.wrist_z_fraction * config.palm_length])
    for fi, name in enumerate(FINGERS):
        spec = config.fingers[name]
        base = 1 + 4 * fi
        direction = _rot_y(spec.splay_deg) @ np.array([0.0, 0.0, 1.0])
        flex_axis = np.cross(np.array([0.0, 1.0, 0.0]), direction)
        flex_axis /= np.linalg.norm(flex_axis)
        normal = np.cross(direction, flex_axis)
        frames[name] = (direction, flex_axis, normal)
        pos = np.asarray(spec.knuckle, dtype=np.float64)
        joints[base] = pos
        parents[base] = 0
        acc = 0.0
        for k, L in enumerate(spec.lengths):
            acc += L
            joints[base + 1 + k] = pos + acc * direction
            parents[base + 1 + k] = base + k
    return joints, parents, frames


def _dof_table(config: RigConfig, frames) -> tuple:
    dofs = []
    for axis_name, axis in (("x", (1, 0, 0)), ("y", (0, 1, 0)), ("z", (0, 0, 1))):
        dofs.append(DoF(name=f"wrist_{axis_name}", joint=0,
                        axis=np.array(axis, dtype=np.float64),
                        lo=-config.wrist_limit, hi=config.wrist_limit))
    for fi, name in enumerate(FINGERS):
        base = 1 + 4 * fi
        direction, flex_axis, normal = frames[name]
        # abduction is applied before flexion (flexion acts in the abducted frame)
        dofs.append(DoF(name=f"{name}_mcp_abd", joint=base, axis=normal.copy(),
                        lo=config.mcp_abd_range[0], hi=config.mcp_abd_range[1]))
        dofs.append(DoF(name=f"{name}_mcp_flex", joint=base, axis=flex_axis.copy(),
                        lo=config.mcp_flex_range[0], hi=config.mcp_flex_range[1]))
        dofs.append(DoF(name=f"{name}_pip_flex", joint=base + 1, axis=flex_axis.copy(),
                        lo=config.pip_flex_range[0], hi=config.pip_flex_range[1]))
        dofs.append(DoF(name=f"{name}_dip_flex", joint=base + 2, axis=flex_axis.copy(),
                        lo=config.dip_flex_range[0], hi=config.dip_flex_range[1]))
    return tuple(dofs)


def _palm_mesh(config: RigConfig):
    m = config.ring_vertices_palm
    zs = np.linspace(0.04, config.palm_top_fraction, config.palm_rings) \
        * config.palm_length
    widths = np.interp(zs, [0.0, config.palm_length],
                       [config.palm_half_width_wrist, config.palm_half_width_knuckle])
    verts, rings = [], []
    e1 = np.array([1.0, 0.0, 0.0])
    e2 = np.array([0.0, 1.0, 0.0])
    for z, w in zip(zs, widths):
        ring = _ring(np.array([0.0, 0.0, z]), e1, e2, w, config.palm_half_thickness, m)
        rings.append(list(range(len(verts), len(verts) + m)))
        verts.extend(ring)
    base_center = len(verts)
    verts.append(np.array([0.0, 0.0, 0.0]))
    top_center = len(verts)
    verts.append(np.array([0.0, 0.0, zs[-1]]))
    faces = []
    for lower, upper in zip(rings[:-1], rings[1:]):
        faces.extend(_band_faces(lower, upper))
    faces.extend(_fan_faces(rings[0], base_center, point_up=False))
    faces.extend(_fan_faces(rings[-1], top_center, point_up=True))
    return np.array(verts), faces, rings


def _attach_vertex(palm_verts, rig_rings, knuckle, direction, ring_plane):
    """Palm ring vertex hosting the weld cone.

    Prefers the nearest vertex strictly behind the knuckle-ring plane so
    the cone fan cannot fold through the finger tube.
    """
    rim = np.array([i for ring in rig_rings for i in ring])
    behind = (palm_verts[rim] - ring_plane[None, :]) @ direction < -1.0
    pool = rim[behind] if behind.any() else rim
    d = np.linalg.norm(palm_verts[pool] - knuckle[None, :], axis=1)
    return int(pool[np.argmin(d)])


def _finger_mesh(config: RigConfig, spec: FingerSpec, frames, joints, base_joint,
                 vert_offset):
    """Rings along the bone chain; returns vertices, faces, ring stations.

    Station list caries (arc position, ring vertex ids); the first ring is
    the knuckle ring slightly behind the MCP.
    """
    direction, flex_axis, normal = frames
    mcp = joints[base_joint]
    lengths = np.array(spec.lengths)
    total = lengths.sum()
    inset = config.knuckle_inset_fraction * lengths[0]
    stations = [-inset, -0.5 * inset, 0.0]
    acc = 0.0
    interior = config.stations_per_bone
    for L in lengths:
        for k in range(interior):
            stations.append(acc + L * (k + 1) / (interior + 1))
        acc += L
        stations.append(acc)
    cap_ring_s = total + config.tip_cap_offsets[0]
    apex_s = total + config.tip_cap_offsets[1]

    def radius_at(s):
        base = np.interp(np.clip(s, 0.0, total), [0.0, total],
                         [spec.radius_base, spec.radius_tip])
        return base

    verts, ring_ids, ring_s = [], [], []
    m = config.ring_vertices_finger
    for s in stations:
        r = radius_at(s)
        ring = _ring(mcp + s * direction, flex_axis, normal, r, r, m)
        ring_ids.append(list(range(vert_offset + len(verts),
                                   vert_offset + len(verts) + m)))
        ring_s.append(s)
        verts.extend(ring)
    cap = _ring(mcp + cap_ring_s * direction, flex_axis, normal,
                0.55 * spec.radius_tip, 0.55 * spec.radius_tip, m)
    cap_ids = list(range(vert_offset + len(verts), vert_offset + len(verts) + m))
    verts.extend(cap)
    apex_id = vert_offset + len(verts)
    verts.append(mcp + apex_s * direction)

    faces = []
    for lower, upper in zip(ring_ids[:-1], ring_ids[1:]):
        faces.extend(_band_faces(lower, upper))
    faces.extend(_band_faces(ring_ids[-1], cap_ids))
    faces.extend(_fan_faces(cap_ids, apex_id, point_up=True))
    return (np.array(verts), faces, ring_ids, ring_s,
            cap_ids + [apex_id], [cap_ring_s] * m + [apex_s])


def _ramp(u, start, full, top):
    """0 below ``start``, smoothstep saturating at ``top`` from ``full`` on."""
    t = np.clip((u - start) / (full - start), 0.0, 1.0)
    return top * t * t * (3.0 - 2.0 * t)


def _pair_profile(u, q):
    """Partition-of-unity ramp: weight of the far joint at parameter u."""
    u = np.clip(u, 0.0, 1.0)
    a = u ** q
    b = (1.0 - u) ** q
    return a / (a + b)


def build_template(config: RigConfig | None = None) -> HandRig:
    """Construct the deterministic procedural rig from a config.

    Raises ConfigurationError when the tessellation lands outside the
    300..1000 vertex budget.
    """
    config = config or RigConfig()
    joints, parents, frames = _skeleton(config)
    dofs = _dof_table(config, frames)

    palm_verts, palm_faces, palm_rings = _palm_mesh(config)
    all_verts = [palm_verts]
    all_faces = list(palm_faces)
    offset = len(palm_verts)

    q = config.weight_exponent
    V_palm = len(palm_verts)
    weights_parts = []

    finger_station_info = {}
    for fi, name in enumerate(FINGERS):
        spec = config.fingers[name]
        base_joint = 1 + 4 * fi
        fverts, ffaces, ring_ids, ring_s, cap_ids, cap_s = _finger_mesh(
            config, spec, frames[name], joints, base_joint, offset)
        direction = frames[name][0]
        ring_plane = np.asarray(spec.knuckle, dtype=np.float64) \
            - config.knuckle_inset_fraction * spec.lengths[0] * direction
        apex_host = _attach_vertex(palm_verts, palm_rings,
                                   np.asarray(spec.knuckle, dtype=np.float64),
                                   direction, ring_plane)
        all_faces.extend(_fan_faces(ring_ids[0], apex_host, point_up=False))
        all_verts.append(fverts)
        all_faces.extend(ffaces)
        finger_station_info[name] = (base_joint, ring_ids, ring_s, cap_ids, cap_s,
                                     np.array(spec.lengths))
        offset += len(fverts)

    vertices = np.concatenate(all_verts, axis=0)
    V = len(vertices)
    if not (300 <= V <= 1000):
        raise ConfigurationError(
            f"tessellation produced {V} vertices, outside the 300..1000 budget")
    topology = build_topology(all_faces, V)

    # --- skinning weights -------------------------------------------------
    weights = np.zeros((V, NUM_JOINTS))
    # palm: wrist-owned, smooth ramp toward the nearest knuckle near the rim
    knuckles = np.array([config.fingers[n].knuckle for n in FINGERS])
    metacarpal_dirs = knuckles - joints[0][None, :]
    metacarpal_len = np.linalg.norm(metacarpal_dirs, axis=1)
    metacarpal_dirs = metacarpal_dirs / metacarpal_len[:, None]
    for v in range(V_palm):
        rel = vertices[v] - joints[0]
        proj = metacarpal_dirs @ rel                   # (5,)
        u = proj / metacarpal_len
        perp = np.linalg.norm(rel[None, :] - proj[:, None] * metacarpal_dirs,
                              axis=1)
        f = int(np.argmin(perp))
        ramp = float(_ramp(np.clip(u[f], 0.0, 1.0), config.palm_ramp_start,
                           config.palm_ramp_full, config.palm_ramp_max))
        weights[v, 0] = 1.0 - ramp
        weights[v, 1 + 4 * f] = ramp

    for fi, name in enumerate(FINGERS):
        base_joint, ring_ids, ring_s, cap_ids, cap_s, lengths = \
            finger_station_info[name]
        bone_edges = np.concatenate([[0.0], np.cumsum(lengths)])
        for ids, s in zip(ring_ids, ring_s):
            ids = np.array(ids)
            if s <= 0.0:
                weights[ids, :] = 0.0
                weights[ids, base_joint] = 1.0
                continue
            bone = int(np.searchsorted(bone_edges, s, side="left") - 1)
            bone = min(max(bone, 0), 2)
            u = (s - bone_edges[bone]) / lengths[bone]
            far = _pair_profile(np.array([u]), q)[0]
            weights[ids, :] = 0.0
            weights[ids, base_joint + bone] = 1.0 - far
            weights[ids, base_joint + bone + 1] = far
        cap_ids = np.array(cap_ids)
        weights[cap_ids, :] = 0.0
        weights[cap_ids, base_joint + 3] = 1.0

    row_sums = weights.sum(axis=1, keepdims=True)
    weights = weights / row_sums

    return HandRig(template_vertices=vertices, topology=topology, parents=parents,
                   rest_joints=joints, skinning_weights=weights, dofs=dofs,
                   config=config)


def scale_tessellation(config: RigConfig, finger_rings: int, palm_ring_count: int,
                       stations: int) -> RigConfig:
    """Convenience: same skeleton, different mesh density."""
    return replace(config, ring_vertices_finger=finger_rings,
                   palm_rings=palm_ring_count, stations_per_bone=stations)
