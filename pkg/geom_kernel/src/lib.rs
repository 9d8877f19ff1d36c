//! Native accelerator for the two O(F^2)/O(n^2 V) geometry hot spots:
//! batched triangle-triangle self-intersection and batched pairwise mean
//! vertex distances.
//!
//! The boundary is array-in/array-out over contiguous little-endian 32-bit
//! buffers with explicit lengths; every failure surfaces as a status code
//! (0 ok, 1 invalid arguments, 2 internal panic) and panics never unwind
//! across the FFI edge.
//!
//! The intersection predicate replays the reference implementation's exact
//! float64 operation sequence so result sets match it bit for bit.

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};

pub const STATUS_OK: i32 = 0;
pub const STATUS_INVALID: i32 = 1;
pub const STATUS_PANIC: i32 = 2;

const DEGENERATE_AREA: f64 = 1e-12;

type Vec3 = [f64; 3];

#[inline]
fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
fn norm(a: Vec3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

#[inline]
fn argmax_abs(v: Vec3) -> usize {
    // first-maximum semantics, matching the reference argmax
    let a = [v[0].abs(), v[1].abs(), v[2].abs()];
    let mut best = 0;
    for k in 1..3 {
        if a[k] > a[best] {
            best = k;
        }
    }
    best
}

fn orient2d(ax: f64, ay: f64, bx: f64, by: f64, cx: f64, cy: f64) -> f64 {
    (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
}

fn segments_cross(p0: [f64; 2], p1: [f64; 2], q0: [f64; 2], q1: [f64; 2]) -> bool {
    let d1 = orient2d(p0[0], p0[1], p1[0], p1[1], q0[0], q0[1]);
    let d2 = orient2d(p0[0], p0[1], p1[0], p1[1], q1[0], q1[1]);
    let d3 = orient2d(q0[0], q0[1], q1[0], q1[1], p0[0], p0[1]);
    let d4 = orient2d(q0[0], q0[1], q1[0], q1[1], p1[0], p1[1]);
    d1 * d2 <= 0.0 && d3 * d4 <= 0.0
}

fn point_in_tri2d(p: [f64; 2], a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> bool {
    let d1 = orient2d(a[0], a[1], b[0], b[1], p[0], p[1]);
    let d2 = orient2d(b[0], b[1], c[0], c[1], p[0], p[1]);
    let d3 = orient2d(c[0], c[1], a[0], a[1], p[0], p[1]);
    let neg = (d1 < 0.0) || (d2 < 0.0) || (d3 < 0.0);
    let pos = (d1 > 0.0) || (d2 > 0.0) || (d3 > 0.0);
    !(neg && pos)
}

fn coplanar_overlap(p: &[Vec3; 3], q: &[Vec3; 3], normal: Vec3) -> bool {
    let axis = argmax_abs(normal);
    let keep: [usize; 2] = match axis {
        0 => [1, 2],
        1 => [0, 2],
        _ => [0, 1],
    };
    let flat = |v: Vec3| [v[keep[0]], v[keep[1]]];
    let p2 = [flat(p[0]), flat(p[1]), flat(p[2])];
    let q2 = [flat(q[0]), flat(q[1]), flat(q[2])];
    for i in 0..3 {
        for j in 0..3 {
            if segments_cross(p2[i], p2[(i + 1) % 3], q2[j], q2[(j + 1) % 3]) {
                return true;
            }
        }
    }
    if point_in_tri2d(p2[0], q2[0], q2[1], q2[2]) {
        return true;
    }
    if point_in_tri2d(q2[0], p2[0], p2[1], p2[2]) {
        return true;
    }
    false
}

fn interval(tri: &[Vec3; 3], dists: [f64; 3], axis: usize) -> (f64, f64) {
    let mut ts = [0.0f64; 6];
    let mut n = 0;
    for i in 0..3 {
        if dists[i] == 0.0 {
            ts[n] = tri[i][axis];
            n += 1;
        }
    }
    for (i, j) in [(0usize, 1usize), (1, 2), (2, 0)] {
        if dists[i] * dists[j] < 0.0 {
            let t = tri[i][axis]
                + (tri[j][axis] - tri[i][axis]) * dists[i] / (dists[i] - dists[j]);
            ts[n] = t;
            n += 1;
        }
    }
    let mut lo = ts[0];
    let mut hi = ts[0];
    for &t in &ts[1..n] {
        if t < lo {
            lo = t;
        }
        if t > hi {
            hi = t;
        }
    }
    (lo, hi)
}

/// Interval-based triangle intersection test; inclusive at contact.
/// Mirrors the reference implementation operation for operation.
pub fn tri_tri_intersect(p: &[Vec3; 3], q: &[Vec3; 3], eps: f64) -> bool {
    let n2 = cross(sub(q[1], q[0]), sub(q[2], q[0]));
    let norm2 = norm(n2);
    if norm2 == 0.0 {
        return false;
    }
    let t2 = eps * norm2;
    let mut dp = [0.0f64; 3];
    for i in 0..3 {
        let d = dot(sub(p[i], q[0]), n2);
        dp[i] = if d.abs() <= t2 { 0.0 } else { d };
    }
    if dp.iter().all(|&d| d > 0.0) || dp.iter().all(|&d| d < 0.0) {
        return false;
    }

    let n1 = cross(sub(p[1], p[0]), sub(p[2], p[0]));
    let norm1 = norm(n1);
    if norm1 == 0.0 {
        return false;
    }
    let t1 = eps * norm1;
    let mut dq = [0.0f64; 3];
    for i in 0..3 {
        let d = dot(sub(q[i], p[0]), n1);
        dq[i] = if d.abs() <= t1 { 0.0 } else { d };
    }
    if dq.iter().all(|&d| d > 0.0) || dq.iter().all(|&d| d < 0.0) {
        return false;
    }

    if dp.iter().all(|&d| d == 0.0) {
        return coplanar_overlap(p, q, n2);
    }

    let line = cross(n1, n2);
    let axis = argmax_abs(line);
    let (lo1, hi1) = interval(p, dp, axis);
    let (lo2, hi2) = interval(q, dq, axis);
    lo1 <= hi2 && lo2 <= hi1
}

pub struct FlatMesh<'a> {
    vertices: &'a [f32],
    faces: &'a [u32],
    n_faces: usize,
}

impl<'a> FlatMesh<'a> {
    pub fn new(vertices: &'a [f32], faces: &'a [u32]) -> Result<Self, ()> {
        if vertices.len() % 3 != 0 || faces.len() % 3 != 0 {
            return Err(());
        }
        let n_verts = vertices.len() / 3;
        let n_faces = faces.len() / 3;
        if n_verts == 0 {
            return Err(());
        }
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(());
        }
        if faces.iter().any(|&i| (i as usize) >= n_verts) {
            return Err(());
        }
        Ok(FlatMesh { vertices, faces, n_faces })
    }

    fn vertex(&self, i: usize) -> Vec3 {
        [
            self.vertices[3 * i] as f64,
            self.vertices[3 * i + 1] as f64,
            self.vertices[3 * i + 2] as f64,
        ]
    }

    fn triangle(&self, f: usize) -> [Vec3; 3] {
        [
            self.vertex(self.faces[3 * f] as usize),
            self.vertex(self.faces[3 * f + 1] as usize),
            self.vertex(self.faces[3 * f + 2] as usize),
        ]
    }

    fn face_indices(&self, f: usize) -> [u32; 3] {
        [self.faces[3 * f], self.faces[3 * f + 1], self.faces[3 * f + 2]]
    }
}

fn shares_vertex(a: [u32; 3], b: [u32; 3]) -> bool {
    a.iter().any(|x| b.contains(x))
}

/// Sorted indices of faces intersecting at least one non-adjacent,
/// non-degenerate face. Grid pruning only skips pairs whose eps-inflated
/// bounding boxes are disjoint, which cannot change the result set.
pub fn self_intersections(mesh: &FlatMesh, eps: f64) -> Vec<u32> {
    let n = mesh.n_faces;
    if n == 0 {
        return Vec::new();
    }
    let mut tris = Vec::with_capacity(n);
    let mut lo = Vec::with_capacity(n);
    let mut hi = Vec::with_capacity(n);
    let mut degenerate = vec![false; n];
    for f in 0..n {
        let t = mesh.triangle(f);
        let c = cross(sub(t[1], t[0]), sub(t[2], t[0]));
        degenerate[f] = norm(c) <= 2.0 * DEGENERATE_AREA;
        let mut l = t[0];
        let mut h = t[0];
        for v in &t[1..] {
            for k in 0..3 {
                if v[k] < l[k] {
                    l[k] = v[k];
                }
                if v[k] > h[k] {
                    h[k] = v[k];
                }
            }
        }
        for k in 0..3 {
            l[k] -= eps;
            h[k] += eps;
        }
        tris.push(t);
        lo.push(l);
        hi.push(h);
    }

    // uniform grid over inflated boxes; cell edge = 2x the mean box extent
    let mut mean_extent = 0.0;
    for f in 0..n {
        mean_extent += (hi[f][0] - lo[f][0]) + (hi[f][1] - lo[f][1])
            + (hi[f][2] - lo[f][2]);
    }
    let cell = (mean_extent / (3.0 * n as f64)).max(1e-6) * 2.0;
    let key = |x: f64| (x / cell).floor() as i64;

    let mut grid: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
    for f in 0..n {
        if degenerate[f] {
            continue;
        }
        let (x0, x1) = (key(lo[f][0]), key(hi[f][0]));
        let (y0, y1) = (key(lo[f][1]), key(hi[f][1]));
        let (z0, z1) = (key(lo[f][2]), key(hi[f][2]));
        for x in x0..=x1 {
            for y in y0..=y1 {
                for z in z0..=z1 {
                    grid.entry((x, y, z)).or_default().push(f as u32);
                }
            }
        }
    }

    let boxes_overlap = |a: usize, b: usize| {
        (0..3).all(|k| lo[b][k] <= hi[a][k] && hi[b][k] >= lo[a][k])
    };

    let mut hit = vec![false; n];
    let mut seen: std::collections::HashSet<(u32, u32)> =
        std::collections::HashSet::new();
    for faces in grid.values() {
        for (a_pos, &fa) in faces.iter().enumerate() {
            for &fb in &faces[a_pos + 1..] {
                let (i, j) = if fa < fb { (fa, fb) } else { (fb, fa) };
                let (iu, ju) = (i as usize, j as usize);
                if hit[iu] && hit[ju] {
                    continue;
                }
                if !boxes_overlap(iu, ju) || !seen.insert((i, j)) {
                    continue;
                }
                if shares_vertex(mesh.face_indices(iu), mesh.face_indices(ju)) {
                    continue;
                }
                if tri_tri_intersect(&tris[iu], &tris[ju], eps) {
                    hit[iu] = true;
                    hit[ju] = true;
                }
            }
        }
    }
    (0..n as u32).filter(|&f| hit[f as usize]).collect()
}

/// Condensed pairwise mean per-vertex distances over an (M, V, 3) batch.
pub fn pairwise_distances(data: &[f32], n_meshes: usize, n_verts: usize)
                          -> Option<Vec<f32>> {
    if n_meshes < 2 || n_verts == 0
        || data.len() != n_meshes * n_verts * 3
        || data.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mesh = |m: usize| &data[m * n_verts * 3..(m + 1) * n_verts * 3];
    let mut out = Vec::with_capacity(n_meshes * (n_meshes - 1) / 2);
    for i in 0..n_meshes - 1 {
        let a = mesh(i);
        for j in i + 1..n_meshes {
            let b = mesh(j);
            let mut acc = 0.0f64;
            for v in 0..n_verts {
                let dx = a[3 * v] as f64 - b[3 * v] as f64;
                let dy = a[3 * v + 1] as f64 - b[3 * v + 1] as f64;
                let dz = a[3 * v + 2] as f64 - b[3 * v + 2] as f64;
                acc += (dx * dx + dy * dy + dz * dz).sqrt();
            }
            out.push((acc / n_verts as f64) as f32);
        }
    }
    Some(out)
}

// ---------------------------------------------------------------------------
// FFI boundary
// ---------------------------------------------------------------------------

/// # Safety
/// Pointers must reference buffers of the stated lengths; `out_indices`
/// must have capacity for `n_faces` entries.
#[no_mangle]
pub unsafe extern "C" fn si_fast(
    vertices: *const f32,
    n_verts: u64,
    faces: *const u32,
    n_faces: u64,
    epsilon: f64,
    out_indices: *mut u32,
    out_count: *mut u64,
) -> i32 {
    if vertices.is_null() || faces.is_null() || out_indices.is_null()
        || out_count.is_null() || !epsilon.is_finite() || epsilon < 0.0 {
        return STATUS_INVALID;
    }
    let result = catch_unwind(AssertUnwindSafe(|| {
        let verts = std::slice::from_raw_parts(vertices, (n_verts * 3) as usize);
        let face_buf = std::slice::from_raw_parts(faces, (n_faces * 3) as usize);
        let mesh = match FlatMesh::new(verts, face_buf) {
            Ok(m) => m,
            Err(()) => return STATUS_INVALID,
        };
        let hits = self_intersections(&mesh, epsilon);
        let out = std::slice::from_raw_parts_mut(out_indices, n_faces as usize);
        out[..hits.len()].copy_from_slice(&hits);
        *out_count = hits.len() as u64;
        STATUS_OK
    }));
    result.unwrap_or(STATUS_PANIC)
}

/// # Safety
/// `data` must hold `n_meshes * n_verts * 3` floats and `out` must have
/// capacity for `n_meshes * (n_meshes - 1) / 2` entries.
#[no_mangle]
pub unsafe extern "C" fn pairwise_mean_distances(
    data: *const f32,
    n_meshes: u64,
    n_verts: u64,
    out: *mut f32,
) -> i32 {
    if data.is_null() || out.is_null() {
        return STATUS_INVALID;
    }
    let result = catch_unwind(AssertUnwindSafe(|| {
        let len = (n_meshes * n_verts * 3) as usize;
        let buf = std::slice::from_raw_parts(data, len);
        match pairwise_distances(buf, n_meshes as usize, n_verts as usize) {
            Some(vals) => {
                let out_len = (n_meshes * (n_meshes - 1) / 2) as usize;
                let out_slice = std::slice::from_raw_parts_mut(out, out_len);
                out_slice.copy_from_slice(&vals);
                STATUS_OK
            }
            None => STATUS_INVALID,
        }
    }));
    result.unwrap_or(STATUS_PANIC)
}
