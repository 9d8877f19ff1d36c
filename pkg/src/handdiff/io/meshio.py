"""Mesh export/import: 6-decimal OBJ and binary little-endian PLY.

Output is bit-stable for identical inputs.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import InputError, StorageError

FORMATS = ("obj", "ply")


def export_mesh(vertices: np.ndarray, faces: np.ndarray, fmt: str, path) -> None:
    v = np.asarray(vertices, dtype=np.float64)
    f = np.asarray(faces, dtype=np.int64)
    if v.ndim != 2 or v.shape[1] != 3 or f.ndim != 2 or f.shape[1] != 3:
        raise InputError(f"need (V, 3) vertices and (F, 3) faces, got "
                         f"{v.shape}, {f.shape}")
    if fmt not in FORMATS:
        raise InputError(f"format must be one of {FORMATS}, got {fmt!r}")
    try:
        if fmt == "obj":
            _write_obj(v, f, Path(path))
        else:
            _write_ply(v, f, Path(path))
    except OSError as exc:
        raise StorageError(f"cannot write mesh {path}: {exc}") from exc


def _write_obj(v: np.ndarray, f: np.ndarray, path: Path) -> None:
    lines = [f"v {x:.6f} {y:.6f} {z:.6f}" for x, y, z in v]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in f]
    path.write_text("\n".join(lines) + "\n")


def _write_ply(v: np.ndarray, f: np.ndarray, path: Path) -> None:
    header = "\n".join([
        "ply", "format binary_little_endian 1.0",
        f"element vertex {len(v)}",
        "property float x", "property float y", "property float z",
        f"element face {len(f)}",
        "property list uchar int vertex_indices", "end_header", ""])
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(v.astype("<f4").tobytes())
        for a, b, c in f:
            fh.write(struct.pack("<Biii", 3, a, b, c))


def import_mesh(path):
    """Load an OBJ or PLY written by export_mesh; returns (vertices, faces)."""
    p = Path(path)
    if not p.exists():
        raise StorageError(f"no mesh file at {p}")
    if p.suffix.lower() == ".obj" or p.read_bytes()[:3] != b"ply":
        verts, faces = [], []
        for line in p.read_text().splitlines():
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                faces.append([int(x.split("/")[0]) - 1 for x in parts[1:4]])
        return np.array(verts), np.array(faces, dtype=np.int64)
    return _read_ply(p)


def _read_ply(p: Path):
    data = p.read_bytes()
    end = data.index(b"end_header\n") + len(b"end_header\n")
    header = data[:end].decode("ascii").splitlines()
    nv = nf = 0
    for line in header:
        if line.startswith("element vertex"):
            nv = int(line.split()[-1])
        elif line.startswith("element face"):
            nf = int(line.split()[-1])
    verts = np.frombuffer(data, dtype="<f4", count=nv * 3, offset=end)
    verts = verts.reshape(nv, 3).astype(np.float64)
    faces = np.zeros((nf, 3), dtype=np.int64)
    off = end + nv * 12
    for i in range(nf):
        cnt, a, b, c = struct.unpack_from("<Biii", data, off)
        if cnt != 3:
            raise StorageError("only triangle PLY files are supported")
        faces[i] = (a, b, c)
        off += 13
    return verts, faces
