"""Optional native geometry kernel: batched triangle intersection and
pairwise distances behind a narrow ctypes boundary.

The kernel is an accelerator only; every caller falls back to the
reference implementations in `handdiff.metrics` when the library is
absent. Buffers cross the boundary as contiguous little-endian 32-bit
arrays with explicit lengths; status codes make failures structured.
"""

from __future__ import annotations

import ctypes
import os
from pathlib import Path

import numpy as np

from .errors import InputError
from .mesh import MeshTopology
from .metrics import SI_EPSILON

ENV_VAR = "HANDDIFF_KERNEL"

_STATUS = {0: "ok", 1: "invalid arguments", 2: "internal panic"}


def _candidate_paths():
    env = os.environ.get(ENV_VAR)
    if env:
        yield Path(env)
    root = Path(__file__).resolve().parents[2]
    for profile in ("release", "debug"):
        yield root / "geom_kernel" / "target" / profile / "libgeom_kernel.so"


_lib = None
_lib_path = None


def kernel_path():
    return _lib_path


def load_kernel():
    """The ctypes handle, or None when no library is available."""
    global _lib, _lib_path
    if _lib is not None:
        return _lib
    for path in _candidate_paths():
        if path.exists():
            lib = ctypes.CDLL(str(path))
            lib.si_fast.restype = ctypes.c_int32
            lib.si_fast.argtypes = [
                ctypes.POINTER(ctypes.c_float), ctypes.c_uint64,
                ctypes.POINTER(ctypes.c_uint32), ctypes.c_uint64,
                ctypes.c_double,
                ctypes.POINTER(ctypes.c_uint32), ctypes.POINTER(ctypes.c_uint64)]
            lib.pairwise_mean_distances.restype = ctypes.c_int32
            lib.pairwise_mean_distances.argtypes = [
                ctypes.POINTER(ctypes.c_float), ctypes.c_uint64,
                ctypes.c_uint64, ctypes.POINTER(ctypes.c_float)]
            _lib = lib
            _lib_path = path
            return _lib
    return None


def kernel_available() -> bool:
    return load_kernel() is not None


def si_fast(vertices: np.ndarray, faces: np.ndarray,
            eps: float = SI_EPSILON) -> np.ndarray:
    """Intersecting-face indices from the native kernel.

    Raises InputError on malformed buffers or if the kernel is missing;
    use `metrics.self_intersections` as the reference path.
    """
    lib = load_kernel()
    if lib is None:
        raise InputError("native kernel not available")
    v = np.ascontiguousarray(np.asarray(vertices), dtype="<f4")
    f = np.ascontiguousarray(np.asarray(faces), dtype="<u4")
    if v.ndim != 2 or v.shape[1] != 3 or f.ndim != 2 or f.shape[1] != 3:
        raise InputError(f"need (V, 3) vertices and (F, 3) faces, got "
                         f"{v.shape}, {f.shape}")
    out = np.zeros(f.shape[0], dtype="<u4")
    count = ctypes.c_uint64(0)
    status = lib.si_fast(
        v.ctypes.data_as(ctypes.POINTER(ctypes.c_float)), v.shape[0],
        f.ctypes.data_as(ctypes.POINTER(ctypes.c_uint32)), f.shape[0],
        float(eps),
        out.ctypes.data_as(ctypes.POINTER(ctypes.c_uint32)),
        ctypes.byref(count))
    if status != 0:
        raise InputError(f"kernel si_fast failed: "
                         f"{_STATUS.get(status, status)}")
    return out[:count.value].astype(np.int64)


def pairwise_fast(meshes: np.ndarray) -> np.ndarray:
    """Condensed pairwise mean-distance matrix from the native kernel."""
    lib = load_kernel()
    if lib is None:
        raise InputError("native kernel not available")
    m = np.ascontiguousarray(np.asarray(meshes), dtype="<f4")
    if m.ndim != 3 or m.shape[0] < 2 or m.shape[2] != 3:
        raise InputError(f"need (M>=2, V, 3) batch, got {m.shape}")
    n = m.shape[0]
    out = np.zeros(n * (n - 1) // 2, dtype="<f4")
    status = lib.pairwise_mean_distances(
        m.ctypes.data_as(ctypes.POINTER(ctypes.c_float)), n, m.shape[1],
        out.ctypes.data_as(ctypes.POINTER(ctypes.c_float)))
    if status != 0:
        raise InputError(f"kernel pairwise failed: "
                         f"{_STATUS.get(status, status)}")
    return out.astype(np.float64)


def si_dispatch(vertices: np.ndarray, topology: MeshTopology,
                eps: float = SI_EPSILON):
    """(intersecting faces, path): kernel when present, reference otherwise.

    The kernel receives float32-quantized vertices; the reference is run
    on the same quantized coordinates so both paths see identical inputs.
    """
    from .metrics import self_intersections
    quantized = np.asarray(vertices, dtype=np.float32).astype(np.float64)
    if kernel_available():
        return si_fast(quantized, topology.faces, eps), "kernel"
    return self_intersections(quantized, topology, eps), "reference"
