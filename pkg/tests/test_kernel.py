"""Native-kernel boundary tests. Skipped when the library is not built;
the rest of the suite never requires it."""

import ctypes

import numpy as np
import pytest

from handdiff.errors import InputError
from handdiff.kernel import (kernel_available, load_kernel, pairwise_fast,
                             si_dispatch, si_fast)
from handdiff.metrics import pairwise_mean_distances, self_intersections
from handdiff.rig import pose_hand, sample_pose

needs_kernel = pytest.mark.skipif(not kernel_available(),
                                  reason="geom_kernel not built")


@needs_kernel
def test_si_set_equality_sweep(toy_rig):
    for seed in range(20):
        pose = sample_pose(np.random.default_rng(seed), toy_rig)
        verts = pose_hand(toy_rig, pose).astype(np.float32).astype(np.float64)
        ref = self_intersections(verts, toy_rig.topology)
        fast = si_fast(verts, toy_rig.topology.faces)
        assert np.array_equal(ref, fast), f"seed {seed}"


@needs_kernel
def test_pairwise_matches_reference(toy_rig):
    rng = np.random.default_rng(0)
    meshes = np.stack([
        pose_hand(toy_rig, sample_pose(np.random.default_rng(s), toy_rig))
        for s in range(8)]).astype(np.float32)
    ref = pairwise_mean_distances(meshes.astype(np.float64))
    fast = pairwise_fast(meshes)
    assert np.abs(ref - fast).max() / ref.max() < 1e-5
    ident = np.stack([meshes[0], meshes[0]])
    assert pairwise_fast(ident)[0] == 0.0
    offset = meshes[0] + np.array([3.0, 4.0, 0.0], dtype=np.float32)
    assert pairwise_fast(np.stack([meshes[0], offset]))[0] == \
        pytest.approx(5.0, abs=1e-5)


@needs_kernel
def test_dispatch_paths(toy_rig, monkeypatch):
    verts = toy_rig.template_vertices
    hits, path = si_dispatch(verts, toy_rig.topology)
    assert path == "kernel"
    import handdiff.kernel as K
    monkeypatch.setattr(K, "load_kernel", lambda: None)
    hits2, path2 = si_dispatch(verts, toy_rig.topology)
    assert path2 == "reference"
    assert np.array_equal(hits, hits2)


@needs_kernel
def test_malformed_buffers_structured_errors(toy_rig):
    with pytest.raises(InputError):
        si_fast(np.zeros((3, 2)), toy_rig.topology.faces)  # bad vertex shape
    with pytest.raises(InputError):
        pairwise_fast(np.zeros((1, 5, 3), dtype=np.float32))  # single mesh

    lib = load_kernel()
    # direct raw calls: out-of-range indices, NaN coords, null pointers
    verts = np.zeros((3, 3), dtype="<f4")
    bad_faces = np.array([[0, 1, 9]], dtype="<u4")
    out = np.zeros(1, dtype="<u4")
    count = ctypes.c_uint64(0)
    status = lib.si_fast(
        verts.ctypes.data_as(ctypes.POINTER(ctypes.c_float)), 3,
        bad_faces.ctypes.data_as(ctypes.POINTER(ctypes.c_uint32)), 1, 1e-9,
        out.ctypes.data_as(ctypes.POINTER(ctypes.c_uint32)),
        ctypes.byref(count))
    assert status == 1
    nan_verts = np.full((3, 3), np.nan, dtype="<f4")
    faces = np.array([[0, 1, 2]], dtype="<u4")
    status = lib.si_fast(
        nan_verts.ctypes.data_as(ctypes.POINTER(ctypes.c_float)), 3,
        faces.ctypes.data_as(ctypes.POINTER(ctypes.c_uint32)), 1, 1e-9,
        out.ctypes.data_as(ctypes.POINTER(ctypes.c_uint32)),
        ctypes.byref(count))
    assert status == 1
    status = lib.si_fast(None, 0, None, 0, 1e-9, None, None)
    assert status == 1
    status = lib.pairwise_mean_distances(None, 0, 0, None)
    assert status == 1
