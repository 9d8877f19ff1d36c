"""Triangle-mesh connectivity and the spectral graph operator used by the
graph convolution layers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..errors import InputError, NonManifoldError, TopologyError


@dataclass(frozen=True)
class MeshTopology:
    """Connectivity of a triangle mesh.

    ``faces`` are counter-clockwise index triples, ``edges`` unordered and
    deduplicated (sorted lexicographically), ``adjacency`` per-vertex sorted
    neighbor lists. Immutable after construction.
    """

    vertex_count: int
    faces: np.ndarray          # (F, 3) int64
    edges: np.ndarray          # (E, 2) int64, each row sorted, rows lex-sorted
    adjacency: tuple = field(repr=False)  # tuple of int64 arrays, one per vertex

    @property
    def face_count(self) -> int:
        return int(self.faces.shape[0])

    @property
    def edge_count(self) -> int:
        return int(self.edges.shape[0])

    def degree(self) -> np.ndarray:
        return np.array([len(a) for a in self.adjacency], dtype=np.int64)


def build_topology(faces, vertex_count: int, strict: bool = True) -> MeshTopology:
    """Build connectivity from a face list.

    With ``strict`` (the default) an edge bordered by more than two faces
    raises ``NonManifoldError``. Coarsened graphs in the pooling hierarchy
    are built with ``strict=False`` since vertex clustering can locally
    break manifoldness; they are used for convolution only.
    """
    faces = np.asarray(faces, dtype=np.int64)
    if faces.ndim != 2 or faces.shape[1] != 3 or faces.shape[0] < 1:
        raise InputError(f"faces must be a non-empty (F, 3) array, got {faces.shape}")
    if faces.min() < 0 or faces.max() >= vertex_count:
        raise InputError(
            f"face indices must lie in [0, {vertex_count}), got range "
            f"[{faces.min()}, {faces.max()}]"
        )
    if np.any(faces[:, 0] == faces[:, 1]) or np.any(faces[:, 1] == faces[:, 2]) \
            or np.any(faces[:, 0] == faces[:, 2]):
        raise InputError("a face repeats a vertex index")

    halfedges = faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
    undirected = np.sort(halfedges, axis=1)
    edges, counts = np.unique(undirected, axis=0, return_counts=True)
    if strict and counts.max() > 2:
        bad = edges[counts > 2][0]
        raise NonManifoldError(f"edge {tuple(bad)} borders {counts.max()} faces")

    adjacency = _adjacency_from_edges(edges, vertex_count)
    if not _is_connected(adjacency):
        raise TopologyError("mesh graph is not connected")
    return MeshTopology(vertex_count=int(vertex_count), faces=faces, edges=edges,
                        adjacency=adjacency)


def topology_from_graph(edges, vertex_count: int,
                        faces=None) -> MeshTopology:
    """Build a MeshTopology from an explicit edge list.

    Used for coarsened pooling levels, where convolution needs the full
    cluster adjacency; the face list (possibly sparse or empty) is kept
    for reference only.
    """
    edges = np.unique(np.sort(np.asarray(edges, dtype=np.int64), axis=1), axis=0)
    if edges.size == 0 or edges.min() < 0 or edges.max() >= vertex_count:
        raise InputError("edge list empty or indices out of range")
    faces = np.zeros((0, 3), dtype=np.int64) if faces is None \
        else np.asarray(faces, dtype=np.int64)
    adjacency = _adjacency_from_edges(edges, vertex_count)
    if not _is_connected(adjacency):
        raise TopologyError("graph is not connected")
    return MeshTopology(vertex_count=int(vertex_count), faces=faces,
                        edges=edges, adjacency=adjacency)


def _adjacency_from_edges(edges: np.ndarray, vertex_count: int) -> tuple:
    neighbors = [[] for _ in range(vertex_count)]
    for a, b in edges:
        neighbors[a].append(b)
        neighbors[b].append(a)
    return tuple(np.array(sorted(n), dtype=np.int64) for n in neighbors)


def _is_connected(adjacency: tuple) -> bool:
    n = len(adjacency)
    if n == 0:
        return False
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        v = stack.pop()
        for w in adjacency[v]:
            if not seen[w]:
                seen[w] = True
                stack.append(int(w))
    return bool(seen.all())


@dataclass(frozen=True)
class GraphOperator:
    """Rescaled normalized Laplacian ``2 L / lambda_max - I`` of a topology.

    Symmetric with spectrum in [-1, 1]; the basis of the Chebyshev graph
    convolution.
    """

    matrix: sp.csr_matrix
    scale: float  # lambda_max used for rescaling

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


def graph_operator(topology: MeshTopology, lambda_max: float = 2.0) -> GraphOperator:
    """Return the rescaled normalized Laplacian of ``topology``.

    The normalized Laplacian of a connected graph has eigenvalues in
    [0, 2], so the default ``lambda_max=2`` maps the spectrum into [-1, 1].
    """
    n = topology.vertex_count
    e = topology.edges
    data = np.ones(len(e), dtype=np.float64)
    adj = sp.coo_matrix((data, (e[:, 0], e[:, 1])), shape=(n, n))
    adj = (adj + adj.T).tocsr()
    deg = np.asarray(adj.sum(axis=1)).ravel()
    if np.any(deg == 0):
        raise TopologyError("graph has an isolated vertex")
    d_inv_sqrt = 1.0 / np.sqrt(deg)
    d_mat = sp.diags(d_inv_sqrt)
    lap = sp.identity(n, format="csr") - d_mat @ adj @ d_mat
    rescaled = (2.0 / lambda_max) * lap - sp.identity(n, format="csr")
    rescaled = ((rescaled + rescaled.T) * 0.5).tocsr()  # enforce exact symmetry
    return GraphOperator(matrix=rescaled, scale=float(lambda_max))


def spectral_radius(op: GraphOperator, iters: int = 200, seed: int = 0) -> float:
    """Power-iteration estimate of the largest |eigenvalue| of the operator."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(op.size)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = op.matrix @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        lam = float(v @ w)
        v = w / nw
    return abs(lam)
