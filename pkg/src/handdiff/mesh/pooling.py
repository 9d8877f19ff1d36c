"""Deterministic mesh coarsening for the U-shaped denoiser.

Each level contracts a greedy heavy-edge matching computed on rest-pose
edge lengths (shortest edges first). Down-pooling averages the vertices of
a cluster (row-stochastic), up-pooling copies each fine vertex from its
cluster, so down-then-up preserves constant fields exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..errors import ConfigurationError
from .topology import MeshTopology, topology_from_graph

MIN_COARSE_VERTICES = 8


@dataclass(frozen=True)
class PoolingLevel:
    """One coarsening step: fine -> coarse operators plus the coarse graph."""

    coarse_topology: MeshTopology
    down_operator: sp.csr_matrix  # (coarse, fine), rows sum to 1
    up_operator: sp.csr_matrix    # (fine, coarse), one 1 per row
    clusters: np.ndarray          # (fine,) cluster index per fine vertex


def greedy_edge_matching(topology: MeshTopology, vertices: np.ndarray) -> np.ndarray:
    """Cluster assignment from greedy matching on ascending edge length.

    Unmatched leftovers are merged into their smallest adjacent cluster so
    the coarse count stays close to half. Deterministic for fixed inputs.
    """
    lengths = np.linalg.norm(
        vertices[topology.edges[:, 1]] - vertices[topology.edges[:, 0]], axis=1)
    # stable order: by length, ties broken lexicographically by edge index pair
    order = np.lexsort((topology.edges[:, 1], topology.edges[:, 0], lengths))
    matched = np.full(topology.vertex_count, -1, dtype=np.int64)
    clusters = []
    for ei in order:
        a, b = topology.edges[ei]
        if matched[a] < 0 and matched[b] < 0:
            matched[a] = matched[b] = len(clusters)
            clusters.append([int(a), int(b)])
    for v in range(topology.vertex_count):
        if matched[v] >= 0:
            continue
        # merge an unmatched vertex into the smallest neighboring cluster
        neigh = [matched[w] for w in topology.adjacency[v] if matched[w] >= 0]
        if neigh:
            sizes = [(len(clusters[c]), c) for c in set(neigh)]
            c = min(sizes)[1]
            matched[v] = c
            clusters[c].append(v)
        else:
            matched[v] = len(clusters)
            clusters.append([v])
    return matched


def _coarse_faces(topology: MeshTopology, clusters: np.ndarray) -> np.ndarray:
    mapped = clusters[topology.faces]
    keep = (mapped[:, 0] != mapped[:, 1]) & (mapped[:, 1] != mapped[:, 2]) \
        & (mapped[:, 0] != mapped[:, 2])
    mapped = mapped[keep]
    if mapped.shape[0] == 0:
        return np.zeros((0, 3), dtype=np.int64)
    # dedupe faces that become identical as vertex sets
    key = np.sort(mapped, axis=1)
    _, first = np.unique(key, axis=0, return_index=True)
    return mapped[np.sort(first)]


def _coarse_edges(topology: MeshTopology, clusters: np.ndarray) -> np.ndarray:
    mapped = clusters[topology.edges]
    keep = mapped[:, 0] != mapped[:, 1]
    return mapped[keep]


def build_pooling_hierarchy(topology: MeshTopology, levels: int,
                            vertices: np.ndarray) -> list[PoolingLevel]:
    """Chain of ``levels`` coarsening steps from the template topology.

    ``vertices`` are the rest-pose coordinates that drive the matching.
    Deterministic given (topology, vertices).
    """
    if levels < 1:
        raise ConfigurationError(f"levels must be >= 1, got {levels}")
    out = []
    current_topo = topology
    current_verts = np.asarray(vertices, dtype=np.float64)
    for _ in range(levels):
        clusters = greedy_edge_matching(current_topo, current_verts)
        n_coarse = int(clusters.max()) + 1
        if n_coarse < MIN_COARSE_VERTICES:
            raise ConfigurationError(
                f"coarsening to {n_coarse} vertices is below the "
                f"{MIN_COARSE_VERTICES}-vertex floor; request fewer levels"
            )
        n_fine = current_topo.vertex_count
        ones = np.ones(n_fine)
        down = sp.coo_matrix((ones, (clusters, np.arange(n_fine))),
                             shape=(n_coarse, n_fine)).tocsr()
        sizes = np.asarray(down.sum(axis=1)).ravel()
        down = sp.diags(1.0 / sizes) @ down
        up = sp.coo_matrix((ones, (np.arange(n_fine), clusters)),
                           shape=(n_fine, n_coarse)).tocsr()
        # coarse connectivity is the full cluster graph (collapsed faces can
        # drop vertices); faces are kept for reference only
        coarse_topo = topology_from_graph(_coarse_edges(current_topo, clusters),
                                          n_coarse,
                                          _coarse_faces(current_topo, clusters))
        coarse_verts = down @ current_verts
        out.append(PoolingLevel(coarse_topology=coarse_topo, down_operator=down,
                                up_operator=up, clusters=clusters))
        current_topo = coarse_topo
        current_verts = coarse_verts
    return out
