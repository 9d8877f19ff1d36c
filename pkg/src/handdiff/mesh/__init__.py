"""Geometric substrate: topology, pooling, joint regression, alignment."""

from .geometry import edge_lengths, edge_vectors, face_normals
from .pooling import PoolingLevel, build_pooling_hierarchy, greedy_edge_matching
from .procrustes import SimilarityTransform, alignment_residual, procrustes_align
from .regressor import (FINGER_JOINTS, JOINT_NAMES, MAX_ROW_NONZEROS,
                        NUM_JOINTS, JointRegressor, make_regressor,
                        regress_joints)
from .topology import (GraphOperator, MeshTopology, build_topology,
                       graph_operator, spectral_radius)

__all__ = [
    "MeshTopology", "build_topology", "GraphOperator", "graph_operator",
    "spectral_radius", "PoolingLevel", "build_pooling_hierarchy",
    "greedy_edge_matching", "face_normals", "edge_vectors", "edge_lengths",
    "JointRegressor", "make_regressor", "regress_joints", "NUM_JOINTS",
    "JOINT_NAMES", "FINGER_JOINTS", "MAX_ROW_NONZEROS", "SimilarityTransform",
    "procrustes_align", "alignment_residual",
]
