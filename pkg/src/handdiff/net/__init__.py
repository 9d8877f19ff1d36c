"""Graph denoiser network and its layers."""

from .blocks import (AttentionMixer, ChebConv, DenoiserBlock,
                     TokenCrossAttention, VertexSelfAttention)
from .denoiser import (DenoiserConfig, GraphDenoiser, build_denoiser,
                       parameter_count, timestep_embed)
from .ops import SparseOp, sinusoidal_embedding

__all__ = [
    "ChebConv", "VertexSelfAttention", "TokenCrossAttention", "AttentionMixer",
    "DenoiserBlock", "DenoiserConfig", "GraphDenoiser", "build_denoiser",
    "parameter_count", "timestep_embed", "SparseOp", "sinusoidal_embedding",
]
