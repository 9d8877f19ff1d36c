"""The U-shaped graph denoiser: predicts the clean mesh from a noisy one,
a timestep and a stack of maskable condition tokens."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import ConfigurationError, ModelError, NumericError
from ..mesh import GraphOperator, MeshTopology, PoolingLevel, graph_operator
from .blocks import DenoiserBlock
from .ops import SparseOp, sinusoidal_embedding


@dataclass(frozen=True)
class DenoiserConfig:
    levels: int = 3
    channels: tuple = (64, 128, 256)
    cheb_order: int = 3
    heads: int = 4
    token_dim: int = 128
    time_dim: int = 128
    use_gcn: bool = True
    cross_attention_levels: str = "all"   # "all" | "bottleneck"

    def __post_init__(self):
        if len(self.channels) != self.levels:
            raise ConfigurationError(
                f"channels {self.channels} must list one width per level "
                f"({self.levels})")
        if self.token_dim % self.heads or any(c % self.heads for c in self.channels):
            raise ConfigurationError("token_dim and channels must divide heads")


class GraphDenoiser(nn.Module):
    """Encoder-decoder over the pooling hierarchy with skip connections.

    Construct through ``build_denoiser`` for seeded, reproducible
    initialization.
    """

    def __init__(self, config: DenoiserConfig, topology: MeshTopology,
                 hierarchy: list[PoolingLevel]):
        super().__init__()
        if len(hierarchy) < config.levels - 1:
            raise ConfigurationError(
                f"hierarchy of depth {len(hierarchy)} is too shallow for "
                f"{config.levels} levels")
        self.config = config
        self.levels = config.levels
        hierarchy = hierarchy[:config.levels - 1]
        topologies = [topology] + [h.coarse_topology for h in hierarchy]
        self.operators = [SparseOp(graph_operator(tp).matrix) for tp in topologies]
        self.downs = [SparseOp(h.down_operator) for h in hierarchy]
        self.ups = [SparseOp(h.up_operator) for h in hierarchy]
        self.vertex_counts = [tp.vertex_count for tp in topologies]

        ch = config.channels
        c0 = ch[0]
        self.input_proj = nn.Linear(3, c0)
        self.pos_embed = nn.ParameterList([
            nn.Parameter(0.02 * torch.randn(self.vertex_counts[l],
                                            c0 if l == 0 else ch[l - 1]))
            for l in range(config.levels)])
        self.time_mlp = nn.Sequential(
            nn.Linear(config.time_dim, config.time_dim), nn.SiLU(),
            nn.Linear(config.time_dim, config.time_dim))

        def cross(level: int) -> bool:
            if config.cross_attention_levels == "all":
                return True
            return level == config.levels - 1

        self.down_blocks = nn.ModuleList([
            DenoiserBlock(c0 if l == 0 else ch[l - 1], ch[l], config.cheb_order,
                          config.heads, config.token_dim, config.time_dim,
                          config.use_gcn, cross(l))
            for l in range(config.levels)])
        self.up_blocks = nn.ModuleList([
            DenoiserBlock(ch[l + 1] + ch[l], ch[l], config.cheb_order,
                          config.heads, config.token_dim, config.time_dim,
                          config.use_gcn, cross(l))
            for l in range(config.levels - 1)])
        self.output_proj = nn.Linear(ch[0], 3)

    def forward(self, x_t: torch.Tensor, t, tokens: torch.Tensor | None = None,
                token_mask: torch.Tensor | None = None) -> torch.Tensor:
        squeeze = x_t.dim() == 2
        if squeeze:
            x_t = x_t.unsqueeze(0)
        if x_t.shape[-2] != self.vertex_counts[0] or x_t.shape[-1] != 3:
            raise ModelError(
                f"expected (*, {self.vertex_counts[0]}, 3) input, got "
                f"{tuple(x_t.shape)}")
        if not torch.isfinite(x_t).all():
            raise NumericError("non-finite values in denoiser input")
        if tokens is None:
            tokens = torch.zeros(1, self.config.token_dim, dtype=x_t.dtype)
            token_mask = torch.ones(1, dtype=torch.bool)
        tokens = tokens.to(x_t.dtype)

        t_emb = self.time_mlp(
            sinusoidal_embedding(t, self.config.time_dim).to(x_t.dtype))
        h = self.input_proj(x_t) + self.pos_embed[0].to(x_t.dtype)

        skips = []
        for l in range(self.levels):
            if l > 0:
                h = self.downs[l - 1].apply(h) + self.pos_embed[l].to(x_t.dtype)
            h = self.down_blocks[l](h, self.operators[l], t_emb, tokens, token_mask)
            if l < self.levels - 1:
                skips.append(h)
        for l in range(self.levels - 2, -1, -1):
            h = self.ups[l].apply(h)
            h = torch.cat([h, skips[l]], dim=-1)
            h = self.up_blocks[l](h, self.operators[l], t_emb, tokens, token_mask)
        out = self.output_proj(h)
        return out.squeeze(0) if squeeze else out


def build_denoiser(config: DenoiserConfig, topology: MeshTopology,
                   hierarchy: list[PoolingLevel], seed: int) -> GraphDenoiser:
    """Deterministically initialized denoiser."""
    torch.manual_seed(seed)
    return GraphDenoiser(config, topology, hierarchy)


def parameter_count(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def timestep_embed(t, dim: int) -> torch.Tensor:
    """The deterministic sinusoidal basis fed to the learned 2-layer map."""
    return sinusoidal_embedding(t, dim)
