"""Layers of the graph denoiser: Chebyshev graph convolution, vertex
self-attention, masked cross-attention over condition tokens, and the
4-layer block tying them together."""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import ModelError
from .ops import SparseOp


class ChebConv(nn.Module):
    """Spectral graph convolution in the Chebyshev basis of the rescaled
    Laplacian: out = sum_k T_k(L) x W_k."""

    def __init__(self, in_channels: int, out_channels: int, order: int):
        super().__init__()
        if order < 1:
            raise ModelError(f"Chebyshev order must be >= 1, got {order}")
        self.order = order
        self.weight = nn.Parameter(torch.empty(order, in_channels, out_channels))
        self.bias = nn.Parameter(torch.zeros(out_channels))
        nn.init.xavier_uniform_(self.weight)

    def forward(self, x: torch.Tensor, operator: SparseOp) -> torch.Tensor:
        if operator.shape[0] != x.shape[-2]:
            raise ModelError(
                f"operator size {operator.shape[0]} != vertex count {x.shape[-2]}")
        terms = [x]
        if self.order > 1:
            terms.append(operator.apply(x))
        for _ in range(2, self.order):
            terms.append(2.0 * operator.apply(terms[-1]) - terms[-2])
        out = terms[0] @ self.weight[0]
        for k in range(1, self.order):
            out = out + terms[k] @ self.weight[k]
        return out + self.bias


class VertexSelfAttention(nn.Module):
    """Multi-head attention over mesh vertices (tokens = vertices)."""

    def __init__(self, channels: int, heads: int):
        super().__init__()
        if channels % heads:
            raise ModelError(f"channels {channels} not divisible by heads {heads}")
        self.heads = heads
        self.qkv = nn.Linear(channels, 3 * channels)
        self.proj = nn.Linear(channels, channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, v, c = x.shape
        hd = c // self.heads
        q, k, val = self.qkv(x).chunk(3, dim=-1)
        q = q.reshape(b, v, self.heads, hd).transpose(1, 2)
        k = k.reshape(b, v, self.heads, hd).transpose(1, 2)
        val = val.reshape(b, v, self.heads, hd).transpose(1, 2)
        out = F.scaled_dot_product_attention(q, k, val)
        out = out.transpose(1, 2).reshape(b, v, c)
        return self.proj(out)


class TokenCrossAttention(nn.Module):
    """Cross-attention from vertex features onto condition tokens.

    Masked tokens are excluded exactly: their attention weight is forced
    to 0 via -inf scores, and rows where every token is masked fall back
    to a zero update so the output is fully independent of masked values.
    """

    def __init__(self, channels: int, token_dim: int, heads: int):
        super().__init__()
        if channels % heads:
            raise ModelError(f"channels {channels} not divisible by heads {heads}")
        self.heads = heads
        self.q = nn.Linear(channels, channels)
        self.kv = nn.Linear(token_dim, 2 * channels)
        self.proj = nn.Linear(channels, channels)

    def forward(self, x: torch.Tensor, tokens: torch.Tensor,
                token_mask: torch.Tensor) -> torch.Tensor:
        b, v, c = x.shape
        if tokens.dim() == 2:
            tokens = tokens.unsqueeze(0).expand(b, -1, -1)
            token_mask = token_mask.unsqueeze(0).expand(b, -1)
        n = tokens.shape[1]
        hd = c // self.heads
        q = self.q(x).reshape(b, v, self.heads, hd).transpose(1, 2)
        k, val = self.kv(tokens).chunk(2, dim=-1)
        k = k.reshape(b, n, self.heads, hd).transpose(1, 2)
        val = val.reshape(b, n, self.heads, hd).transpose(1, 2)
        all_masked = token_mask.all(dim=-1)  # (B,)
        # keep attention finite for fully-masked rows; their update is
        # zeroed below so the block reduces to the residual identity,
        # independent of every token value
        keep = ~token_mask | all_masked[:, None]
        out = F.scaled_dot_product_attention(
            q, k, val, attn_mask=keep[:, None, None, :])
        out = out.transpose(1, 2).reshape(b, v, c)
        update = self.proj(out)
        return torch.where(all_masked[:, None, None],
                           torch.zeros_like(update), update)


class AttentionMixer(nn.Module):
    """Drop-in substitute for a ChebConv layer in the attention-only
    ablation: per-vertex linear map followed by self-attention."""

    def __init__(self, in_channels: int, out_channels: int, heads: int):
        super().__init__()
        self.lift = nn.Linear(in_channels, out_channels)
        self.attn = VertexSelfAttention(out_channels, heads)

    def forward(self, x: torch.Tensor, operator: SparseOp) -> torch.Tensor:
        h = self.lift(x)
        return h + self.attn(h)


class DenoiserBlock(nn.Module):
    """One U-level block: a residual pair of graph convolutions (or
    attention mixers) with feature normalization and timestep
    scale-and-shift, then vertex self-attention and masked token
    cross-attention."""

    def __init__(self, in_channels: int, out_channels: int, order: int,
                 heads: int, token_dim: int, time_dim: int, use_gcn: bool,
                 cross_attention: bool):
        super().__init__()
        if use_gcn:
            self.conv1 = ChebConv(in_channels, out_channels, order)
            self.conv2 = ChebConv(out_channels, out_channels, order)
        else:
            self.conv1 = AttentionMixer(in_channels, out_channels, heads)
            self.conv2 = AttentionMixer(out_channels, out_channels, heads)
        self.norm1 = nn.LayerNorm(out_channels)
        self.norm2 = nn.LayerNorm(out_channels)
        self.skip = nn.Linear(in_channels, out_channels) \
            if in_channels != out_channels else nn.Identity()
        self.time_map = nn.Linear(time_dim, 2 * out_channels)
        self.norm_sa = nn.LayerNorm(out_channels)
        self.self_attn = VertexSelfAttention(out_channels, heads)
        self.norm_ca = nn.LayerNorm(out_channels)
        self.cross_attn = TokenCrossAttention(out_channels, token_dim, heads) \
            if cross_attention else None

    def forward(self, x: torch.Tensor, operator: SparseOp, t_emb: torch.Tensor,
                tokens: torch.Tensor | None,
                token_mask: torch.Tensor | None) -> torch.Tensor:
        scale, shift = self.time_map(t_emb).chunk(2, dim=-1)
        if scale.dim() == 1:
            scale, shift = scale[None, None, :], shift[None, None, :]
        else:
            scale, shift = scale[:, None, :], shift[:, None, :]
        h = F.silu(self.norm1(self.conv1(x, operator)))
        h = self.norm2(self.conv2(h, operator))
        h = h * (1.0 + scale) + shift
        h = self.skip(x) + F.silu(h)
        h = h + self.self_attn(self.norm_sa(h))
        if self.cross_attn is not None and tokens is not None:
            h = h + self.cross_attn(self.norm_ca(h), tokens, token_mask)
        return h
