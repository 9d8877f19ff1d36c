"""Torch-side wrappers for the sparse graph and pooling operators."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import torch

torch.sparse.check_sparse_tensor_invariants.enable()


class SparseOp:
    """A scipy sparse matrix served as cached torch sparse tensors per dtype.

    Kept outside the module parameter tree: operators are data derived from
    the topology artifact, not learnable state.
    """

    def __init__(self, matrix: sp.spmatrix):
        coo = matrix.tocoo()
        self.shape = coo.shape
        self._indices = np.stack([coo.row, coo.col]).astype(np.int64)
        self._values = coo.data.astype(np.float64)
        self._cache: dict = {}

    def tensor(self, dtype: torch.dtype) -> torch.Tensor:
        key = dtype
        if key not in self._cache:
            t = torch.sparse_coo_tensor(
                torch.from_numpy(self._indices),
                torch.from_numpy(self._values).to(dtype), size=self.shape)
            self._cache[key] = t.coalesce()
        return self._cache[key]

    def apply(self, x: torch.Tensor) -> torch.Tensor:
        """Multiply along the vertex dimension of (B, V, C) or (V, C)."""
        mat = self.tensor(x.dtype)
        if x.dim() == 2:
            return torch.sparse.mm(mat, x)
        b, v, c = x.shape
        flat = x.permute(1, 0, 2).reshape(v, b * c)
        out = torch.sparse.mm(mat, flat)
        return out.reshape(self.shape[0], b, c).permute(1, 0, 2)


def sinusoidal_embedding(t, dim: int) -> torch.Tensor:
    """Deterministic transformer-style timestep embedding.

    Accepts an int or a 1-D tensor of timesteps; returns (dim,) or (B, dim).
    """
    scalar = not torch.is_tensor(t) or t.dim() == 0
    tt = torch.as_tensor(t, dtype=torch.float64).reshape(-1)
    half = dim // 2
    freqs = torch.exp(-np.log(10000.0) * torch.arange(half, dtype=torch.float64)
                      / max(half - 1, 1))
    args = tt[:, None] * freqs[None, :]
    emb = torch.cat([torch.sin(args), torch.cos(args)], dim=1)
    if dim % 2:
        emb = torch.cat([emb, torch.zeros(emb.shape[0], 1, dtype=emb.dtype)], dim=1)
    return emb[0] if scalar else emb
