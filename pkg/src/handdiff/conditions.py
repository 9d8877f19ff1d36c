"""Multimodal conditions: image / 2D skeleton / 3D skeleton encoders mapping
into a shared token space, stacked as [P patch tokens | global image token |
skel2d token | skel3d token], plus the two-level random masking used in
training (modality drops, then per-patch and per-finger feature drops with
joint noise)."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import torch
import torch.nn as nn

from .errors import ConfigurationError, InputError, UsageError
from .mesh import FINGER_JOINTS, NUM_JOINTS


@dataclass(frozen=True)
class ConditionBundle:
    """Raw observations; absent modalities are None (the empty bundle is
    the unconditional case)."""
    image: np.ndarray | None = None               # (H, W, C) float
    skel2d: np.ndarray | None = None              # (21, 2) px
    skel2d_confidence: np.ndarray | None = None   # (21,) in [0, 1]
    skel3d: np.ndarray | None = None              # (21, 3) mm
    skel3d_validity: np.ndarray | None = None     # (21,) in [0, 1]
    patch_keep: np.ndarray | None = None          # (P,) bool, masking artifact

    def __post_init__(self):
        if self.skel2d is not None and self.skel2d.shape != (NUM_JOINTS, 2):
            raise InputError(f"skel2d must be (21, 2), got {self.skel2d.shape}")
        if self.skel3d is not None and self.skel3d.shape != (NUM_JOINTS, 3):
            raise InputError(f"skel3d must be (21, 3), got {self.skel3d.shape}")

    def with_defaults(self) -> "ConditionBundle":
        kw = {}
        if self.skel2d is not None and self.skel2d_confidence is None:
            kw["skel2d_confidence"] = np.ones(NUM_JOINTS)
        if self.skel3d is not None and self.skel3d_validity is None:
            kw["skel3d_validity"] = np.ones(NUM_JOINTS)
        return replace(self, **kw) if kw else self


EMPTY_BUNDLE = ConditionBundle()


@dataclass(frozen=True)
class MaskConfig:
    p_modality: float = 0.35    # independent per-modality drop
    p_all: float = 0.1          # global drop of every condition
    p_image: float = 0.3        # per-patch drop
    p_skel: float = 0.3         # per-finger drop
    sigma_joint3d: float = 5.0  # mm
    sigma_joint2d: float = 2.0  # px

    def __post_init__(self):
        for name in ("p_modality", "p_all", "p_image", "p_skel"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ConfigurationError(f"{name} must be in [0, 1], got {v}")
        if self.sigma_joint3d < 0 or self.sigma_joint2d < 0:
            raise ConfigurationError("joint noise sigmas must be >= 0")


@dataclass(frozen=True)
class MaskDecisions:
    dropped_all: bool
    dropped_image: bool
    dropped_skel2d: bool
    dropped_skel3d: bool
    patch_keep: np.ndarray | None          # (P,) bool for a surviving image
    fingers_dropped_2d: np.ndarray | None  # (5,) bool
    fingers_dropped_3d: np.ndarray | None


def apply_random_masks(bundle: ConditionBundle, config: MaskConfig,
                       rng: np.random.Generator, patch_count: int,
                       training: bool = True):
    """Training-time condition perturbation; see the masking order in the
    module docstring. Returns (perturbed bundle, MaskDecisions)."""
    if not training:
        raise UsageError("random masks are a training-time perturbation")
    bundle = bundle.with_defaults()

    if rng.uniform() < config.p_all:
        return EMPTY_BUNDLE, MaskDecisions(
            dropped_all=True, dropped_image=bundle.image is not None,
            dropped_skel2d=bundle.skel2d is not None,
            dropped_skel3d=bundle.skel3d is not None, patch_keep=None,
            fingers_dropped_2d=None, fingers_dropped_3d=None)

    drop_image = bundle.image is not None and rng.uniform() < config.p_modality
    drop_2d = bundle.skel2d is not None and rng.uniform() < config.p_modality
    drop_3d = bundle.skel3d is not None and rng.uniform() < config.p_modality

    image = None if drop_image else bundle.image
    patch_keep = None
    if image is not None:
        patch_keep = rng.uniform(size=patch_count) >= config.p_image

    skel2d = skel2d_conf = None
    fingers2d = None
    if bundle.skel2d is not None and not drop_2d:
        skel2d = bundle.skel2d + rng.normal(0.0, config.sigma_joint2d,
                                            size=(NUM_JOINTS, 2)) \
            if config.sigma_joint2d > 0 else bundle.skel2d.copy()
        skel2d_conf = bundle.skel2d_confidence.copy()
        fingers2d = rng.uniform(size=5) < config.p_skel
        for fi, joints in enumerate(FINGER_JOINTS.values()):
            if fingers2d[fi]:
                skel2d_conf[joints] = 0.0

    skel3d = skel3d_valid = None
    fingers3d = None
    if bundle.skel3d is not None and not drop_3d:
        skel3d = bundle.skel3d + rng.normal(0.0, config.sigma_joint3d,
                                            size=(NUM_JOINTS, 3)) \
            if config.sigma_joint3d > 0 else bundle.skel3d.copy()
        skel3d_valid = bundle.skel3d_validity.copy()
        fingers3d = rng.uniform(size=5) < config.p_skel
        for fi, joints in enumerate(FINGER_JOINTS.values()):
            if fingers3d[fi]:
                skel3d_valid[joints] = 0.0

    out = ConditionBundle(image=image, skel2d=skel2d,
                          skel2d_confidence=skel2d_conf, skel3d=skel3d,
                          skel3d_validity=skel3d_valid, patch_keep=patch_keep)
    return out, MaskDecisions(dropped_all=False, dropped_image=drop_image,
                              dropped_skel2d=drop_2d, dropped_skel3d=drop_3d,
                              patch_keep=patch_keep, fingers_dropped_2d=fingers2d,
                              fingers_dropped_3d=fingers3d)


# ---------------------------------------------------------------------------
# encoders
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConditionEncoderConfig:
    token_dim: int = 128
    image_size: int = 64
    image_channels: int = 2
    patch_grid: int = 4          # P = patch_grid ** 2
    vit_layers: int = 2
    vit_heads: int = 4
    mlp_hidden: int = 128
    dropout: float = 0.1
    space_center: tuple = (0.0, 0.0, 420.0)  # mm; matches data normalization
    space_scale: float = 100.0               # mm

    @property
    def patch_count(self) -> int:
        return self.patch_grid ** 2


@dataclass
class ConditionTokens:
    """Stacked (P+3, D) tokens with exclusion mask (True = masked)."""
    tokens: torch.Tensor
    mask: torch.Tensor

    @property
    def patch_count(self) -> int:
        return int(self.tokens.shape[-2]) - 3


class _MiniViTLayer(nn.Module):
    def __init__(self, dim: int, heads: int, dropout: float):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, heads, dropout=dropout,
                                          batch_first=True)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(nn.Linear(dim, 2 * dim), nn.GELU(),
                                 nn.Dropout(dropout), nn.Linear(2 * dim, dim))

    def forward(self, x, key_padding_mask):
        h = self.norm1(x)
        a, _ = self.attn(h, h, h, key_padding_mask=key_padding_mask,
                         need_weights=False)
        x = x + a
        return x + self.mlp(self.norm2(x))


class ImageEncoder(nn.Module):
    """Small convolutional feature extractor, grid-cropped into patch
    tokens, refined by a tiny transformer with a learned global token.

    Dropped patches are excluded from the transformer context entirely.
    """

    def __init__(self, config: ConditionEncoderConfig):
        super().__init__()
        self.config = config
        d = config.token_dim
        widths = (16, 32, 64)
        layers = []
        c_in = config.image_channels
        for w in widths:
            layers += [nn.Conv2d(c_in, w, 3, stride=2, padding=1), nn.SiLU()]
            c_in = w
        layers += [nn.Conv2d(c_in, d, 3, stride=2, padding=1)]
        self.cnn = nn.Sequential(*layers)
        self.pool = nn.AdaptiveAvgPool2d(config.patch_grid)
        self.global_token = nn.Parameter(0.02 * torch.randn(d))
        self.pos = nn.Parameter(0.02 * torch.randn(config.patch_count + 1, d))
        self.vit = nn.ModuleList([
            _MiniViTLayer(d, config.vit_heads, config.dropout)
            for _ in range(config.vit_layers)])

    def forward(self, image: torch.Tensor, patch_keep: torch.Tensor | None = None):
        """(B, H, W, C) images -> ((B, P+1, D) tokens, (B, P+1) mask)."""
        if image.dim() == 3:
            image = image.unsqueeze(0)
        b, h, w, c = image.shape
        cfg = self.config
        if (h, w, c) != (cfg.image_size, cfg.image_size, cfg.image_channels):
            raise InputError(
                f"expected ({cfg.image_size}, {cfg.image_size}, "
                f"{cfg.image_channels}) image, got {(h, w, c)}")
        feats = self.pool(self.cnn(image.permute(0, 3, 1, 2)))
        patches = feats.flatten(2).transpose(1, 2)  # (B, P, D)
        g = self.global_token[None, None, :].expand(b, 1, -1)
        x = torch.cat([patches, g], dim=1) + self.pos[None]
        if patch_keep is None:
            drop = torch.zeros(b, cfg.patch_count, dtype=torch.bool,
                               device=image.device)
        else:
            drop = ~patch_keep.reshape(b, cfg.patch_count)
        pad = torch.cat([drop, torch.zeros(b, 1, dtype=torch.bool,
                                           device=image.device)], dim=1)
        for layer in self.vit:
            x = layer(x, key_padding_mask=pad)
        # reorder to [P patches, global]; mask mirrors the dropped patches
        return x, pad


class SkeletonEncoder(nn.Module):
    """Three-layer MLP over flattened (coords, flag) joints; invalid joints
    are zeroed before encoding."""

    def __init__(self, coords: int, config: ConditionEncoderConfig):
        super().__init__()
        self.coords = coords
        d_in = NUM_JOINTS * (coords + 1)
        h = config.mlp_hidden
        self.mlp = nn.Sequential(
            nn.Linear(d_in, h), nn.GELU(), nn.Dropout(config.dropout),
            nn.Linear(h, h), nn.GELU(), nn.Dropout(config.dropout),
            nn.Linear(h, config.token_dim))

    def forward(self, joints: torch.Tensor, flags: torch.Tensor) -> torch.Tensor:
        if joints.dim() == 2:
            joints, flags = joints.unsqueeze(0), flags.unsqueeze(0)
        if joints.shape[-2] != NUM_JOINTS:
            raise InputError(f"expected 21 joints, got {joints.shape[-2]}")
        gated = joints * flags[..., None]
        flat = torch.cat([gated.flatten(1), flags], dim=1)
        return self.mlp(flat)


class ConditionEncoder(nn.Module):
    """Maps a ConditionBundle into the stacked (P+3, D) token matrix."""

    def __init__(self, config: ConditionEncoderConfig):
        super().__init__()
        self.config = config
        self.image_encoder = ImageEncoder(config)
        self.skel2d_encoder = SkeletonEncoder(2, config)
        self.skel3d_encoder = SkeletonEncoder(3, config)

    def _normalize_2d(self, px: np.ndarray) -> torch.Tensor:
        half = self.config.image_size / 2.0
        return torch.from_numpy(((px - half) / half).astype(np.float32))

    def _normalize_3d(self, mm: np.ndarray) -> torch.Tensor:
        c = np.asarray(self.config.space_center)
        return torch.from_numpy(
            ((mm - c) / self.config.space_scale).astype(np.float32))

    def encode_image(self, image: np.ndarray,
                     patch_keep: np.ndarray | None = None):
        t = torch.from_numpy(np.asarray(image, dtype=np.float32))
        keep = None if patch_keep is None \
            else torch.from_numpy(np.asarray(patch_keep, dtype=bool))
        tokens, mask = self.image_encoder(t, keep)
        return tokens[0], mask[0]

    def encode_skel2d(self, joints2d: np.ndarray, confidence: np.ndarray):
        j = self._normalize_2d(np.asarray(joints2d, dtype=np.float64))
        f = torch.from_numpy(np.asarray(confidence, dtype=np.float32))
        return self.skel2d_encoder(j, f)[0]

    def encode_skel3d(self, joints3d: np.ndarray, validity: np.ndarray):
        j = self._normalize_3d(np.asarray(joints3d, dtype=np.float64)).float()
        f = torch.from_numpy(np.asarray(validity, dtype=np.float32))
        return self.skel3d_encoder(j, f)[0]

    def assemble_tokens(self, bundle: ConditionBundle) -> ConditionTokens:
        """Token matrix for one bundle; absent modalities give fully masked
        rows (zeros), so the empty bundle yields an all-masked stack."""
        bundle = bundle.with_defaults()
        cfg = self.config
        p = cfg.patch_count
        d = cfg.token_dim
        tokens = torch.zeros(p + 3, d)
        mask = torch.ones(p + 3, dtype=torch.bool)
        if bundle.image is not None:
            img_tokens, img_mask = self.encode_image(bundle.image,
                                                     bundle.patch_keep)
            tokens[:p + 1] = img_tokens
            mask[:p + 1] = img_mask
        if bundle.skel2d is not None:
            tokens[p + 1] = self.encode_skel2d(bundle.skel2d,
                                               bundle.skel2d_confidence)
            mask[p + 1] = False
        if bundle.skel3d is not None:
            tokens[p + 2] = self.encode_skel3d(bundle.skel3d,
                                               bundle.skel3d_validity)
            mask[p + 2] = False
        return ConditionTokens(tokens=tokens, mask=mask)

    def assemble_batch(self, bundles: list[ConditionBundle]) -> ConditionTokens:
        """Batched encoding: each modality runs once over its present
        samples, then scatters into the stacked token matrix."""
        bundles = [b.with_defaults() for b in bundles]
        cfg = self.config
        p = cfg.patch_count
        b = len(bundles)
        tokens = torch.zeros(b, p + 3, cfg.token_dim)
        mask = torch.ones(b, p + 3, dtype=torch.bool)

        img_idx = [i for i, bd in enumerate(bundles) if bd.image is not None]
        if img_idx:
            imgs = torch.from_numpy(np.stack(
                [bundles[i].image for i in img_idx]).astype(np.float32))
            keeps = torch.from_numpy(np.stack([
                bundles[i].patch_keep if bundles[i].patch_keep is not None
                else np.ones(p, dtype=bool) for i in img_idx]))
            img_tokens, img_mask = self.image_encoder(imgs, keeps)
            for row, i in enumerate(img_idx):
                tokens[i, :p + 1] = img_tokens[row]
                mask[i, :p + 1] = img_mask[row]

        s2_idx = [i for i, bd in enumerate(bundles) if bd.skel2d is not None]
        if s2_idx:
            joints = self._normalize_2d(np.stack(
                [bundles[i].skel2d for i in s2_idx]).astype(np.float64))
            flags = torch.from_numpy(np.stack(
                [bundles[i].skel2d_confidence for i in s2_idx]
            ).astype(np.float32))
            out = self.skel2d_encoder(joints, flags)
            for row, i in enumerate(s2_idx):
                tokens[i, p + 1] = out[row]
                mask[i, p + 1] = False

        s3_idx = [i for i, bd in enumerate(bundles) if bd.skel3d is not None]
        if s3_idx:
            joints = self._normalize_3d(np.stack(
                [bundles[i].skel3d for i in s3_idx]).astype(np.float64)).float()
            flags = torch.from_numpy(np.stack(
                [bundles[i].skel3d_validity for i in s3_idx]
            ).astype(np.float32))
            out = self.skel3d_encoder(joints, flags)
            for row, i in enumerate(s3_idx):
                tokens[i, p + 2] = out[row]
                mask[i, p + 2] = False
        return ConditionTokens(tokens=tokens, mask=mask)
