"""The single human-readable run configuration: every sub-config, all three
seeds, and a stable content hash embedded in output manifests."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..conditions import ConditionEncoderConfig, MaskConfig
from ..diffusion import SamplerConfig
from ..errors import ConfigurationError, StorageError
from ..losses import LossWeights
from ..net import DenoiserConfig
from ..rig import DatasetConfig, FingerSpec, PlacementConfig, RigConfig
from ..rig.template import TOY_RIG


@dataclass(frozen=True)
class ScheduleConfig:
    steps: int = 1000
    kind: str = "linear"
    beta_start: float = 1e-4
    beta_end: float = 0.02


@dataclass(frozen=True)
class OptimizerConfig:
    batch_size: int = 16
    total_steps: int = 20000
    lr: float = 2e-4
    lr_final: float = 1e-5
    weight_decay: float = 1e-4
    grad_clip: float = 0.0   # max gradient norm; 0 disables clipping
    checkpoint_every: int = 5000
    validate_every: int = 2500
    val_samples: int = 12
    val_steps: int = 10


@dataclass(frozen=True)
class Seeds:
    data: int = 0
    init: int = 1
    sampling: int = 2


@dataclass(frozen=True)
class RunConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: DenoiserConfig = field(default_factory=DenoiserConfig)
    encoder: ConditionEncoderConfig = field(default_factory=ConditionEncoderConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    masks: MaskConfig = field(default_factory=MaskConfig)
    loss_weights: LossWeights = field(default_factory=LossWeights)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    seeds: Seeds = field(default_factory=Seeds)

    def validate(self) -> None:
        if self.model.token_dim != self.encoder.token_dim:
            raise ConfigurationError(
                f"model token_dim {self.model.token_dim} != encoder "
                f"{self.encoder.token_dim}")
        if self.encoder.image_size != self.dataset.image_size:
            raise ConfigurationError(
                f"encoder image size {self.encoder.image_size} != dataset "
                f"{self.dataset.image_size}")
        if tuple(self.encoder.space_center) != tuple(self.dataset.placement.center):
            raise ConfigurationError(
                "encoder space_center must match the dataset placement center")


def _to_plain(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _to_plain(getattr(obj, f.name))
                for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {k: _to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(v) for v in obj]
    return obj


def config_to_dict(config: RunConfig) -> dict:
    return _to_plain(config)


def config_hash(config: RunConfig) -> str:
    payload = json.dumps(config_to_dict(config), sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _tupled(d: dict, *keys):
    for k in keys:
        if k in d and isinstance(d[k], list):
            d[k] = tuple(d[k])
    return d


def config_from_dict(d: dict) -> RunConfig:
    d = dict(d)
    rig_d = dict(d["dataset"]["rig"])
    fingers = {name: FingerSpec(**_tupled(dict(fs), "knuckle", "lengths"))
               for name, fs in rig_d.pop("fingers").items()}
    rig = RigConfig(fingers=fingers,
                    **_tupled(rig_d, "tip_cap_offsets", "mcp_flex_range",
                              "mcp_abd_range", "pip_flex_range",
                              "dip_flex_range"))
    ds_d = dict(d["dataset"])
    ds_d["rig"] = rig
    ds_d["placement"] = PlacementConfig(
        **_tupled(dict(ds_d["placement"]), "center", "scale_range"))
    dataset = DatasetConfig(**ds_d)
    model = DenoiserConfig(**_tupled(dict(d["model"]), "channels"))
    encoder = ConditionEncoderConfig(
        **_tupled(dict(d["encoder"]), "space_center"))
    return RunConfig(
        dataset=dataset, model=model, encoder=encoder,
        schedule=ScheduleConfig(**d["schedule"]),
        masks=MaskConfig(**d["masks"]),
        loss_weights=LossWeights(**d["loss_weights"]),
        optimizer=OptimizerConfig(**d["optimizer"]),
        sampler=SamplerConfig(**d["sampler"]),
        seeds=Seeds(**d["seeds"]),
    )


def save_config(config: RunConfig, path) -> None:
    try:
        Path(path).write_text(yaml.safe_dump(config_to_dict(config),
                                             sort_keys=True))
    except OSError as exc:
        raise StorageError(f"cannot write config {path}: {exc}") from exc


def load_config(path) -> RunConfig:
    p = Path(path)
    if not p.exists():
        raise StorageError(f"no config file at {p}")
    cfg = config_from_dict(yaml.safe_load(p.read_text()))
    cfg.validate()
    return cfg


def toy_profile() -> RunConfig:
    """Desk-scale profile: tiny rig and model, CPU-trainable in under two
    hours. Global rotations are limited (not uniform) so the conditional
    task stays learnable at this budget."""
    dataset = DatasetConfig(rig=TOY_RIG, image_size=64,
                            placement=PlacementConfig(rotation="limited",
                                                      rotation_limit=1.0))
    model = DenoiserConfig(levels=3, channels=(24, 48, 64), cheb_order=3,
                           heads=4, token_dim=64, time_dim=64)
    encoder = ConditionEncoderConfig(token_dim=64, image_size=64, patch_grid=8,
                                     dropout=0.0)
    optimizer = OptimizerConfig(batch_size=16, total_steps=20000,
                                lr=8e-4, lr_final=1e-5)
    return RunConfig(dataset=dataset, model=model, encoder=encoder,
                     optimizer=optimizer)


def paper_profile() -> RunConfig:
    """The published training regime (documentation; far beyond desk scale)."""
    dataset = DatasetConfig(rig=RigConfig(), image_size=128)
    model = DenoiserConfig(levels=3, channels=(64, 128, 256), cheb_order=3,
                           heads=4, token_dim=128, time_dim=128)
    encoder = ConditionEncoderConfig(token_dim=128, image_size=128,
                                     patch_grid=8)
    optimizer = OptimizerConfig(batch_size=64, total_steps=1_000_000,
                                lr=5e-4, lr_final=1e-5)
    return RunConfig(dataset=dataset, model=model, encoder=encoder,
                     optimizer=optimizer)
