"""Training loop: batch assembly with random condition masking, uniform
timestep draws, forward noising, x0 prediction, weighted losses, AdamW
with cosine annealing, periodic held-out validation and checkpointing."""

from __future__ import annotations

import json
import math
import time
from pathlib import Path

import numpy as np
import torch

from .conditions import ConditionBundle, ConditionEncoder, apply_random_masks
from .diffusion import make_schedule
from .errors import NumericError, StorageError
from .io.checkpoint import save_checkpoint
from .io.config import RunConfig, config_hash
from .losses import joint_matrix, total_loss
from .mesh import build_pooling_hierarchy
from .metrics import pa_error
from .net import build_denoiser, parameter_count
from .rig import build_template, load_regressor, load_split
from .tasks import PriorModel, reconstruct


def _cosine_lr(step: int, total: int, lr: float, lr_final: float) -> float:
    if total <= 1:
        return lr_final
    t = min(step / max(total - 1, 1), 1.0)
    return lr_final + 0.5 * (lr - lr_final) * (1.0 + math.cos(math.pi * t))


def _bundle_from_sample(sample) -> ConditionBundle:
    return ConditionBundle(
        image=sample.image,
        skel2d=sample.joints2d, skel2d_confidence=sample.joint_confidence,
        skel3d=sample.joints3d,
        skel3d_validity=np.ones(sample.joints3d.shape[0]))


def run_train(config: RunConfig, dataset_dir, out_dir,
              resume: str | None = None, log_every: int = 50,
              quiet: bool = False):
    """Train on a generated dataset; returns the final checkpoint path.

    Emits `checkpoint-<step>.zip` snapshots plus `train_log.jsonl` under
    ``out_dir``. Deterministic given the config seeds up to platform
    float reduction order.
    """
    config.validate()
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise StorageError(f"cannot create output dir {out}: {exc}") from exc

    rig = build_template(config.dataset.rig)
    regressor = load_regressor(dataset_dir)
    train_set = load_split(dataset_dir, "train")
    val_set = load_split(dataset_dir, "val")
    schedule = make_schedule(config.schedule.steps, config.schedule.kind,
                             config.schedule.beta_start,
                             config.schedule.beta_end)
    hierarchy = build_pooling_hierarchy(rig.topology, config.model.levels - 1,
                                        rig.template_vertices)

    torch.manual_seed(config.seeds.init)
    denoiser = build_denoiser(config.model, rig.topology, hierarchy,
                              seed=config.seeds.init)
    encoder = ConditionEncoder(config.encoder)

    start_step = 0
    metric_history = []
    if resume is not None:
        from .io.checkpoint import load_checkpoint
        loaded = load_checkpoint(resume)
        denoiser.load_state_dict(loaded.denoiser.state_dict())
        encoder.load_state_dict(loaded.encoder.state_dict())
        start_step = loaded.step
        metric_history = list(loaded.metric_history)

    params = list(denoiser.parameters()) + list(encoder.parameters())
    optimizer = torch.optim.AdamW(params, lr=config.optimizer.lr,
                                  weight_decay=config.optimizer.weight_decay)
    joint_mat = joint_matrix(regressor)

    center = np.asarray(config.dataset.placement.center)
    scale = config.encoder.space_scale
    norm_verts = np.stack([(s.vertices - center) / scale for s in train_set])
    norm_verts = torch.from_numpy(norm_verts.astype(np.float32))
    # geometric losses are computed in the same normalized space
    norm_topology = rig.topology

    rng = np.random.default_rng(
        np.random.SeedSequence((config.seeds.data, start_step)))
    log_path = out / "train_log.jsonl"
    log_fh = open(log_path, "a")
    cfg_hash = config_hash(config)

    def emit_checkpoint(step):
        path = out / f"checkpoint-{step:07d}.zip"
        save_checkpoint(path, config, step, denoiser, encoder, schedule,
                        rig.topology, hierarchy, regressor, metric_history)
        return path

    def validate(step):
        model = PriorModel(denoiser=denoiser, encoder=encoder,
                           schedule=schedule, regressor=regressor,
                           topology=rig.topology, center=center, scale=scale)
        denoiser.eval()
        encoder.eval()
        errs = []
        k = min(config.optimizer.val_samples, len(val_set))
        for s in val_set[:k]:
            if s.image is None:
                continue
            hyp = reconstruct(model, s.image, n=1,
                              seed=config.seeds.sampling,
                              num_steps=config.optimizer.val_steps)
            _, mpvpe = pa_error(hyp.meshes, s.vertices, regressor)
            errs.append(float(mpvpe[0]))
        denoiser.train()
        encoder.train()
        return float(np.mean(errs)) if errs else float("nan")

    last_good = emit_checkpoint(start_step)
    if config.optimizer.total_steps <= start_step:
        log_fh.close()
        return last_good

    denoiser.train()
    encoder.train()
    n_train = len(train_set)
    patch_count = config.encoder.patch_count
    t_start = time.time()
    for step in range(start_step, config.optimizer.total_steps):
        lr = _cosine_lr(step, config.optimizer.total_steps,
                        config.optimizer.lr, config.optimizer.lr_final)
        for g in optimizer.param_groups:
            g["lr"] = lr
        idx = rng.integers(0, n_train, size=config.optimizer.batch_size)
        bundles = []
        for i in idx:
            masked, _ = apply_random_masks(_bundle_from_sample(train_set[i]),
                                           config.masks, rng, patch_count)
            bundles.append(masked)
        tokens = encoder.assemble_batch(bundles)
        x0 = norm_verts[idx]
        ts = rng.integers(1, schedule.T + 1, size=len(idx))
        ab = schedule.alpha_bars[ts - 1]
        noise = torch.from_numpy(
            rng.standard_normal(x0.shape).astype(np.float32))
        c1 = torch.from_numpy(np.sqrt(ab).astype(np.float32))[:, None, None]
        c2 = torch.from_numpy(np.sqrt(1.0 - ab).astype(np.float32))[:, None, None]
        x_t = c1 * x0 + c2 * noise

        x0_pred = denoiser(x_t, torch.from_numpy(ts), tokens.tokens,
                           tokens.mask)
        loss, breakdown = total_loss(x0_pred, x0, joint_mat, norm_topology,
                                     config.loss_weights)
        if not torch.isfinite(loss):
            log_fh.write(json.dumps({"step": step, "event": "abort",
                                     "reason": "non-finite loss"}) + "\n")
            log_fh.close()
            raise NumericError(
                f"non-finite loss at step {step}; last good checkpoint: "
                f"{last_good}")
        optimizer.zero_grad()
        loss.backward()
        if config.optimizer.grad_clip > 0:
            torch.nn.utils.clip_grad_norm_(params, config.optimizer.grad_clip)
        optimizer.step()

        done = step + 1
        if done % log_every == 0 or done == config.optimizer.total_steps:
            rec = {"step": done, "loss": float(loss.detach()), "lr": lr,
                   "terms": breakdown, "config": cfg_hash,
                   "elapsed_s": round(time.time() - t_start, 1)}
            log_fh.write(json.dumps(rec) + "\n")
            log_fh.flush()
            if not quiet:
                print(f"step {done}: loss {rec['loss']:.4f} lr {lr:.2e}")
        if done % config.optimizer.validate_every == 0 \
                or done == config.optimizer.total_steps:
            val = validate(done)
            metric_history.append({"step": done, "pa_mpvpe_mm": val})
            log_fh.write(json.dumps({"step": done, "val_pa_mpvpe": val}) + "\n")
            log_fh.flush()
            if not quiet:
                print(f"step {done}: val PA-MPVPE {val:.2f} mm")
        if done % config.optimizer.checkpoint_every == 0 \
                or done == config.optimizer.total_steps:
            last_good = emit_checkpoint(done)
    log_fh.close()
    return last_good


def smoothed_loss_curve(log_path, window: int = 200):
    """(steps, smoothed loss) from a training log; window in steps."""
    steps, losses = [], []
    for line in Path(log_path).read_text().splitlines():
        rec = json.loads(line)
        if "loss" in rec:
            steps.append(rec["step"])
            losses.append(rec["loss"])
    steps = np.array(steps)
    losses = np.array(losses)
    sm = np.array([
        losses[(steps > s - window) & (steps <= s)].mean() for s in steps])
    return steps, sm
