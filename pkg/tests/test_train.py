import dataclasses
import json

import numpy as np
import pytest

from handdiff.io import load_checkpoint, toy_profile
from handdiff.rig import generate_dataset
from handdiff.train import run_train, smoothed_loss_curve


@pytest.fixture(scope="module")
def tiny_setup(tmp_path_factory):
    root = tmp_path_factory.mktemp("train")
    cfg = toy_profile()
    cfg = dataclasses.replace(
        cfg,
        model=dataclasses.replace(cfg.model, channels=(8, 16, 16), heads=2,
                                  token_dim=16, time_dim=16),
        encoder=dataclasses.replace(cfg.encoder, token_dim=16, vit_layers=1,
                                    vit_heads=2, mlp_hidden=16),
        optimizer=dataclasses.replace(cfg.optimizer, total_steps=4,
                                      batch_size=2, checkpoint_every=2,
                                      validate_every=4, val_samples=1,
                                      val_steps=2),
        schedule=dataclasses.replace(cfg.schedule, steps=50))
    generate_dataset(12, 5, (0.8, 0.1, 0.1), root / "ds", config=cfg.dataset)
    return root, cfg


def test_zero_steps_emits_initial_checkpoint(tiny_setup):
    root, cfg = tiny_setup
    cfg0 = dataclasses.replace(
        cfg, optimizer=dataclasses.replace(cfg.optimizer, total_steps=0))
    final = run_train(cfg0, root / "ds", root / "zero", quiet=True)
    loaded = load_checkpoint(final)
    assert loaded.step == 0


def test_training_updates_and_logs(tiny_setup):
    root, cfg = tiny_setup
    final = run_train(cfg, root / "ds", root / "run", quiet=True,
                      log_every=1)
    loaded = load_checkpoint(final)
    assert loaded.step == 4
    assert len(loaded.metric_history) == 1
    log = (root / "run" / "train_log.jsonl").read_text().splitlines()
    losses = [json.loads(x) for x in log if "loss" in json.loads(x)]
    assert len(losses) == 4
    steps, sm = smoothed_loss_curve(root / "run" / "train_log.jsonl")
    assert len(steps) == 4
    # initial checkpoint also present
    assert (root / "run" / "checkpoint-0000000.zip").exists()
    # parameters actually changed from the step-0 snapshot
    import torch
    first = load_checkpoint(root / "run" / "checkpoint-0000000.zip")
    changed = any(
        not torch.equal(a, b)
        for a, b in zip(first.denoiser.state_dict().values(),
                        loaded.denoiser.state_dict().values()))
    assert changed


def test_resume_continues_monotonically(tiny_setup):
    root, cfg = tiny_setup
    cfg8 = dataclasses.replace(
        cfg, optimizer=dataclasses.replace(cfg.optimizer, total_steps=6))
    final = run_train(cfg8, root / "ds", root / "resumed", quiet=True,
                      resume=str(root / "run" / "checkpoint-0000004.zip"))
    loaded = load_checkpoint(final)
    assert loaded.step == 6
    assert [m["step"] for m in loaded.metric_history] == [4, 6]
