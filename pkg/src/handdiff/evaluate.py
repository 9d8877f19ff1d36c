"""Evaluation protocols: generation diversity/realism over a sampled set,
and the reconstruction grid over denoising-step and hypothesis counts with
minimum-error aggregation."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import InputError
from .io.checkpoint import LoadedCheckpoint
from .io.config import config_hash
from .kernel import kernel_available, si_dispatch
from .metrics import EvalReport, apd, min_over_hypotheses, pa_error
from .rig import load_split
from .tasks import generate, reconstruct

GENERATION_COUNT = 500
RECONSTRUCTION_STEPS = (10, 25, 50)
RECONSTRUCTION_HYPOTHESES = (8, 16, 32)


def eval_generation(loaded: LoadedCheckpoint, n: int = GENERATION_COUNT,
                    seed: int = 0, num_steps: int = 50,
                    si_meshes: int | None = 50) -> list[EvalReport]:
    """APD and mean SI over ``n`` unconditional samples.

    SI is O(F^2) per mesh; ``si_meshes`` caps how many sampled meshes feed
    the SI average (None = all). Records which SI path ran.
    """
    model = loaded.prior_model()
    hyp = generate(model, n=n, seed=seed, num_steps=num_steps)
    cfg = config_hash(loaded.config)
    reports = [EvalReport(metric="apd", value=apd(hyp.meshes), units="mm",
                          n=n, steps=num_steps, seed=seed, config_hash=cfg)]
    k = n if si_meshes is None else min(si_meshes, n)
    rates = []
    for mesh in hyp.meshes[:k]:
        hits, path = si_dispatch(mesh, loaded.topology)
        rates.append(100.0 * len(hits) / loaded.topology.face_count)
    reports.append(EvalReport(metric="si", value=float(np.mean(rates)),
                              units="percent", n=k, steps=num_steps,
                              seed=seed, config_hash=cfg,
                              extra={"path": path,
                                     "kernel_available": kernel_available()}))
    return reports


def eval_reconstruction(loaded: LoadedCheckpoint, dataset_dir,
                        steps_grid=RECONSTRUCTION_STEPS,
                        hypothesis_grid=RECONSTRUCTION_HYPOTHESES,
                        max_images: int = 10, seed: int = 0) -> list[EvalReport]:
    """Min-over-hypotheses PA errors on the test split, over the full
    (steps x hypotheses) grid; nested prefixes share trajectories."""
    model = loaded.prior_model()
    test = [s for s in load_split(dataset_dir, "test") if s.image is not None]
    if not test:
        raise InputError("test split has no image records")
    test = test[:max_images]
    cfg = config_hash(loaded.config)
    n_max = max(hypothesis_grid)
    reports = []
    for steps in steps_grid:
        per_image = {n: {"mpjpe": [], "mpvpe": []} for n in hypothesis_grid}
        for sample in test:
            hyp = reconstruct(model, sample.image, n=n_max, seed=seed,
                              num_steps=steps)
            mpjpe, mpvpe = pa_error(hyp.meshes, sample.vertices,
                                    loaded.regressor)
            for n in hypothesis_grid:
                per_image[n]["mpjpe"].append(min_over_hypotheses(mpjpe[:n]))
                per_image[n]["mpvpe"].append(min_over_hypotheses(mpvpe[:n]))
        for n in hypothesis_grid:
            reports.append(EvalReport(
                metric="min_pa_mpjpe", value=float(np.mean(per_image[n]["mpjpe"])),
                units="mm", n=n, steps=steps, seed=seed, config_hash=cfg))
            reports.append(EvalReport(
                metric="min_pa_mpvpe", value=float(np.mean(per_image[n]["mpvpe"])),
                units="mm", n=n, steps=steps, seed=seed, config_hash=cfg))
    return reports


def write_reports(reports: list[EvalReport], path) -> None:
    Path(path).write_text("\n".join(r.to_json() for r in reports) + "\n")


def summarize(path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines()
            if line.strip()]
