"""Command-line entry point.

Subcommands: dataset, train, generate, inpaint-mesh, inpaint-skel,
reconstruct, fit2d, eval, export. Exit codes: 0 ok, 2 usage, 3 data,
4 numeric. HANDDIFF_WORKERS caps torch thread use.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import errors
from .io.config import (RunConfig, config_hash, load_config, save_config,
                        toy_profile)

USAGE_EXIT = 2
DATA_EXIT = 3
NUMERIC_EXIT = 4


def _load_run_config(path: str | None) -> RunConfig:
    if path is None:
        return toy_profile()
    return load_config(path)


def _load_model(checkpoint_path: str):
    from .io.checkpoint import load_checkpoint
    loaded = load_checkpoint(checkpoint_path)
    return loaded, loaded.prior_model()


def _write_manifest(out_dir: Path, payload: dict) -> None:
    payload = dict(payload)
    payload["written_unix"] = time.time()
    (out_dir / "manifest.json").write_text(
        json.dumps(payload, sort_keys=True, indent=1))


def _export_hypotheses(hyp, topology, out_dir: Path, fmt: str = "obj"):
    from .io.meshio import export_mesh
    names = []
    for i, mesh in enumerate(hyp.meshes):
        name = f"hypothesis-{i:03d}.{fmt}"
        export_mesh(mesh, topology.faces, fmt, out_dir / name)
        names.append(name)
    return names


def _task_manifest(hyp, loaded, names, observation: dict) -> dict:
    return {
        "config_hash": config_hash(loaded.config),
        "checkpoint_step": loaded.step,
        "schedule_fingerprint": loaded.schedule.fingerprint(),
        "seed": hyp.seed,
        "sampler": {"num_steps": hyp.sampler.num_steps, "eta": hyp.sampler.eta,
                    "guidance_scale": hyp.sampler.guidance_scale,
                    "hypotheses": hyp.sampler.hypotheses,
                    "method": hyp.sampler.method},
        "meshes": names,
        "observation": observation,
        "extras": hyp.extras,
        "residual_traces": hyp.residual_traces,
    }


def cmd_dataset(args) -> int:
    from .rig import generate_dataset
    config = _load_run_config(args.config)
    manifest = generate_dataset(args.n, args.seed,
                                tuple(args.split_ratios), args.out,
                                config=config.dataset)
    print(f"wrote {manifest['n']} records to {args.out} "
          f"(rig {manifest['rig_fingerprint']})")
    return 0


def cmd_train(args) -> int:
    from .train import run_train
    config = _load_run_config(args.config)
    if args.steps is not None:
        import dataclasses
        config = dataclasses.replace(
            config, optimizer=dataclasses.replace(config.optimizer,
                                                  total_steps=args.steps))
    final = run_train(config, args.dataset, args.out, resume=args.resume)
    print(f"final checkpoint: {final}")
    return 0


def cmd_generate(args) -> int:
    from .tasks import generate
    loaded, model = _load_model(args.checkpoint)
    hyp = generate(model, n=args.n, seed=args.seed, num_steps=args.steps)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = _export_hypotheses(hyp, loaded.topology, out)
    _write_manifest(out, _task_manifest(hyp, loaded, names, {"condition": "none"}))
    print(f"wrote {len(names)} meshes to {out}")
    return 0


def _load_observation(path: str) -> dict:
    with np.load(path) as data:
        return {k: data[k] for k in data.files}


def cmd_inpaint_mesh(args) -> int:
    from .tasks import inpaint_mesh
    loaded, model = _load_model(args.checkpoint)
    obs = _load_observation(args.observation)
    if "vertices" not in obs or "vertex_mask" not in obs:
        raise errors.UsageError(
            "observation must be an .npz with 'vertices' (V,3 mm) and "
            "'vertex_mask' (V bool)")
    hyp = inpaint_mesh(model, obs["vertices"].astype(np.float64),
                       obs["vertex_mask"].astype(bool), n=args.n,
                       scale=args.scale, seed=args.seed, num_steps=args.steps)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = _export_hypotheses(hyp, loaded.topology, out)
    _write_manifest(out, _task_manifest(hyp, loaded, names,
                                        {"condition": "partial-mesh"}))
    print(f"wrote {len(names)} completions to {out}")
    return 0


def cmd_inpaint_skel(args) -> int:
    from .tasks import inpaint_skeleton
    loaded, model = _load_model(args.checkpoint)
    obs = _load_observation(args.observation)
    if "joints3d" not in obs or "joint_mask" not in obs:
        raise errors.UsageError(
            "observation must be an .npz with 'joints3d' (21,3 mm) and "
            "'joint_mask' (21 bool)")
    hyp = inpaint_skeleton(model, obs["joints3d"].astype(np.float64),
                           obs["joint_mask"].astype(bool), n=args.n,
                           scale=args.scale, seed=args.seed,
                           num_steps=args.steps)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = _export_hypotheses(hyp, loaded.topology, out)
    _write_manifest(out, _task_manifest(hyp, loaded, names,
                                        {"condition": "partial-skeleton"}))
    print(f"wrote {len(names)} completions to {out}")
    return 0


def cmd_reconstruct(args) -> int:
    from .metrics import min_over_hypotheses, pa_error
    from .tasks import reconstruct
    loaded, model = _load_model(args.checkpoint)
    obs = _load_observation(args.observation)
    if "image" not in obs:
        raise errors.UsageError(
            "observation must be an .npz with 'image' (H,W,2); optional "
            "'vertices' enables error reporting")
    hyp = reconstruct(model, obs["image"].astype(np.float32), n=args.n,
                      seed=args.seed, num_steps=args.steps)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = _export_hypotheses(hyp, loaded.topology, out)
    manifest = _task_manifest(hyp, loaded, names, {"condition": "image"})
    if "vertices" in obs:
        mpjpe, mpvpe = pa_error(hyp.meshes, obs["vertices"].astype(np.float64),
                                loaded.regressor)
        manifest["pa_mpjpe_mm"] = mpjpe.tolist()
        manifest["pa_mpvpe_mm"] = mpvpe.tolist()
        manifest["min_pa_mpjpe_mm"] = min_over_hypotheses(mpjpe)
        manifest["min_pa_mpvpe_mm"] = min_over_hypotheses(mpvpe)
    _write_manifest(out, manifest)
    print(f"wrote {len(names)} hypotheses to {out}")
    return 0


def cmd_fit2d(args) -> int:
    from .rig import Camera
    from .tasks import fit2d
    loaded, model = _load_model(args.checkpoint)
    obs = _load_observation(args.observation)
    needed = {"joints2d", "confidence", "camera_focal", "camera_principal",
              "camera_image_size"}
    if not needed.issubset(obs):
        raise errors.UsageError(
            "observation must be an .npz with joints2d (21,2 px), confidence "
            "(21,), camera_focal, camera_principal, camera_image_size; "
            "optional image")
    camera = Camera(
        focal=tuple(obs["camera_focal"].astype(float)),
        principal=tuple(obs["camera_principal"].astype(float)),
        image_size=tuple(int(x) for x in obs["camera_image_size"]))
    image = obs["image"].astype(np.float32) if "image" in obs else None
    hyp = fit2d(model, obs["joints2d"].astype(np.float64),
                obs["confidence"].astype(np.float64), camera, n=args.n,
                scale=args.scale, seed=args.seed, image=image,
                num_steps=args.steps)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = _export_hypotheses(hyp, loaded.topology, out)
    _write_manifest(out, _task_manifest(hyp, loaded, names,
                                        {"condition": "skel2d"
                                         + ("+image" if image is not None
                                            else "")}))
    print(f"wrote {len(names)} fits to {out}")
    return 0


def cmd_eval(args) -> int:
    from .evaluate import (eval_generation, eval_reconstruction,
                           write_reports)
    loaded, _ = _load_model(args.checkpoint)
    if args.protocol == "generation":
        reports = eval_generation(loaded, n=args.n, seed=args.seed,
                                  num_steps=args.steps)
    else:
        reports = eval_reconstruction(loaded, args.dataset,
                                      max_images=args.max_images,
                                      seed=args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_reports(reports, out)
    for r in reports:
        print(r.to_json())
    return 0


def cmd_export(args) -> int:
    from .io.meshio import export_mesh, import_mesh
    verts, faces = import_mesh(args.input)
    export_mesh(verts, faces, args.format, args.out)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="handdiff",
        description="Graph-diffusion hand mesh toolkit: dataset generation, "
                    "training, sampling tasks and evaluation.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, checkpoint=True):
        if checkpoint:
            sp.add_argument("--checkpoint", required=True)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", required=True)
        sp.add_argument("--steps", type=int, default=10,
                        help="denoising steps")
        sp.add_argument("--n", type=int, default=1, help="hypotheses")
        sp.add_argument("--scale", type=float, default=1.0,
                        help="guidance scale")

    sp = sub.add_parser("dataset", help="generate a synthetic dataset")
    sp.add_argument("--config")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.add_argument("--split-ratios", type=float, nargs=3,
                    default=(0.8, 0.1, 0.1))
    sp.set_defaults(func=cmd_dataset)

    sp = sub.add_parser("train", help="train the prior")
    sp.add_argument("--config")
    sp.add_argument("--dataset", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--steps", type=int, default=None,
                    help="override total training steps")
    sp.add_argument("--resume")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("generate", help="unconditional sampling")
    common(sp)
    sp.set_defaults(func=cmd_generate, steps=50)

    sp = sub.add_parser("inpaint-mesh", help="complete a partial mesh")
    common(sp)
    sp.add_argument("--observation", required=True)
    sp.set_defaults(func=cmd_inpaint_mesh, steps=50)

    sp = sub.add_parser("inpaint-skel", help="complete a partial 3D skeleton")
    common(sp)
    sp.add_argument("--observation", required=True)
    sp.set_defaults(func=cmd_inpaint_skel, steps=50)

    sp = sub.add_parser("reconstruct", help="image-conditional reconstruction")
    common(sp)
    sp.add_argument("--observation", required=True)
    sp.set_defaults(func=cmd_reconstruct)

    sp = sub.add_parser("fit2d", help="fit to detected 2D joints")
    common(sp)
    sp.add_argument("--observation", required=True)
    sp.set_defaults(func=cmd_fit2d)

    sp = sub.add_parser("eval", help="run an evaluation protocol")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--protocol", choices=("generation", "reconstruction"),
                    required=True)
    sp.add_argument("--dataset")
    sp.add_argument("--n", type=int, default=500)
    sp.add_argument("--steps", type=int, default=50)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--max-images", type=int, default=10)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("export", help="convert a mesh file")
    sp.add_argument("--input", required=True)
    sp.add_argument("--format", choices=("obj", "ply"), required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    workers = os.environ.get("HANDDIFF_WORKERS")
    if workers:
        import torch
        torch.set_num_threads(max(1, int(workers)))
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE_EXIT if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (errors.UsageError, errors.ConfigurationError, errors.TaskError,
            errors.InputError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except (errors.StorageError,) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return DATA_EXIT
    except errors.NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return NUMERIC_EXIT


if __name__ == "__main__":
    sys.exit(main())
