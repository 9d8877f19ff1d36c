"""Self-contained checkpoint archive (zip): model and encoder weights,
run config snapshot, topology/pooling artifact, regressor, step counter
and metric history. Loadable without the original dataset; written
atomically so interrupted runs always leave a loadable file."""

from __future__ import annotations

import io as _io
import json
import os
import zipfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import torch

from ..conditions import ConditionEncoder
from ..diffusion import NoiseSchedule, make_schedule
from ..errors import StorageError
from ..mesh import (JointRegressor, MeshTopology, PoolingLevel,
                    build_pooling_hierarchy, build_topology)
from ..net import GraphDenoiser, build_denoiser
from ..rig import HandRig, build_template
from ..tasks import PriorModel
from .config import RunConfig, config_from_dict, config_hash, config_to_dict

CHECKPOINT_VERSION = 1
TOPOLOGY_VERSION = 1


def topology_artifact(topology: MeshTopology,
                      hierarchy: list[PoolingLevel]) -> dict:
    """Versioned structured-text form of the mesh graph and its pooling
    chain; clusters are enough to rebuild the operators deterministically."""
    return {
        "version": TOPOLOGY_VERSION,
        "vertex_count": topology.vertex_count,
        "faces": topology.faces.tolist(),
        "levels": [h.clusters.tolist() for h in hierarchy],
    }


def hierarchy_from_artifact(artifact: dict):
    """Rebuild (topology, hierarchy) from the serialized clusters."""
    topo = build_topology(np.array(artifact["faces"], dtype=np.int64),
                          artifact["vertex_count"])
    hierarchy = []
    current = topo
    for clusters in artifact["levels"]:
        clusters = np.array(clusters, dtype=np.int64)
        n_coarse = int(clusters.max()) + 1
        n_fine = current.vertex_count
        ones = np.ones(n_fine)
        down = sp.coo_matrix((ones, (clusters, np.arange(n_fine))),
                             shape=(n_coarse, n_fine)).tocsr()
        sizes = np.asarray(down.sum(axis=1)).ravel()
        down = sp.diags(1.0 / sizes) @ down
        up = sp.coo_matrix((ones, (np.arange(n_fine), clusters)),
                           shape=(n_fine, n_coarse)).tocsr()
        from ..mesh.pooling import _coarse_edges, _coarse_faces
        from ..mesh.topology import topology_from_graph
        coarse = topology_from_graph(_coarse_edges(current, clusters), n_coarse,
                                     _coarse_faces(current, clusters))
        hierarchy.append(PoolingLevel(coarse_topology=coarse,
                                      down_operator=down, up_operator=up,
                                      clusters=clusters))
        current = coarse
    return topo, hierarchy


def _state_to_arrays(module: torch.nn.Module, prefix: str) -> dict:
    return {prefix + k: v.detach().cpu().numpy()
            for k, v in module.state_dict().items()}


def _arrays_to_state(arrays: dict, prefix: str) -> dict:
    return {k[len(prefix):]: torch.from_numpy(v)
            for k, v in arrays.items() if k.startswith(prefix)}


def save_checkpoint(path, config: RunConfig, step: int,
                    denoiser: GraphDenoiser, encoder: ConditionEncoder,
                    schedule: NoiseSchedule, topology: MeshTopology,
                    hierarchy: list[PoolingLevel], regressor: JointRegressor,
                    metric_history: list, optimizer_state: dict | None = None) -> None:
    import yaml
    meta = {
        "version": CHECKPOINT_VERSION,
        "step": step,
        "schedule_fingerprint": schedule.fingerprint(),
        "config_hash": config_hash(config),
        "metric_history": metric_history,
    }
    arrays = {}
    arrays.update(_state_to_arrays(denoiser, "denoiser."))
    arrays.update(_state_to_arrays(encoder, "encoder."))
    params_buf = _io.BytesIO()
    np.savez(params_buf, **arrays)
    reg_buf = _io.BytesIO()
    np.savez(reg_buf, data=regressor.weights.data,
             indices=regressor.weights.indices,
             indptr=regressor.weights.indptr,
             shape=np.array(regressor.weights.shape))

    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    try:
        with zipfile.ZipFile(tmp, "w", zipfile.ZIP_DEFLATED) as z:
            z.writestr("meta.json", json.dumps(meta, sort_keys=True, indent=1))
            z.writestr("config.yaml",
                       yaml.safe_dump(config_to_dict(config), sort_keys=True))
            z.writestr("topology.json",
                       json.dumps(topology_artifact(topology, hierarchy)))
            z.writestr("params.npz", params_buf.getvalue())
            z.writestr("regressor.npz", reg_buf.getvalue())
            if optimizer_state is not None:
                opt_buf = _io.BytesIO()
                np.savez(opt_buf, **optimizer_state)
                z.writestr("optimizer.npz", opt_buf.getvalue())
        os.replace(tmp, path)
    except OSError as exc:
        raise StorageError(f"cannot write checkpoint {path}: {exc}") from exc


@dataclass
class LoadedCheckpoint:
    config: RunConfig
    step: int
    metric_history: list
    denoiser: GraphDenoiser
    encoder: ConditionEncoder
    schedule: NoiseSchedule
    topology: MeshTopology
    hierarchy: list
    regressor: JointRegressor
    rig: HandRig
    optimizer_state: dict | None
    meta: dict

    def prior_model(self) -> PriorModel:
        return PriorModel(denoiser=self.denoiser, encoder=self.encoder,
                          schedule=self.schedule, regressor=self.regressor,
                          topology=self.topology,
                          center=np.asarray(self.config.dataset.placement.center),
                          scale=self.config.encoder.space_scale)


def load_checkpoint(path) -> LoadedCheckpoint:
    import yaml
    p = Path(path)
    if not p.exists():
        raise StorageError(f"no checkpoint at {p}")
    try:
        with zipfile.ZipFile(p) as z:
            meta = json.loads(z.read("meta.json"))
            config = config_from_dict(yaml.safe_load(z.read("config.yaml")))
            artifact = json.loads(z.read("topology.json"))
            with np.load(_io.BytesIO(z.read("params.npz"))) as npz:
                arrays = {k: npz[k] for k in npz.files}
            with np.load(_io.BytesIO(z.read("regressor.npz"))) as npz:
                reg = JointRegressor(weights=sp.csr_matrix(
                    (npz["data"], npz["indices"], npz["indptr"]),
                    shape=tuple(npz["shape"])))
            optimizer_state = None
            if "optimizer.npz" in z.namelist():
                with np.load(_io.BytesIO(z.read("optimizer.npz"))) as npz:
                    optimizer_state = {k: npz[k] for k in npz.files}
    except (zipfile.BadZipFile, KeyError) as exc:
        raise StorageError(f"corrupt checkpoint {p}: {exc}") from exc

    topology, hierarchy = hierarchy_from_artifact(artifact)
    denoiser = build_denoiser(config.model, topology, hierarchy,
                              seed=config.seeds.init)
    denoiser.load_state_dict(_arrays_to_state(arrays, "denoiser."))
    encoder = ConditionEncoder(config.encoder)
    encoder.load_state_dict(_arrays_to_state(arrays, "encoder."))
    denoiser.eval()
    encoder.eval()
    schedule = make_schedule(config.schedule.steps, config.schedule.kind,
                             config.schedule.beta_start, config.schedule.beta_end)
    rig = build_template(config.dataset.rig)
    return LoadedCheckpoint(config=config, step=meta["step"],
                            metric_history=meta["metric_history"],
                            denoiser=denoiser, encoder=encoder,
                            schedule=schedule, topology=topology,
                            hierarchy=hierarchy, regressor=reg, rig=rig,
                            optimizer_state=optimizer_state, meta=meta)
