"""On-disk artifacts: run config, mesh files, checkpoint archives."""

from .checkpoint import (LoadedCheckpoint, hierarchy_from_artifact,
                         load_checkpoint, save_checkpoint, topology_artifact)
from .config import (OptimizerConfig, RunConfig, ScheduleConfig, Seeds,
                     config_from_dict, config_hash, config_to_dict,
                     load_config, paper_profile, save_config, toy_profile)
from .meshio import export_mesh, import_mesh

__all__ = [
    "RunConfig", "ScheduleConfig", "OptimizerConfig", "Seeds", "config_hash",
    "config_to_dict", "config_from_dict", "save_config", "load_config",
    "toy_profile", "paper_profile", "export_mesh", "import_mesh",
    "save_checkpoint", "load_checkpoint", "LoadedCheckpoint",
    "topology_artifact", "hierarchy_from_artifact",
]
