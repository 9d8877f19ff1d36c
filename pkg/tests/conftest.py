import numpy as np
import pytest
import torch

from handdiff.mesh import build_pooling_hierarchy
from handdiff.net import DenoiserConfig, build_denoiser
from handdiff.rig import TOY_RIG, build_template

torch.set_num_threads(2)


@pytest.fixture(scope="session")
def toy_rig():
    return build_template(TOY_RIG)


@pytest.fixture(scope="session")
def default_rig():
    return build_template()


@pytest.fixture(scope="session")
def toy_hierarchy(toy_rig):
    return build_pooling_hierarchy(toy_rig.topology, 2,
                                   toy_rig.template_vertices)


@pytest.fixture(scope="session")
def tiny_model(toy_rig, toy_hierarchy):
    """Small double-precision denoiser for gradient checks."""
    cfg = DenoiserConfig(levels=2, channels=(8, 16), cheb_order=2, heads=2,
                         token_dim=16, time_dim=16)
    model = build_denoiser(cfg, toy_rig.topology, toy_hierarchy, seed=0)
    model.double().eval()
    return model, cfg
