#!/usr/bin/env python3
#  ██████╗██╗   ██╗██████╗ ███████╗███╗   ██╗███████╗████████╗
# ██╔════╝██║   ██║██╔══██╗██╔════╝████╗  ██║██╔════╝╚══██╔══╝
# ██║     ██║   ██║██████╔╝█████╗  ██╔██╗ ██║█████╗     ██║   
# ██║     ██║   ██║██╔══██╗██╔══╝  ██║╚██╗██║██╔══╝     ██║   
# ╚██████╗╚██████╔╝██║  ██║███████╗██║ ╚████║███████╗   ██║   
#  ╚═════╝ ╚═════╝ ╚═╝  ╚═╝╚══════╝╚═╝  ╚═══╝╚══════╝   ╚═╝   
# TEST FIXTURES v1.0
# CODEX: Shared small datasets and models, plus the slow marker for the training harnesses.

import os
import sys

import numpy as np
import pytest

# Add the project directory to the path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.cure_sim import ProfileAnchors, default_A_grid, generate_dataset
from src.deeponet import ADAM_ARCHITECTURE, init_model
from src.train import build_training_set, fit

TINY_ARCHITECTURE = {"branch_hidden": [6, 6], "trunk_hidden": [6], "latent_width": 4}


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow training harnesses")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: trains models for minutes; needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session")
def anchors():
    return ProfileAnchors()


@pytest.fixture(scope="session")
def tiny_dataset(anchors):
    """
    CODEX: 3 x 2 design grid times two initial degrees of cure (12 records).
    """
    grid = default_A_grid(anchors, 1.0, n_t=3, n_T=2)
    return generate_dataset(grid, [0.3, 0.001], dt=1.0, sensor_count=8, n_out=16, anchors=anchors)


@pytest.fixture(scope="session")
def tiny_tset(tiny_dataset):
    return build_training_set(tiny_dataset, val_fraction=0.25, seed=0)


@pytest.fixture
def tiny_model(tiny_tset):
    return init_model(TINY_ARCHITECTURE, tiny_tset.sensor_count, tiny_tset.normalization, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def default_dataset(anchors):
    """
    CODEX: The full 10 x 10 design grid times both initial degrees of cure (200 records).
    """
    return generate_dataset(default_A_grid(anchors), [0.3, 0.001], dt=0.5, anchors=anchors)


@pytest.fixture(scope="session")
def trained_operator(default_dataset):
    """
    CODEX: Adam-trained operator on the default dataset with the standard schedule and early stopping.
    CODEX: Only slow tests request it.

    Returns:
        tuple: (model, training set, history)
    """
    tset = build_training_set(default_dataset, 0.2, seed=0)
    model = init_model(ADAM_ARCHITECTURE, tset.sensor_count, tset.normalization, 0)
    trained, history = fit(model, tset)
    return trained, tset, history
