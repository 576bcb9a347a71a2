#!/usr/bin/env python3
#  ██████╗██╗   ██╗██████╗ ███████╗███╗   ██╗███████╗████████╗
# ██╔════╝██║   ██║██╔══██╗██╔════╝████╗  ██║██╔════╝╚══██╔══╝
# ██║     ██║   ██║██████╔╝█████╗  ██╔██╗ ██║█████╗     ██║   
# ██║     ██║   ██║██╔══██╗██╔══╝  ██║╚██╗██║██╔══╝     ██║   
# ╚██████╗╚██████╔╝██║  ██║███████╗██║ ╚████║███████╗   ██║   
#  ╚═════╝ ╚═════╝ ╚═╝  ╚═╝╚══════╝╚═╝  ╚═══╝╚══════╝   ╚═╝   
# CONFIGURATION TEST SCRIPT v1.0
# CODEX: Default merging, key and type checks, environment seed and command-line overrides.

import json
import os
import sys

import pytest
import yaml

# Add the project directory to the path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.config import SEED_ENV_VAR, ConfigManager
from src.cure_sim import DeformationParams, KineticsParams, ProfileAnchors, build_profile, simulate
from src.errors import ConfigError
from src.utils import default_workers


@pytest.fixture(autouse=True)
def no_seed_env(monkeypatch):
    monkeypatch.delenv(SEED_ENV_VAR, raising=False)


def write_config(tmp_path, document):
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(document))
    return str(path)


def test_defaults_fill_missing_sections(tmp_path):
    config = ConfigManager(write_config(tmp_path, {"seed": 5, "training": {"max_iterations": 10}}))
    assert config.get("seed") == 5
    training = config.get_training_config()
    assert training["max_iterations"] == 10
    assert training["learning_rate"] == 1e-3
    assert config.get_network_config()["latent_width"] == 20
    assert config.get_eki_config()["ensemble_size"] == 2000


def test_shipped_configurations_load():
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    full = ConfigManager(os.path.join(root, "config.yaml"))
    assert full.get_kinetics_config()["A1"] == pytest.approx(2.101e9)
    smoke = ConfigManager(os.path.join(root, "configs", "smoke.yaml"))
    assert smoke.get("workers") == 1
    assert smoke.get_dataset_config()["grid_t"] == 5


def test_empty_document_means_defaults(tmp_path):
    path = tmp_path / "empty.yaml"
    path.write_text("")
    assert ConfigManager(str(path)).get("seed") == 42


def test_default_queries_reach_full_cure(tmp_path):
    config = ConfigManager(write_config(tmp_path, {}))
    anchors = ProfileAnchors(**config.get_anchors_config())
    kp = KineticsParams(**config.get_kinetics_config())
    dp = DeformationParams(**config.get_deformation_config())
    sim = config.get_simulation_config()
    doc_min = config.get_optimization_config()["doc_min"]
    dataset = config.get_dataset_config()
    prediction = config.get_prediction_config()
    for t1, T1, doc0 in ((dataset["holdout_t1"], dataset["holdout_T1"], dataset["holdout_doc0"]),
                         (prediction["t1"], prediction["T1"], prediction["doc0"])):
        profile = build_profile(t1, T1, anchors, sim["margin"])
        assert simulate(profile, doc0, kp, dp, sim["dt"]).terminal_doc >= doc_min


def test_json_documents_are_accepted(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"optimization": {"n_t": 12}}))
    assert ConfigManager(str(path)).get_optimization_config()["n_t"] == 12


@pytest.mark.parametrize("document", [
    {"sead": 1},
    {"training": {"learning_rte": 0.1}},
    {"training": 5},
    {"training": {"max_iterations": "many"}},
    {"training": {"max_iterations": 1.5}},
    {"optimization": {"verify": "yes"}},
    {"ensemble": {"seeds": 3}},
    {"ensemble": {"seeds": [1, 1]}},
    {"training": {"val_fraction": 1.0}},
    {"training": {"channel_weights": [1.0, 1.0]}},
    {"workers": -2},
    {"system": {"logging": {"level": "LOUD"}}},
])
def test_invalid_documents(tmp_path, document):
    with pytest.raises(ConfigError):
        ConfigManager(write_config(tmp_path, document))


def test_integers_are_accepted_for_floats(tmp_path):
    config = ConfigManager(write_config(tmp_path, {"transfer": {"learning_rate": 1}}))
    assert config.get_transfer_config()["learning_rate"] == 1.0
    assert isinstance(config.get_transfer_config()["learning_rate"], float)


def test_missing_explicit_file(tmp_path):
    with pytest.raises(ConfigError):
        ConfigManager(str(tmp_path / "absent.yaml"))


def test_malformed_yaml(tmp_path):
    path = tmp_path / "broken.yaml"
    path.write_text("training: [unclosed\n")
    with pytest.raises(ConfigError):
        ConfigManager(str(path))


def test_environment_seed(tmp_path, monkeypatch):
    monkeypatch.setenv(SEED_ENV_VAR, "17")
    config = ConfigManager(write_config(tmp_path, {"seed": 5}))
    assert config.get("seed") == 17
    config.apply_overrides({"seed": 3})
    assert config.get("seed") == 3


def test_bad_environment_seed(tmp_path, monkeypatch):
    monkeypatch.setenv(SEED_ENV_VAR, "seven")
    with pytest.raises(ConfigError):
        ConfigManager(write_config(tmp_path, {}))


def test_overrides(tmp_path):
    config = ConfigManager(write_config(tmp_path, {"workers": 2}))
    config.apply_overrides({"output_dir": str(tmp_path / "out"), "model_path": None, "workers": 3})
    assert config.get("output_dir") == str(tmp_path / "out")
    assert config.get("model_path") is None
    assert config.get("workers") == 3
    with pytest.raises(ConfigError):
        config.apply_overrides({"training": 1})
    with pytest.raises(ConfigError):
        config.apply_overrides({"seed": "x"})


def test_zero_workers_means_every_cpu(tmp_path):
    config = ConfigManager(write_config(tmp_path, {"workers": 0}))
    assert config.get("workers") == default_workers()
    config.apply_overrides({"workers": 0})
    assert config.get("workers") == default_workers()


def test_resolved_configuration_is_saved(tmp_path):
    config = ConfigManager(write_config(tmp_path, {"seed": 8}))
    target = tmp_path / "resolved_config.json"
    config.save_resolved(str(target))
    saved = json.loads(target.read_text())
    assert saved["seed"] == 8
    assert saved["system"]["logging"]["level"] == "INFO"
    saved["seed"] = 0
    assert config.get("seed") == 8
