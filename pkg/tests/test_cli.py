#!/usr/bin/env python3
#  ██████╗██╗   ██╗██████╗ ███████╗███╗   ██╗███████╗████████╗
# ██╔════╝██║   ██║██╔══██╗██╔════╝████╗  ██║██╔════╝╚══██╔══╝
# ██║     ██║   ██║██████╔╝█████╗  ██╔██╗ ██║█████╗     ██║   
# ██║     ██║   ██║██╔══██╗██╔══╝  ██║╚██╗██║██╔══╝     ██║   
# ╚██████╗╚██████╔╝██║  ██║███████╗██║ ╚████║███████╗   ██║   
#  ╚═════╝ ╚═════╝ ╚═╝  ╚═╝╚══════╝╚═╝  ╚═══╝╚══════╝   ╚═╝   
# CLI TEST SCRIPT v1.0
# CODEX: This script tests the CLI functionality of the CureNet application.
# CODEX: It simulates command-line arguments on a tiny configuration and checks the written artifacts.

import io
import json
import os
import sys
import argparse

import pandas as pd
import pytest
import yaml
from rich.console import Console

# Add the project directory to the path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

# Import the CLI module
import curenet
from src.cli import PREDICTION_COLUMNS, CLIManager
from src.config import ConfigManager
from src.errors import DataError

TINY_NETWORK = {"branch_hidden": [6, 6], "trunk_hidden": [6], "latent_width": 4}


def create_mock_args(command, **kwargs):
    """
    CODEX: Create a mock args object for testing.

    Args:
        command (str): Command name
        **kwargs: Command arguments

    Returns:
        argparse.Namespace: Mock args object
    """
    args = argparse.Namespace()
    args.command = command

    for key, value in kwargs.items():
        setattr(args, key, value)

    return args


def tiny_config(base_dir):
    """
    CODEX: Write a configuration small enough to run every command in seconds.
    """
    document = {
        "seed": 3,
        "workers": 1,
        "output_dir": os.path.join(base_dir, "runs"),
        "simulation": {"dt": 1.0, "n_out": 16, "sensor_count": 8},
        "dataset": {"grid_t": 3, "grid_T": 2},
        "network": TINY_NETWORK,
        "eki_network": TINY_NETWORK,
        "training": {"max_iterations": 20, "eval_every": 10, "val_fraction": 0.25},
        "ensemble": {"seeds": [0, 1]},
        "transfer": {"max_iterations": 50, "learning_rate": 1.0e-2},
        "eki": {"ensemble_size": 8, "iterations": 2, "time_points": 4},
        "eki_transfer": {"iterations": 2},
        "optimization": {"n_t": 4, "n_T": 4, "refine_rounds": 0},
        "prediction": {"n_times": 16, "trajectories": True},
        "system": {"logging": {"file": os.path.join(base_dir, "logs", "curenet.log")}},
    }
    path = os.path.join(base_dir, "tiny.yaml")
    with open(path, "w", encoding="utf-8") as file:
        yaml.safe_dump(document, file)
    return path


def quiet_console():
    return Console(file=io.StringIO(), width=120)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """
    CODEX: Generated dataset and one trained model shared by the command tests.
    """
    base_dir = str(tmp_path_factory.mktemp("cli"))
    config_path = tiny_config(base_dir)
    cli_manager = CLIManager(ConfigManager(config_path), quiet_console())
    cli_manager.handle_generate_command(create_mock_args("generate"))
    cli_manager.handle_train_command(create_mock_args("train"))
    return config_path, os.path.join(base_dir, "runs")


def manager(config_path, **overrides):
    config = ConfigManager(config_path)
    config.apply_overrides(overrides)
    return CLIManager(config, quiet_console())


# =====================================================================
# COMMAND HANDLERS
# =====================================================================

def test_generate_command(workspace):
    _, runs = workspace
    manifest = json.loads(open(os.path.join(runs, "dataset", "manifest.json"), encoding="utf-8").read())
    assert manifest["format"] == "curenet-dataset"
    assert os.path.exists(os.path.join(runs, "dataset", "resolved_config.json"))
    assert os.path.exists(os.path.join(runs, "experiments", "synthetic_holdout.csv"))
    assert os.path.exists(os.path.join(runs, "experiments", "synthetic_holdout.json"))


def test_train_command(workspace):
    _, runs = workspace
    model_dir = os.path.join(runs, "model")
    history = pd.read_csv(os.path.join(model_dir, "history.csv"))
    assert list(history.columns) == ["iter", "train_loss", "val_loss", "lr"]
    metrics = json.loads(open(os.path.join(model_dir, "metrics.json"), encoding="utf-8").read())
    assert set(metrics["validation_relative_l2"]) == {"doc", "log_viscosity", "deformation"}
    resolved = json.loads(open(os.path.join(model_dir, "resolved_config.json"), encoding="utf-8").read())
    assert resolved["training"]["max_iterations"] == 20


def test_predict_command(workspace):
    config_path, _ = workspace
    path = manager(config_path).handle_predict_command(create_mock_args("predict", t1=70.0, T1=110.0, doc0=None))
    frame = pd.read_csv(path)
    assert list(frame.columns) == PREDICTION_COLUMNS
    assert len(frame) == 16


def test_transfer_command(workspace):
    config_path, _ = workspace
    out_dir = manager(config_path).handle_transfer_command(create_mock_args("transfer"))
    result = json.loads(open(os.path.join(out_dir, "result.json"), encoding="utf-8").read())
    assert result["label"] == "synthetic_holdout"
    assert result["iterations"] <= 50
    assert os.path.exists(os.path.join(out_dir, "model.json"))
    assert list(pd.read_csv(os.path.join(out_dir, "prediction.csv")).columns) == PREDICTION_COLUMNS


def test_optimize_command(workspace):
    config_path, _ = workspace
    out_dir = manager(config_path).handle_optimize_command(create_mock_args("optimize"))
    grid = pd.read_csv(os.path.join(out_dir, "map.csv"))
    assert len(grid) == 16
    result = json.loads(open(os.path.join(out_dir, "result.json"), encoding="utf-8").read())
    assert result["evaluations"] == 16
    assert result["problem"]["n_t"] == 4


def test_ensemble_bands_and_transfer_commands(workspace):
    config_path, _ = workspace
    cli_manager = manager(config_path)
    ensemble_dir = cli_manager.handle_ensemble_command(create_mock_args("ensemble"))
    assert os.path.exists(os.path.join(ensemble_dir, "model_seed0.json"))
    assert os.path.exists(os.path.join(ensemble_dir, "history_seed1.csv"))

    path = cli_manager.handle_bands_command(create_mock_args("bands", t1=None, T1=None, doc0=None))
    assert "deformation_mm_std" in pd.read_csv(path).columns
    trajectories = pd.read_csv(os.path.join(os.path.dirname(path), "trajectories.csv"))
    assert set(trajectories["member"]) == {0, 1}

    out_dir = manager(config_path, ensemble_path=ensemble_dir).handle_transfer_command(create_mock_args("transfer"))
    manifest = json.loads(open(os.path.join(out_dir, "manifest.json"), encoding="utf-8").read())
    assert len(manifest["members"]) + len(manifest["failures"]) == 2
    assert os.path.exists(os.path.join(out_dir, "prediction_bands.csv"))


def test_eki_commands(workspace):
    config_path, _ = workspace
    eki_dir = manager(config_path).handle_eki_train_command(create_mock_args("eki-train"))
    misfit = pd.read_csv(os.path.join(eki_dir, "misfit.csv"))
    assert len(misfit) == 3
    assert os.path.exists(os.path.join(eki_dir, "particles", "particle_0007.json"))

    out_dir = manager(config_path).handle_eki_transfer_command(create_mock_args("eki-transfer"))
    result = json.loads(open(os.path.join(out_dir, "result.json"), encoding="utf-8").read())
    assert result["label"] == "synthetic_holdout"
    assert len(pd.read_csv(os.path.join(out_dir, "bands.csv"))) == 128


def test_missing_inputs_are_data_errors(tmp_path):
    cli_manager = manager(tiny_config(str(tmp_path)))
    with pytest.raises(DataError):
        cli_manager.handle_train_command(create_mock_args("train"))
    with pytest.raises(DataError):
        cli_manager.handle_predict_command(create_mock_args("predict", t1=None, T1=None, doc0=None))


# =====================================================================
# ENTRY POINT
# =====================================================================

def test_main_without_command():
    assert curenet.main([], console=quiet_console()) == 2


def test_main_exit_codes(tmp_path):
    console = quiet_console()
    assert curenet.main(["generate", "--config", str(tmp_path / "absent.yaml")], console=console) == 2
    config_path = tiny_config(str(tmp_path))
    assert curenet.main(["predict", "--config", config_path, "--quiet"], console=console) == 3
    assert curenet.main(["train", "--config", config_path, "--workers", "-1"], console=console) == 2


def test_main_runs_generate(tmp_path):
    config_path = tiny_config(str(tmp_path))
    output = str(tmp_path / "elsewhere")
    assert curenet.main(["generate", "--config", config_path, "--output", output, "--quiet"],
                        console=quiet_console()) == 0
    assert os.path.exists(os.path.join(output, "dataset", "manifest.json"))


def test_main_maps_unexpected_failures(tmp_path, mocker):
    config_path = tiny_config(str(tmp_path))
    handler = mocker.patch.object(CLIManager, "handle_train_command", side_effect=RuntimeError("boom"))
    assert curenet.main(["train", "--config", config_path, "--quiet"], console=quiet_console()) == 1
    handler.assert_called_once()


def test_argument_parsing():
    args = curenet.parse_arguments(["predict", "--t1", "65", "--T1", "115", "--seed", "4"])
    assert args.command == "predict"
    assert (args.t1, args.T1, args.doc0) == (65.0, 115.0, None)
    assert args.seed == 4
    args = curenet.parse_arguments(["optimize", "--output", "runs/x"])
    assert args.output == "runs/x"
    assert args.config is None


# =====================================================================
# SMOKE PIPELINE
# =====================================================================

SMOKE_SEQUENCE = ("generate", "train", "ensemble", "eki-train", "transfer", "eki-transfer", "predict", "bands",
                  "optimize")


def read_artifacts(root):
    """
    CODEX: Every file under a run directory, keyed by its relative path.
    """
    artifacts = {}
    for directory, _, files in os.walk(root):
        for name in files:
            path = os.path.join(directory, name)
            with open(path, "rb") as file:
                artifacts[os.path.relpath(path, root)] = file.read()
    return artifacts


@pytest.mark.slow
def test_smoke_pipeline_is_reproducible(tmp_path):
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    smoke = os.path.join(root, "configs", "smoke.yaml")
    runs = []
    for name in ("first", "second"):
        output = str(tmp_path / name)
        for command in SMOKE_SEQUENCE:
            assert curenet.main([command, "--config", smoke, "--output", output, "--quiet"],
                                console=quiet_console()) == 0, command
        runs.append(read_artifacts(output))

    first, second = runs
    assert sorted(first) == sorted(second)
    for command_dir in ("dataset", "model", "ensemble", "eki", "transfer", "eki_transfer", "predict", "bands",
                        "optimize"):
        assert os.path.join(command_dir, "resolved_config.json") in first
    for name, content in first.items():
        if os.path.basename(name) == "resolved_config.json":
            resolved = [json.loads(document) for document in (content, second[name])]
            assert resolved[0].pop("output_dir") != resolved[1].pop("output_dir")
            assert resolved[0] == resolved[1]
        else:
            assert content == second[name], name

    result = json.loads(first[os.path.join("optimize", "result.json")])
    assert result["evaluations"] >= 100
