#!/usr/bin/env python3
#  ██████╗██╗   ██╗██████╗ ███████╗███╗   ██╗███████╗████████╗
# ██╔════╝██║   ██║██╔══██╗██╔════╝████╗  ██║██╔════╝╚══██╔══╝
# ██║     ██║   ██║██████╔╝█████╗  ██╔██╗ ██║█████╗     ██║
# ██║     ██║   ██║██╔══██╗██╔══╝  ██║╚██╗██║██╔══╝     ██║
# ╚██████╗╚██████╔╝██║  ██║███████╗██║ ╚████║███████╗   ██║
#  ╚═════╝ ╚═════╝ ╚═╝  ╚═╝╚══════╝╚═╝  ╚═══╝╚══════╝   ╚═╝
# TRANSFER LEARNING MODULE v1.0
# CODEX: Adapts simulation-trained operators to measured cure cycles: all parameters stay
# CODEX: frozen except the final branch layer, which is tuned to the measured terminal deformation.

import os
import math
import logging
from dataclasses import dataclass, field
from functools import partial

import numpy as np
import pandas as pd

from src.cure_sim import simulate, sensor_times, sample_profile
from src.deeponet import (branch_features, predict_trajectory, trunk_basis, with_last_branch_layer)
from src.errors import CureNetError, DataError
from src.nn import AdamState, adam_step, mlp_forward
from src.train import ensemble_stats
from src.utils import parallel_map, read_json, write_csv, write_json

logger = logging.getLogger(__name__)

DEFAULT_TRANSFER = {
    "lambda_anchor": 1e-3,
    "learning_rate": 1e-3,
    "max_iterations": 5000,
    "tolerance": 1e-3,
}

# Measured process-induced deformation per cure cycle and run: specimen values, run mean,
# standard deviation and the simulated value, all in mm.
MEASURED_PID = {
    "baseline/1": {"specimens": [41.5, 35.0, 37.0, 41.5], "mean": 38.75, "std": 3.278, "simulated": 39.23},
    "baseline/2": {"specimens": [39.0, 36.5, 34.5], "mean": 36.667, "std": 2.254, "simulated": 39.23},
    "baseline/3": {"specimens": [36.0, 41.0, 36.0, 36.5], "mean": 37.375, "std": 2.428, "simulated": 39.23},
    "optimal_r11/1": {"specimens": [36.5, 37.0, 37.5], "mean": 37.0, "std": 0.5, "simulated": 36.64},
    "optimal_r11/2": {"specimens": [33.5, 35.0, 35.0], "mean": 34.5, "std": 0.866, "simulated": 36.64},
    "optimal_r11/3": {"specimens": [31.0, 33.5, 36.0], "mean": 33.5, "std": 2.5, "simulated": 36.64},
    "optimal_r21/1": {"specimens": [31.0, 32.0, 35.5], "mean": 32.833, "std": 2.362, "simulated": 36.84},
}


@dataclass(frozen=True, eq=False)
class ExperimentRecord:
    """
    CODEX: One measured cure cycle: temperature history and terminal deformation.
    """
    times: np.ndarray
    temperatures: np.ndarray
    terminal_deformation: float
    doc0: float
    label: str = ""
    duration: float = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        temps = np.asarray(self.temperatures, dtype=float)
        if times.ndim != 1 or times.shape != temps.shape:
            raise DataError(f"Experiment {self.label!r}: times and temperatures must be equal-length vectors")
        if times.size < 2:
            raise DataError(f"Experiment {self.label!r}: at least two measurement points are required")
        if np.any(np.diff(times) <= 0):
            raise DataError(f"Experiment {self.label!r}: measurement times must be strictly increasing")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(temps))):
            raise DataError(f"Experiment {self.label!r}: non-finite measurements")
        if not math.isfinite(self.terminal_deformation):
            raise DataError(f"Experiment {self.label!r}: terminal deformation must be finite")
        if not (0.0 <= self.doc0 < 1.0):
            raise DataError(f"Experiment {self.label!r}: doc0 must lie in [0, 1)")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "temperatures", temps)
        if self.duration is None:
            object.__setattr__(self, "duration", float(times[-1] - times[0]))
        if not self.duration > 0:
            raise DataError(f"Experiment {self.label!r}: duration must be positive")

    @property
    def t_start(self):
        return float(self.times[0])


def resample_experiment(rec, k):
    """
    CODEX: Interpolate the measured history onto k uniform samples of its own duration.

    Args:
        rec (ExperimentRecord): Measured cycle
        k (int): Sensor count of the target model

    Returns:
        numpy.ndarray: k raw temperatures followed by doc0 (the model normalizes them)
    """
    if rec.times.size < 2:
        raise DataError("Resampling needs at least two measurement points")
    grid = np.linspace(rec.t_start, rec.t_start + rec.duration, k)
    return np.append(np.interp(grid, rec.times, rec.temperatures), rec.doc0)


def experiment_times(rec, n_points=128):
    return np.linspace(rec.t_start, rec.t_start + rec.duration, n_points)


@dataclass(eq=False)
class TransferResult:
    """
    CODEX: Adapted model, its deformation history on the experiment and convergence facts.
    """
    model: object
    prediction: object
    target: float
    terminal_before: float
    terminal_after: float
    iterations: int
    converged: bool

    @property
    def residual(self):
        return self.terminal_after - self.target


def _terminal_setup(model, rec):
    branch_input = resample_experiment(rec, model.sensor_count)
    x, c = branch_features(model, branch_input[None, :-1], [rec.doc0])
    _, cache = mlp_forward(model.branch, x, model.film, c)
    last_input = cache.inputs[-1][0]
    phi_end = trunk_basis(model, 1.0)
    return branch_input, last_input, phi_end


def fine_tune(model, rec, config=None):
    """
    CODEX: Tune the final branch layer so the terminal deformation matches the measurement.
    CODEX: loss = (u_hat(t_final) - u_target)^2 + lambda_anchor * ||delta last layer||^2

    Args:
        model (FilmDeepOnet): Pretrained model (not modified)
        rec (ExperimentRecord): Measured cycle
        config (dict, optional): Transfer settings (see DEFAULT_TRANSFER)

    Returns:
        TransferResult: Adapted model and its predicted deformation history
    """
    cfg = dict(DEFAULT_TRANSFER)
    cfg.update(config or {})
    G = model.latent_width
    norm = model.normalization
    std, mean = norm.target_std[2], norm.target_mean[2]
    branch_input, a, phi = _terminal_setup(model, rec)
    W0 = model.branch.weights[-1]
    b0 = model.branch.biases[-1]
    n_w = W0.size

    def terminal(delta):
        W = W0 + delta[:n_w].reshape(W0.shape)
        b = b0 + delta[n_w:]
        return float(np.dot(a @ W[:, 2 * G:] + b[2 * G:], phi)) * std + mean

    terminal_before = terminal(np.zeros(n_w + b0.size))
    target = float(rec.terminal_deformation)
    tolerance = cfg["tolerance"] * max(abs(target), 1e-12)
    lam = cfg["lambda_anchor"]
    times = experiment_times(rec)

    def finish(adapted, delta, iterations, converged):
        prediction = predict_trajectory(adapted, branch_input[:-1], rec.doc0, times,
                                        t_origin=rec.t_start, horizon=rec.duration)
        return TransferResult(model=adapted, prediction=prediction, target=target,
                              terminal_before=terminal_before, terminal_after=terminal(delta),
                              iterations=iterations, converged=converged)

    delta = np.zeros(n_w + b0.size)
    if abs(terminal_before - target) <= tolerance:
        return finish(model, delta, 0, True)

    state = AdamState.create(delta.size, cfg["learning_rate"], decay_rate=1.0)
    best_loss, best_delta = (terminal_before - target) ** 2, delta
    grad_W = np.zeros(W0.shape)
    grad_b = np.zeros(b0.shape)
    converged = False
    iteration = 0
    for iteration in range(1, int(cfg["max_iterations"]) + 1):
        residual = terminal(delta) - target
        grad_W[:, 2 * G:] = 2.0 * residual * std * np.outer(a, phi)
        grad_b[2 * G:] = 2.0 * residual * std * phi
        grads = np.concatenate([grad_W.ravel(), grad_b]) + 2.0 * lam * delta
        delta, state = adam_step(state, delta, grads)
        new_residual = terminal(delta) - target
        value = new_residual ** 2 + lam * float(np.dot(delta, delta))
        if value < best_loss:
            best_loss, best_delta = value, delta
        if abs(new_residual) <= tolerance:
            best_delta = delta
            converged = True
            break

    if not converged:
        logger.warning(f"Fine-tune of {rec.label!r} did not converge in {iteration} iterations; "
                       f"terminal residual {terminal(best_delta) - target:.4g} mm")
    adapted = with_last_branch_layer(model, W0 + best_delta[:n_w].reshape(W0.shape), b0 + best_delta[n_w:])
    return finish(adapted, best_delta, iteration, converged)


def _fine_tune_member(model, rec, config):
    try:
        return fine_tune(model, rec, config), None
    except CureNetError as e:
        return None, str(e)


@dataclass(eq=False)
class EnsembleTransfer:
    results: list
    failures: dict = field(default_factory=dict)
    stats_before: object = None
    stats_after: object = None


def fine_tune_ensemble(models, rec, config=None, workers=1):
    """
    CODEX: Fine-tune every member independently and recompute the ensemble statistics.

    Returns:
        EnsembleTransfer: Per-member results, per-member failures, statistics before and after
    """
    worker = partial(_fine_tune_member, rec=rec, config=config)
    outcomes = parallel_map(worker, models, workers)
    result = EnsembleTransfer(results=[])
    for index, (member, error) in enumerate(outcomes):
        if error is not None:
            logger.warning(f"Fine-tune of ensemble member {index} failed: {error}")
            result.failures[index] = error
            continue
        result.results.append(member)
    branch_input = resample_experiment(rec, models[0].sensor_count)
    times = experiment_times(rec)
    result.stats_before = ensemble_stats(models, branch_input[:-1], rec.doc0, times, rec.t_start, rec.duration)
    if result.results:
        result.stats_after = ensemble_stats([r.model for r in result.results], branch_input[:-1], rec.doc0,
                                            times, rec.t_start, rec.duration)
    return result


# =====================================================================
# EXPERIMENT FILES
# =====================================================================

def _measured_value(sidecar, label):
    if "terminal_deformation_mm" in sidecar:
        return float(sidecar["terminal_deformation_mm"])
    specimens = sidecar.get("specimens_mm")
    if specimens is None and "reference_run" in sidecar:
        run = sidecar["reference_run"]
        if run not in MEASURED_PID:
            raise DataError(f"Unknown reference run {run!r} for experiment {label!r}")
        specimens = MEASURED_PID[run]["specimens"]
        if "specimen" not in sidecar:
            return float(MEASURED_PID[run]["mean"])
    if specimens is None:
        raise DataError(f"Experiment {label!r} has no terminal deformation")
    if "specimen" in sidecar:
        index = int(sidecar["specimen"])
        if not (0 <= index < len(specimens)):
            raise DataError(f"Experiment {label!r}: specimen index {index} out of range")
        return float(specimens[index])
    return float(np.mean(specimens))


def load_experiment(csv_path, sidecar_path=None):
    """
    CODEX: Load a measured cycle from CSV (time_min,temp_C) plus its JSON sidecar.

    Args:
        csv_path (str): Temperature history
        sidecar_path (str, optional): Metadata; defaults to the CSV path with a .json suffix

    Returns:
        ExperimentRecord: Parsed record
    """
    if sidecar_path is None:
        sidecar_path = os.path.splitext(csv_path)[0] + ".json"
    try:
        frame = pd.read_csv(csv_path)
    except FileNotFoundError:
        raise DataError(f"Experiment file not found: {csv_path}")
    except pd.errors.ParserError as e:
        raise DataError(f"Malformed experiment CSV {csv_path}: {str(e)}")
    if not {"time_min", "temp_C"}.issubset(frame.columns):
        raise DataError(f"{csv_path} must have columns time_min,temp_C")
    sidecar = read_json(sidecar_path)
    label = sidecar.get("label", os.path.basename(csv_path))
    if "doc0" not in sidecar:
        raise DataError(f"Experiment {label!r} sidecar lacks doc0")
    duration = sidecar.get("duration_min")
    # measured values are magnitudes; the sidecar fixes their sign in the simulator's convention
    sign = sidecar.get("deformation_sign", 1)
    if sign not in (1, -1):
        raise DataError(f"Experiment {label!r}: deformation_sign must be 1 or -1, got {sign!r}")
    return ExperimentRecord(
        times=frame["time_min"].to_numpy(dtype=float),
        temperatures=frame["temp_C"].to_numpy(dtype=float),
        terminal_deformation=sign * _measured_value(sidecar, label),
        doc0=float(sidecar["doc0"]),
        label=label,
        duration=None if duration is None else float(duration),
    )


def write_experiment(rec, csv_path):
    """
    CODEX: Write a record as CSV + sidecar (the format load_experiment reads).
    """
    write_csv(pd.DataFrame({"time_min": rec.times, "temp_C": rec.temperatures}), csv_path)
    write_json({
        "label": rec.label,
        "doc0": rec.doc0,
        "terminal_deformation_mm": rec.terminal_deformation,
        "duration_min": rec.duration,
    }, os.path.splitext(csv_path)[0] + ".json")


def synthetic_experiment(profile, doc0, kp=None, dp=None, scale=1.0, n_points=64, dt=0.5, label="synthetic"):
    """
    CODEX: Self-consistent record from the simulator with its terminal deformation scaled.

    Args:
        profile (TemperatureProfile): Cure cycle
        doc0 (float): Initial degree of cure
        scale (float, optional): Factor applied to the simulated terminal deformation
        n_points (int, optional): Number of "measured" temperature points

    Returns:
        ExperimentRecord: Synthetic measurement
    """
    trajectory = simulate(profile, doc0, kp, dp, dt)
    times = sensor_times(profile.anchors, n_points)
    return ExperimentRecord(times=times, temperatures=sample_profile(profile, times),
                            terminal_deformation=scale * trajectory.terminal_deformation,
                            doc0=float(doc0), label=label)
