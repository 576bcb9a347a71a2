#!/usr/bin/env python3
#  ██████╗██╗   ██╗██████╗ ███████╗███╗   ██╗███████╗████████╗
# ██╔════╝██║   ██║██╔══██╗██╔════╝████╗  ██║██╔════╝╚══██╔══╝
# ██║     ██║   ██║██████╔╝█████╗  ██╔██╗ ██║█████╗     ██║
# ██║     ██║   ██║██╔══██╗██╔══╝  ██║╚██╗██║██╔══╝     ██║
# ╚██████╗╚██████╔╝██║  ██║███████╗██║ ╚████║███████╗   ██║
#  ╚═════╝ ╚═════╝ ╚═╝  ╚═╝╚══════╝╚═╝  ╚═══╝╚══════╝   ╚═╝
# TRAINING MODULE v1.0
# CODEX: Supervised full-batch Adam training of the FiLM-DeepONet with early stopping,
# CODEX: seed ensembles and their epistemic-uncertainty statistics.

import os
import logging
from dataclasses import dataclass, field
from functools import partial

import numpy as np
import pandas as pd
from sklearn.model_selection import train_test_split

from src.deeponet import (N_CHANNELS, Normalization, forward_batch, backward_batch, init_model,
                          load_model, parameter_vector, predict_trajectory,
                          save_model, with_parameters)
from src.errors import ConfigError, CureNetError, DataError, ShapeError, TrainingError
from src.nn import AdamState, adam_step
from src.utils import parallel_map, read_json, write_json

logger = logging.getLogger(__name__)

HISTORY_COLUMNS = ["iter", "train_loss", "val_loss", "lr"]

DEFAULT_TRAINING = {
    "max_iterations": 100000,
    "learning_rate": 1e-3,
    "decay_rate": 0.95,
    "decay_steps": 1000,
    "eval_every": 100,
    "patience": 2000,
    "val_fraction": 0.2,
    "channel_weights": [1.0, 1.0, 1.0],
}


# =====================================================================
# TRAINING SET
# =====================================================================

@dataclass(eq=False)
class TrainingSet:
    """
    CODEX: Branch inputs, physical targets, normalization and a fixed train/validation split.
    """
    record_ids: list
    T_samples: np.ndarray     # (N, k)
    doc0: np.ndarray          # (N,)
    targets: np.ndarray       # (N, 3, P) physical units
    times: np.ndarray         # (P,)
    normalization: Normalization
    train_idx: np.ndarray
    val_idx: np.ndarray

    @property
    def sensor_count(self):
        return self.T_samples.shape[1]

    def __len__(self):
        return len(self.record_ids)

    def features(self, indices=None):
        """
        CODEX: Normalized branch inputs (N, k + 1) and conditioning (N, 1).
        """
        idx = slice(None) if indices is None else indices
        T = self.T_samples[idx]
        d = self.doc0[idx]
        x = np.column_stack([self.normalization.normalize_temperature(T), d])
        return x, d[:, None]

    def normalized_targets(self, indices=None):
        idx = slice(None) if indices is None else indices
        return self.normalization.normalize_targets(self.targets[idx])

    @property
    def tau(self):
        norm = self.normalization
        return (self.times - norm.t_origin) / norm.horizon


def build_training_set(dataset, val_fraction=0.2, seed=0):
    """
    CODEX: Turn a simulation dataset into a TrainingSet.
    CODEX: Channel statistics come from the training split only.

    Args:
        dataset (SimulationDataset): Simulated records
        val_fraction (float, optional): Validation share. Defaults to 0.2.
        seed (int, optional): Split seed. Defaults to 0.

    Returns:
        TrainingSet: Ready-to-train set
    """
    n = len(dataset)
    if n < 2:
        raise DataError(f"Training needs at least two records, got {n}")
    k = dataset.sensor_count
    inputs = dataset.branch_inputs()
    targets = dataset.targets()
    record_ids = [r.record_id for r in dataset.records]
    for i, rid in enumerate(record_ids):
        if not np.all(np.isfinite(targets[i])):
            raise DataError(f"Non-finite target values in record {rid}")

    train_idx, val_idx = train_test_split(np.arange(n), test_size=val_fraction, random_state=seed)
    train_idx = np.sort(train_idx)
    val_idx = np.sort(val_idx)

    train_targets = targets[train_idx]
    mean = train_targets.mean(axis=(0, 2))
    std = train_targets.std(axis=(0, 2))
    std = np.where(std > 1e-12, std, 1.0)
    anchors = dataset.anchors
    doc0 = inputs[:, k]
    normalization = Normalization(
        T_offset=anchors.T_start,
        T_scale=anchors.T_peak - anchors.T_start,
        t_origin=anchors.t0,
        horizon=anchors.horizon,
        target_mean=tuple(float(m) for m in mean),
        target_std=tuple(float(s) for s in std),
        doc0_min=float(doc0[train_idx].min()),
        doc0_max=float(doc0[train_idx].max()),
    )
    logger.info(f"Training set: {len(train_idx)} train / {len(val_idx)} validation records")
    return TrainingSet(record_ids=record_ids, T_samples=inputs[:, :k], doc0=doc0, targets=targets,
                       times=dataset.times, normalization=normalization,
                       train_idx=train_idx, val_idx=val_idx)


# =====================================================================
# LOSS
# =====================================================================

def loss(pred, target, weights=(1.0, 1.0, 1.0), record_id=None):
    """
    CODEX: Weighted sum over channels of the mean squared error (normalized space).

    Args:
        pred (numpy.ndarray or Prediction): (..., 3, P) predictions
        target (numpy.ndarray): (..., 3, P) targets on the same grid
        weights (sequence, optional): Channel weights. Defaults to ones.
        record_id (str, optional): Record named in data errors

    Returns:
        float: Loss value
    """
    pred = pred.channels() if hasattr(pred, "channels") else np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape or pred.shape[-2] != N_CHANNELS:
        raise ShapeError(f"Prediction {pred.shape} and target {target.shape} are not aligned")
    if not np.all(np.isfinite(target)):
        raise DataError(f"Non-finite target values{'' if record_id is None else ' in record ' + str(record_id)}")
    total = 0.0
    for c in range(N_CHANNELS):
        total += weights[c] * float(np.mean((pred[..., c, :] - target[..., c, :]) ** 2))
    return total


def loss_gradient(pred, target, weights=(1.0, 1.0, 1.0)):
    """
    CODEX: dLoss/dpred for loss().
    """
    diff = pred - target
    count = diff[..., 0, :].size
    scale = np.asarray(weights, dtype=float)[:, None] * (2.0 / count)
    return diff * scale


# =====================================================================
# FIT
# =====================================================================

def fit(model, tset, config=None):
    """
    CODEX: Full-batch Adam with exponential decay and early stopping on validation loss.

    Args:
        model (FilmDeepOnet): Initial model
        tset (TrainingSet): Training data
        config (dict, optional): Training settings (see DEFAULT_TRAINING)

    Returns:
        tuple: (best-validation model, history DataFrame iter/train_loss/val_loss/lr)
    """
    cfg = dict(DEFAULT_TRAINING)
    cfg.update(config or {})
    if len(tset.train_idx) == 0:
        raise DataError("Training split is empty")
    weights = cfg["channel_weights"]
    tau = tset.tau
    x_tr, c_tr = tset.features(tset.train_idx)
    y_tr = tset.normalized_targets(tset.train_idx)
    x_va, c_va = tset.features(tset.val_idx)
    y_va = tset.normalized_targets(tset.val_idx)

    def split_losses(theta):
        candidate = with_parameters(model, theta)
        train_out, _ = forward_batch(candidate, x_tr, c_tr, tau)
        val_out, _ = forward_batch(candidate, x_va, c_va, tau)
        return loss(train_out, y_tr, weights), loss(val_out, y_va, weights)

    theta = parameter_vector(model)
    state = AdamState.create(theta.size, cfg["learning_rate"], cfg["decay_rate"], cfg["decay_steps"])
    train_loss, val_loss = split_losses(theta)
    history = [(0, train_loss, val_loss, state.current_lr())]
    best_val, best_theta, best_iter = val_loss, theta, 0
    max_iterations = int(cfg["max_iterations"])

    for iteration in range(1, max_iterations + 1):
        current = with_parameters(model, theta)
        out, cache = forward_batch(current, x_tr, c_tr, tau)
        step_loss = loss(out, y_tr, weights)
        if not np.isfinite(step_loss):
            raise TrainingError("Training loss diverged", iteration)
        grads = backward_batch(current, loss_gradient(out, y_tr, weights), cache)
        theta, state = adam_step(state, theta, grads)

        if iteration % cfg["eval_every"] == 0 or iteration == max_iterations:
            train_loss, val_loss = split_losses(theta)
            if not np.isfinite(val_loss):
                raise TrainingError("Validation loss diverged", iteration)
            history.append((iteration, train_loss, val_loss, state.current_lr()))
            logger.info(f"iter {iteration}: train {train_loss:.6e} val {val_loss:.6e}")
            if val_loss < best_val:
                best_val, best_theta, best_iter = val_loss, theta, iteration
            elif iteration - best_iter >= cfg["patience"]:
                logger.info(f"Early stopping at iteration {iteration} (best {best_iter})")
                break

    frame = pd.DataFrame(history, columns=HISTORY_COLUMNS)
    if best_iter == 0:
        return model, frame
    return with_parameters(model, best_theta), frame


# =====================================================================
# ENSEMBLES
# =====================================================================

@dataclass
class EnsembleResult:
    """
    CODEX: Members trained from different seeds on one fixed split; failures are kept per seed.
    """
    seeds: list
    models: dict = field(default_factory=dict)
    histories: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)

    def members(self):
        return [self.models[s] for s in self.seeds if s in self.models]


def _fit_member(seed, tset, architecture, config):
    try:
        model = init_model(architecture, tset.sensor_count, tset.normalization, seed)
        trained, history = fit(model, tset, config)
        return seed, trained, history, None
    except CureNetError as e:
        return seed, None, None, str(e)


def fit_ensemble(tset, architecture, config, seeds, workers=1):
    """
    CODEX: Train one member per seed; only the initialization differs between members.

    Args:
        tset (TrainingSet): Shared training data and split
        architecture (dict): Network sizes
        config (dict): Training settings
        seeds (list): At least two distinct seeds
        workers (int, optional): Parallel trainings. Defaults to 1.

    Returns:
        EnsembleResult: Trained members and per-seed failures
    """
    if len(set(seeds)) < 2:
        raise ConfigError(f"An ensemble needs at least two distinct seeds, got {seeds}")
    worker = partial(_fit_member, tset=tset, architecture=architecture, config=config)
    result = EnsembleResult(seeds=list(seeds))
    for seed, trained, history, error in parallel_map(worker, seeds, workers):
        if error is not None:
            logger.warning(f"Ensemble member with seed {seed} failed: {error}")
            result.failures[seed] = error
            continue
        result.models[seed] = trained
        result.histories[seed] = history
    return result


@dataclass(eq=False)
class EnsembleStats:
    """
    CODEX: Pointwise mean and population std (3, P) across members.
    """
    times: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    n_members: int


def _check_same_architecture(models):
    reference = models[0].architecture()
    for m in models[1:]:
        if m.architecture() != reference:
            raise ShapeError(f"Ensemble members differ in architecture: {m.architecture()} vs {reference}")


def ensemble_stats(models, T_samples, doc0, times, t_origin=None, horizon=None):
    """
    CODEX: Mean and standard deviation of every channel across ensemble members.

    Args:
        models (list): Members with identical architecture
        T_samples (numpy.ndarray): k raw sensor temperatures
        doc0 (float): Initial degree of cure
        times (array-like): Query times in minutes

    Returns:
        EnsembleStats: Per-time statistics
    """
    if len(models) == 0:
        raise ConfigError("ensemble_stats needs at least one model")
    _check_same_architecture(models)
    stack = np.stack([predict_trajectory(m, T_samples, doc0, times, t_origin, horizon).channels()
                      for m in models])
    return EnsembleStats(times=np.asarray(times, dtype=float), mean=stack.mean(axis=0),
                         std=stack.std(axis=0), n_members=len(models))


# =====================================================================
# EVALUATION
# =====================================================================

def relative_l2(pred, truth):
    """
    CODEX: ||pred - truth|| / ||truth||.
    """
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    denom = np.linalg.norm(truth)
    if denom == 0.0:
        return float(np.linalg.norm(pred - truth))
    return float(np.linalg.norm(pred - truth) / denom)


def evaluate(model, tset, indices=None):
    """
    CODEX: Mean per-record relative L2 error of each channel in physical units.

    Returns:
        dict: channel name -> error
    """
    idx = tset.val_idx if indices is None else np.asarray(indices)
    x, c = tset.features(idx)
    out, _ = forward_batch(model, x, c, tset.tau)
    physical = model.normalization.denormalize_targets(out)
    truth = tset.targets[idx]
    names = ("doc", "log_viscosity", "deformation")
    return {name: float(np.mean([relative_l2(physical[i, ch], truth[i, ch]) for i in range(len(idx))]))
            for ch, name in enumerate(names)}


# =====================================================================
# PERSISTENCE
# =====================================================================

def save_ensemble(result, out_dir, tset=None):
    """
    CODEX: One model JSON per seed plus manifest.json (seeds, failures, split).
    """
    members = []
    for seed in result.seeds:
        if seed not in result.models:
            continue
        name = f"model_seed{seed}.json"
        save_model(result.models[seed], os.path.join(out_dir, name))
        members.append({"seed": seed, "file": name})
    manifest = {
        "format": "curenet-ensemble",
        "version": 1,
        "members": members,
        "failures": {str(k): v for k, v in result.failures.items()},
    }
    if tset is not None:
        manifest["train_idx"] = tset.train_idx.tolist()
        manifest["val_idx"] = tset.val_idx.tolist()
    write_json(manifest, os.path.join(out_dir, "manifest.json"))


def load_ensemble(out_dir):
    """
    CODEX: Load ensemble members in manifest order.

    Returns:
        list: FilmDeepOnet members
    """
    manifest = read_json(os.path.join(out_dir, "manifest.json"))
    if manifest.get("format") not in ("curenet-ensemble", "curenet-eki-ensemble"):
        raise DataError(f"{out_dir} does not hold a CureNet ensemble")
    return [load_model(os.path.join(out_dir, m["file"])) for m in manifest["members"]]
