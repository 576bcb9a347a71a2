#!/usr/bin/env python3
#  ██████╗██╗   ██╗██████╗ ███████╗███╗   ██╗███████╗████████╗
# ██╔════╝██║   ██║██╔══██╗██╔════╝████╗  ██║██╔════╝╚══██╔══╝
# ██║     ██║   ██║██████╔╝█████╗  ██╔██╗ ██║█████╗     ██║
# ██║     ██║   ██║██╔══██╗██╔══╝  ██║╚██╗██║██╔══╝     ██║
# ╚██████╗╚██████╔╝██║  ██║███████╗██║ ╚████║███████╗   ██║
#  ╚═════╝ ╚═════╝ ╚═╝  ╚═╝╚══════╝╚═╝  ╚═══╝╚══════╝   ╚═╝
# ENSEMBLE KALMAN INVERSION MODULE v1.0
# CODEX: Derivative-free training of the operator network with a particle ensemble, ensemble
# CODEX: prediction bands, and Tikhonov-regularized last-layer transfer to measured cycles.

import os
import math
import logging
from dataclasses import dataclass
from functools import partial

import numpy as np
import pandas as pd
from scipy.linalg import cho_factor, cho_solve

from src.deeponet import (branch_features, forward_batch, predict_trajectory, save_model, trunk_basis,
                          with_last_branch_layer, with_parameters)
from src.errors import ConfigError, NumericalError, ShapeError
from src.nn import mlp_forward
from src.transfer import resample_experiment
from src.utils import parallel_map, worker_pool, write_csv, write_json

logger = logging.getLogger(__name__)

MISFIT_COLUMNS = ["iter", "mean_misfit", "min_misfit", "ensemble_spread"]


@dataclass(frozen=True)
class EkiConfig:
    """
    CODEX: Ensemble size, iteration count, noise scales (Q = q I, R = r I), Tikhonov weight,
    CODEX: prior scale and the observation subsampling used for operator training.
    """
    ensemble_size: int = 2000
    iterations: int = 1000
    q: float = 0.002
    r: float = 0.01
    lambda_tik: float = 0.1
    prior_std: float = 1.0
    seed: int = 0
    input_noise: float = 0.01
    output_noise: float = 0.01
    time_points: int = 16
    max_records: int = 0

    def __post_init__(self):
        if self.ensemble_size < 2:
            raise ConfigError("EKI needs an ensemble of at least two particles")
        if self.iterations < 0:
            raise ConfigError("EKI iteration count must be non-negative")
        if self.q < 0 or self.lambda_tik < 0 or self.prior_std < 0:
            raise ConfigError("EKI q, lambda_tik and prior_std must be non-negative")
        if not self.r > 0:
            raise ConfigError("EKI observation noise r must be positive")
        if self.time_points < 1 or self.max_records < 0:
            raise ConfigError("EKI time_points must be positive and max_records non-negative")

    @classmethod
    def from_config(cls, section, seed=0, **overrides):
        values = dict(section)
        values.update(overrides)
        values["seed"] = seed
        known = set(cls.__dataclass_fields__)
        return cls(**{k: v for k, v in values.items() if k in known})


@dataclass(frozen=True, eq=False)
class EkiEnsemble:
    """
    CODEX: Particle matrix theta (N_theta, J), last forward evaluations (M, J) and iteration index.
    """
    theta: np.ndarray
    forward: object = None
    iteration: int = 0

    @property
    def size(self):
        return self.theta.shape[1]


@dataclass(frozen=True, eq=False)
class Observation:
    """
    CODEX: Target y, (M,) shared or (M, J) per particle, with diagonal noise variances (M,).
    CODEX: Rows outside the perturbed mask (penalty rows) get no observation noise.
    """
    y: np.ndarray
    noise_var: np.ndarray
    perturbed: np.ndarray = None

    def __post_init__(self):
        if not np.all(np.isfinite(self.y)):
            raise NumericalError("Observation contains non-finite values")
        if self.noise_var.shape != (self.y.shape[0],) or np.any(self.noise_var <= 0):
            raise ShapeError("Observation noise variances must be positive, one per row")
        if self.perturbed is not None and np.shape(self.perturbed) != self.noise_var.shape:
            raise ShapeError("Observation perturbation mask needs one entry per row")

    @classmethod
    def isotropic(cls, y, r):
        y = np.asarray(y, dtype=float)
        return cls(y=y, noise_var=np.full(y.shape[0], float(r)))

    @classmethod
    def from_records(cls, targets, sigma2):
        """
        CODEX: Flatten (N, 3, P) targets record-outer, channel, time-inner with one noise level
        CODEX: per record (scalar sigma2 applies to all records).
        """
        targets = np.asarray(targets, dtype=float)
        per_record = np.broadcast_to(np.asarray(sigma2, dtype=float), (targets.shape[0],))
        noise = np.repeat(per_record, targets[0].size)
        return cls(y=targets.ravel(), noise_var=noise)


# =====================================================================
# CORE UPDATE
# =====================================================================

def init_ensemble(config, param_dim):
    """
    CODEX: J i.i.d. draws from N(0, prior_std^2 I), seeded.
    """
    if param_dim <= 0:
        raise ShapeError("Parameter dimension must be positive")
    rng = np.random.default_rng(config.seed)
    theta = config.prior_std * rng.standard_normal((param_dim, config.ensemble_size))
    return EkiEnsemble(theta=theta, forward=None, iteration=0)


def kalman_increment(theta_c, y_c, innovations, noise_var, method="auto"):
    """
    CODEX: Theta_c Y_c^T (Y_c Y_c^T + R)^-1 D for diagonal R.
    CODEX: Computed in whitened form with the smaller of the J x J and M x M systems.

    Args:
        theta_c (numpy.ndarray): Scaled centered parameters (N_theta, J)
        y_c (numpy.ndarray): Scaled centered forward values (M, J)
        innovations (numpy.ndarray): y + noise - forward, (M, J)
        noise_var (numpy.ndarray): Diagonal of R, (M,)
        method (str, optional): "auto", "subspace" (J x J), "observation" (M x M) or "direct"

    Returns:
        numpy.ndarray: Parameter increment (N_theta, J)
    """
    M, J = y_c.shape
    if method == "direct":
        c_yy = y_c @ y_c.T + np.diag(noise_var)
        return theta_c @ (y_c.T @ np.linalg.solve(c_yy, innovations))
    inv_sqrt = 1.0 / np.sqrt(noise_var)
    y_w = y_c * inv_sqrt[:, None]
    d_w = innovations * inv_sqrt[:, None]
    if method == "auto":
        method = "subspace" if J <= M else "observation"
    if method == "subspace":
        system = cho_factor(y_w.T @ y_w + np.eye(J))
        return theta_c @ cho_solve(system, y_w.T @ d_w)
    if method == "observation":
        system = cho_factor(y_w @ y_w.T + np.eye(M))
        return theta_c @ (y_w.T @ cho_solve(system, d_w))
    raise ConfigError(f"Unknown Kalman solve method: {method}")


def _check_forward(values, expected_rows):
    if values.shape[0] != expected_rows:
        raise ShapeError(f"Forward map returned {values.shape[0]} rows, observation has {expected_rows}")
    bad = np.flatnonzero(~np.all(np.isfinite(values), axis=0))
    if bad.size:
        raise NumericalError(f"Non-finite forward values for particle {int(bad[0])}", index=int(bad[0]))


def eki_step(ens, obs, config, forward):
    """
    CODEX: One EKI iteration: jitter, evaluate, form centered statistics, Kalman update.

    Args:
        ens (EkiEnsemble): Current particles
        obs (Observation): Data and noise
        config (EkiConfig): q, seed
        forward (callable): Maps (N_theta, J) particles to (M, J) predictions

    Returns:
        EkiEnsemble: Updated particles; forward holds the evaluations of the jittered particles
    """
    rng = np.random.default_rng([config.seed, ens.iteration])
    N_theta, J = ens.theta.shape
    theta_hat = ens.theta
    if config.q > 0:
        theta_hat = theta_hat + math.sqrt(config.q) * rng.standard_normal((N_theta, J))
    y_hat = forward(theta_hat)
    _check_forward(y_hat, obs.noise_var.shape[0])

    scale = 1.0 / math.sqrt(J - 1)
    theta_c = (theta_hat - theta_hat.mean(axis=1, keepdims=True)) * scale
    y_c = (y_hat - y_hat.mean(axis=1, keepdims=True)) * scale
    target = obs.y if obs.y.ndim == 2 else obs.y[:, None]
    noise = np.sqrt(obs.noise_var)[:, None] * rng.standard_normal(y_hat.shape)
    if obs.perturbed is not None:
        noise[~obs.perturbed] = 0.0
    innovations = target + noise - y_hat
    theta_new = theta_hat + kalman_increment(theta_c, y_c, innovations, obs.noise_var)
    return EkiEnsemble(theta=theta_new, forward=y_hat, iteration=ens.iteration + 1)


def misfit_row(iteration, ens_theta, y_hat, y):
    target = y if y.ndim == 2 else y[:, None]
    residual = target - y_hat
    mean_residual = residual.mean(axis=1)
    per_particle = np.sqrt(np.mean(residual ** 2, axis=0))
    return (iteration, float(np.sqrt(np.mean(mean_residual ** 2))), float(per_particle.min()),
            float(ens_theta.std(axis=1).mean()))


# =====================================================================
# OPERATOR TRAINING
# =====================================================================

@dataclass(frozen=True, eq=False)
class EkiInputs:
    """
    CODEX: Fixed (noise-perturbed) branch inputs and the subsampled normalized query times.
    """
    x: np.ndarray
    c: np.ndarray
    tau: np.ndarray


def forward_map(template, params, inputs):
    """
    CODEX: Normalized predictions for every fixed input, flattened record-outer, channel,
    CODEX: time-inner.
    """
    params = np.asarray(params, dtype=float)
    if params.shape != (template.n_params,):
        raise ShapeError(f"Particle has {params.size} parameters, template expects {template.n_params}")
    out, _ = forward_batch(with_parameters(template, params), inputs.x, inputs.c, inputs.tau)
    return out.ravel()


def unflatten(vector, n_records, n_times):
    return np.asarray(vector).reshape(n_records, 3, n_times)


def _forward_column(params, template, inputs):
    return forward_map(template, params, inputs)


def ensemble_forward(template, inputs, workers=1, executor=None):
    """
    CODEX: Forward map over all particle columns; evaluation order does not affect the result.
    CODEX: An open executor is reused for every call instead of a pool per evaluation.
    """
    def evaluate(theta):
        worker = partial(_forward_column, template=template, inputs=inputs)
        columns = parallel_map(worker, list(theta.T), workers, executor=executor)
        return np.column_stack(columns)
    return evaluate


@dataclass(eq=False)
class EkiResult:
    ensemble: EkiEnsemble
    template: object
    history: pd.DataFrame
    record_idx: np.ndarray = None
    time_idx: np.ndarray = None


def subsample_indices(total, wanted):
    if wanted <= 0 or wanted >= total:
        return np.arange(total)
    return np.unique(np.round(np.linspace(0, total - 1, wanted)).astype(int))


def eki_train(template, tset, config, workers=1):
    """
    CODEX: Train all operator parameters with EKI on the training split.

    Args:
        template (FilmDeepOnet): Architecture and normalization (its parameter values are unused)
        tset (TrainingSet): Training data
        config (EkiConfig): EKI settings
        workers (int, optional): Parallel forward evaluations. Defaults to 1.

    Returns:
        EkiResult: Final ensemble and per-iteration misfit history
    """
    rng = np.random.default_rng([config.seed, 1_000_003])
    record_idx = tset.train_idx[subsample_indices(len(tset.train_idx), config.max_records)]
    time_idx = subsample_indices(len(tset.times), config.time_points)

    x, c = tset.features(record_idx)
    column_std = x.std(axis=0)
    x = x + config.input_noise * column_std * rng.standard_normal(x.shape)
    targets = tset.normalized_targets(record_idx)[:, :, time_idx]
    channel_std = targets.std(axis=(0, 2))[None, :, None]
    targets = targets + config.output_noise * channel_std * rng.standard_normal(targets.shape)
    inputs = EkiInputs(x=x, c=c, tau=tset.tau[time_idx])
    obs = Observation.from_records(targets, config.r)

    ens = init_ensemble(config, template.n_params)
    logger.info(f"EKI training: J={config.ensemble_size}, {template.n_params} parameters, "
                f"{obs.y.size} observations, {config.iterations} iterations")
    history = []
    with worker_pool(workers, config.ensemble_size) as executor:
        forward = ensemble_forward(template, inputs, executor=executor)
        for _ in range(config.iterations):
            ens = eki_step(ens, obs, config, forward)
            history.append(misfit_row(ens.iteration - 1, ens.theta, ens.forward, obs.y))
            if ens.iteration % 10 == 0:
                logger.info(f"EKI iteration {ens.iteration}: mean misfit {history[-1][1]:.5e}")
        final_forward = forward(ens.theta)
    _check_forward(final_forward, obs.y.size)
    history.append(misfit_row(ens.iteration, ens.theta, final_forward, obs.y))
    ens = EkiEnsemble(theta=ens.theta, forward=final_forward, iteration=ens.iteration)
    return EkiResult(ensemble=ens, template=template, history=pd.DataFrame(history, columns=MISFIT_COLUMNS),
                     record_idx=record_idx, time_idx=time_idx)


def ensemble_models(ens, template):
    """
    CODEX: One FilmDeepOnet per particle column.
    """
    return [with_parameters(template, ens.theta[:, j]) for j in range(ens.size)]


# =====================================================================
# PREDICTION BANDS
# =====================================================================

@dataclass(eq=False)
class Bands:
    times: np.ndarray
    mean: np.ndarray           # (3, P)
    std: np.ndarray            # (3, P)
    trajectories: object = None  # (J, 3, P)


def predict_bands(models, T_samples, doc0, times, trajectories=False, t_origin=None, horizon=None):
    """
    CODEX: Pointwise ensemble mean and std per channel, optionally every particle trajectory.
    """
    if len(models) < 2:
        raise ConfigError("Prediction bands need at least two particles")
    stack = np.stack([predict_trajectory(m, T_samples, doc0, times, t_origin, horizon).channels()
                      for m in models])
    return Bands(times=np.asarray(times, dtype=float), mean=stack.mean(axis=0), std=stack.std(axis=0),
                 trajectories=stack if trajectories else None)


def bands_frame(bands):
    """
    CODEX: Plot-ready table: time plus mean and std of every channel.
    """
    data = {"time_min": bands.times}
    for c, name in enumerate(("doc", "log_visc_lnPaS", "deformation_mm")):
        data[f"{name}_mean"] = bands.mean[c]
        data[f"{name}_std"] = bands.std[c]
    return pd.DataFrame(data)


# =====================================================================
# TIKHONOV TRANSFER
# =====================================================================

@dataclass(eq=False)
class EkiTransferResult:
    models: list
    history: pd.DataFrame
    target: float
    terminal_before: np.ndarray
    terminal_after: np.ndarray


def _terminal_parts(model, branch_input):
    x, c = branch_features(model, branch_input[None, :-1], [branch_input[-1]])
    _, cache = mlp_forward(model.branch, x, model.film, c)
    return cache.inputs[-1][0], trunk_basis(model, 1.0)


def eki_transfer(models, rec, config):
    """
    CODEX: Tikhonov-regularized EKI over the final branch layer of every particle.
    CODEX: The observation is augmented with the particle's own initial last-layer parameters
    CODEX: (noise variance 1 / lambda_tik, never perturbed), so large lambda_tik pins each particle in place.

    Args:
        models (list): Trained ensemble members (frozen except the final branch layer)
        rec (ExperimentRecord): Measured cycle
        config (EkiConfig): iterations, q, r, lambda_tik, seed

    Returns:
        EkiTransferResult: Adapted members and the misfit history
    """
    if len(models) < 2:
        raise ConfigError("EKI transfer needs at least two particles")
    template = models[0]
    G = template.latent_width
    norm = template.normalization
    std, mean = norm.target_std[2], norm.target_mean[2]
    branch_input = resample_experiment(rec, template.sensor_count)
    parts = [_terminal_parts(m, branch_input) for m in models]
    shape_W = template.branch.weights[-1].shape
    n_w = shape_W[0] * shape_W[1]
    theta0 = np.column_stack([np.concatenate([m.branch.weights[-1].ravel(), m.branch.biases[-1]]) for m in models])
    J = theta0.shape[1]

    def terminal(theta):
        values = np.empty(J)
        for j, (a, phi) in enumerate(parts):
            W = theta[:n_w, j].reshape(shape_W)
            b = theta[n_w:, j]
            values[j] = float(np.dot(a @ W[:, 2 * G:] + b[2 * G:], phi)) * std + mean
        return values

    terminal_before = terminal(theta0)
    target = float(rec.terminal_deformation)
    if config.lambda_tik > 0:
        obs = Observation(y=np.vstack([np.full((1, J), target), theta0]),
                          noise_var=np.concatenate([[config.r], np.full(theta0.shape[0], 1.0 / config.lambda_tik)]),
                          perturbed=np.arange(theta0.shape[0] + 1) == 0)

        def forward(theta):
            return np.vstack([terminal(theta)[None, :], theta])
    else:
        obs = Observation.isotropic([target], config.r)

        def forward(theta):
            return terminal(theta)[None, :]

    ens = EkiEnsemble(theta=theta0, forward=None, iteration=0)
    history = []
    for _ in range(config.iterations):
        ens = eki_step(ens, obs, config, forward)
        before = ens.forward[:1]
        history.append(misfit_row(ens.iteration - 1, ens.theta, before, np.array([target])))
    terminal_after = terminal(ens.theta)
    history.append(misfit_row(ens.iteration, ens.theta, terminal_after[None, :], np.array([target])))

    adapted = []
    for j, m in enumerate(models):
        W = ens.theta[:n_w, j].reshape(shape_W).copy()
        b = ens.theta[n_w:, j].copy()
        adapted.append(with_last_branch_layer(m, W, b))
    logger.info(f"EKI transfer of {rec.label!r}: terminal mean {terminal_before.mean():.3f} -> "
                f"{terminal_after.mean():.3f} mm (target {target:.3f})")
    return EkiTransferResult(models=adapted, history=pd.DataFrame(history, columns=MISFIT_COLUMNS),
                             target=target, terminal_before=terminal_before, terminal_after=terminal_after)


# =====================================================================
# CHECKPOINTS
# =====================================================================

def save_particles(models, out_dir, history=None):
    """
    CODEX: manifest.json plus particles/particle_XXXX.json (one model document per particle).
    """
    members = []
    for j, m in enumerate(models):
        name = f"particles/particle_{j:04d}.json"
        save_model(m, os.path.join(out_dir, name))
        members.append({"particle": j, "file": name})
    write_json({"format": "curenet-eki-ensemble", "version": 1, "members": members,
                "ensemble_size": len(models)}, os.path.join(out_dir, "manifest.json"))
    if history is not None:
        write_csv(history, os.path.join(out_dir, "misfit.csv"))
