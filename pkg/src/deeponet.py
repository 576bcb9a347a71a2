#!/usr/bin/env python3
#  ██████╗██╗   ██╗██████╗ ███████╗███╗   ██╗███████╗████████╗
# ██╔════╝██║   ██║██╔══██╗██╔════╝████╗  ██║██╔════╝╚══██╔══╝
# ██║     ██║   ██║██████╔╝█████╗  ██╔██╗ ██║█████╗     ██║
# ██║     ██║   ██║██╔══██╗██╔══╝  ██║╚██╗██║██╔══╝     ██║
# ╚██████╗╚██████╔╝██║  ██║███████╗██║ ╚████║███████╗   ██║
#  ╚═════╝ ╚═════╝ ╚═╝  ╚═╝╚══════╝╚═╝  ╚═══╝╚══════╝   ╚═╝
# OPERATOR NETWORK MODULE v1.0
# CODEX: FiLM-conditioned DeepONet: the branch net encodes the sampled cure cycle (modulated by
# CODEX: the initial degree of cure), the trunk net supplies a time basis, and three dot products
# CODEX: give the degree-of-cure, log-viscosity and deformation histories.

import hashlib
import logging
from dataclasses import dataclass, field, asdict

import numpy as np

from src.errors import DataError, ShapeError
from src.nn import (MlpParams, FilmParams, backward, film_from_dict, film_to_dict, init_film,
                    init_mlp, mlp_forward, mlp_from_dict, mlp_to_dict)
from src.utils import read_json, write_json

logger = logging.getLogger(__name__)

MODEL_FORMAT = "curenet-deeponet"
MODEL_VERSION = 1
CHANNELS = ("doc", "log_viscosity", "deformation")
N_CHANNELS = len(CHANNELS)

# Adam-trained and EKI-trained architectures
ADAM_ARCHITECTURE = {"branch_hidden": [20, 20, 20], "trunk_hidden": [20, 20, 20], "latent_width": 20}
EKI_ARCHITECTURE = {"branch_hidden": [10, 10], "trunk_hidden": [10, 10], "latent_width": 30}


@dataclass(frozen=True)
class Normalization:
    """
    CODEX: Input scaling and per-channel target statistics stored with the model.

    Temperatures map to (T - T_offset) / T_scale, times to (t - t_origin) / horizon and the
    three target channels are z-scored with training-split statistics.
    """
    T_offset: float
    T_scale: float
    t_origin: float
    horizon: float
    target_mean: tuple
    target_std: tuple
    doc0_min: float = 0.0
    doc0_max: float = 1.0

    def __post_init__(self):
        if not (self.T_scale > 0 and self.horizon > 0):
            raise DataError("Normalization scales must be positive")
        if len(self.target_mean) != N_CHANNELS or len(self.target_std) != N_CHANNELS:
            raise ShapeError(f"Normalization needs {N_CHANNELS} channel statistics")
        if any(not s > 0 for s in self.target_std):
            raise DataError("Channel standard deviations must be positive")

    def normalize_temperature(self, T):
        return (np.asarray(T, dtype=float) - self.T_offset) / self.T_scale

    def normalize_channel(self, channel, values):
        return (np.asarray(values, dtype=float) - self.target_mean[channel]) / self.target_std[channel]

    def denormalize_channel(self, channel, values):
        return np.asarray(values, dtype=float) * self.target_std[channel] + self.target_mean[channel]

    def normalize_targets(self, targets):
        """
        CODEX: Z-score targets of shape (..., 3, P).
        """
        mean = np.asarray(self.target_mean)[:, None]
        std = np.asarray(self.target_std)[:, None]
        return (np.asarray(targets, dtype=float) - mean) / std

    def denormalize_targets(self, values):
        mean = np.asarray(self.target_mean)[:, None]
        std = np.asarray(self.target_std)[:, None]
        return np.asarray(values, dtype=float) * std + mean


@dataclass(frozen=True, eq=False)
class FilmDeepOnet:
    """
    CODEX: Branch MLP (input k + 1, output 3G) with FiLM on its last hidden layer, trunk MLP
    CODEX: (input 1, output G) and the normalization constants.
    """
    branch: MlpParams
    film: FilmParams
    trunk: MlpParams
    latent_width: int
    sensor_count: int
    normalization: Normalization

    def __post_init__(self):
        G = self.latent_width
        if self.branch.widths[0] != self.sensor_count + 1:
            raise ShapeError(f"Branch input width {self.branch.widths[0]} != sensor count + 1 ({self.sensor_count + 1})")
        if self.branch.widths[-1] != N_CHANNELS * G:
            raise ShapeError(f"Branch output width {self.branch.widths[-1]} != 3 * G ({N_CHANNELS * G})")
        if self.trunk.widths[0] != 1 or self.trunk.widths[-1] != G:
            raise ShapeError(f"Trunk must map 1 -> {G}, got {self.trunk.widths[0]} -> {self.trunk.widths[-1]}")
        if self.film.cond_dim != 1:
            raise ShapeError("FiLM conditioning is the scalar initial degree of cure")

    def architecture(self):
        return {
            "branch_hidden": self.branch.widths[1:-1],
            "trunk_hidden": self.trunk.widths[1:-1],
            "latent_width": self.latent_width,
            "sensor_count": self.sensor_count,
            "film_layer": self.film.layer,
        }

    @property
    def n_params(self):
        return self.branch.n_params + self.film.n_params + self.trunk.n_params


@dataclass(frozen=True, eq=False)
class Prediction:
    """
    CODEX: Physical-unit histories at the query times.
    """
    times: np.ndarray
    doc_hat: np.ndarray
    log_visc_hat: np.ndarray
    deformation_hat: np.ndarray
    metadata: dict = field(default_factory=dict)

    def channels(self):
        return np.stack([self.doc_hat, self.log_visc_hat, self.deformation_hat])


# =====================================================================
# CONSTRUCTION
# =====================================================================

def init_model(architecture, sensor_count, normalization, seed):
    """
    CODEX: Seeded initialization of a FiLM-DeepONet.

    Args:
        architecture (dict): branch_hidden, trunk_hidden, latent_width
        sensor_count (int): Number of branch temperature sensors k
        normalization (Normalization): Scaling constants
        seed (int): Initialization seed

    Returns:
        FilmDeepOnet: Freshly initialized model
    """
    branch_hidden = list(architecture["branch_hidden"])
    trunk_hidden = list(architecture["trunk_hidden"])
    G = int(architecture["latent_width"])
    if not branch_hidden:
        raise ShapeError("The branch net needs at least one hidden layer to carry FiLM")
    rng = np.random.default_rng(seed)
    branch = init_mlp([sensor_count + 1] + branch_hidden + [N_CHANNELS * G], rng)
    trunk = init_mlp([1] + trunk_hidden + [G], rng)
    film = init_film(1, branch_hidden[-1], len(branch_hidden) - 1)
    return FilmDeepOnet(branch=branch, film=film, trunk=trunk, latent_width=G,
                        sensor_count=sensor_count, normalization=normalization)


# =====================================================================
# COMPONENTS
# =====================================================================

def branch_features(model, T_samples, doc0):
    """
    CODEX: Normalized branch inputs and FiLM conditioning for a batch of cycles.

    Args:
        model (FilmDeepOnet): Model
        T_samples (numpy.ndarray): (N, k) raw sensor temperatures
        doc0 (numpy.ndarray): (N,) initial degrees of cure

    Returns:
        tuple: (x of shape (N, k + 1), c of shape (N, 1))
    """
    T = np.atleast_2d(np.asarray(T_samples, dtype=float))
    d = np.atleast_1d(np.asarray(doc0, dtype=float))
    if T.shape[1] != model.sensor_count:
        raise ShapeError(f"Expected {model.sensor_count} sensor temperatures, got {T.shape[1]}")
    if d.shape[0] != T.shape[0]:
        raise ShapeError(f"{T.shape[0]} temperature rows but {d.shape[0]} doc0 values")
    x = np.column_stack([model.normalization.normalize_temperature(T), d])
    return x, d[:, None]


def encode_branch(model, T_samples, doc0):
    """
    CODEX: FiLM-modulated branch output split into (h_d, h_v, h_eps) blocks of width G.
    """
    T = np.asarray(T_samples, dtype=float)
    if T.ndim != 1:
        raise ShapeError("encode_branch takes one cycle; use forward_batch for batches")
    x, c = branch_features(model, T[None, :], [doc0])
    out, _ = mlp_forward(model.branch, x, model.film, c)
    G = model.latent_width
    return out[0, :G], out[0, G:2 * G], out[0, 2 * G:]


def normalize_times(model, times, t_origin=None, horizon=None):
    """
    CODEX: Map physical times onto the trunk interval [0, 1].

    Args:
        model (FilmDeepOnet): Model
        times (array-like): Times in minutes
        t_origin (float, optional): Start of the cycle. Defaults to the training origin.
        horizon (float, optional): Cycle duration. Defaults to the training horizon.

    Returns:
        numpy.ndarray: Normalized times
    """
    norm = model.normalization
    origin = norm.t_origin if t_origin is None else t_origin
    span = norm.horizon if horizon is None else horizon
    if not span > 0:
        raise DataError(f"Cycle duration must be positive, got {span}")
    return (np.asarray(times, dtype=float) - origin) / span


def _trunk_input(tau):
    return (2.0 * np.asarray(tau, dtype=float) - 1.0).reshape(-1, 1)


def _extrapolation_check(tau):
    tau = np.atleast_1d(tau)
    outside = int(np.count_nonzero((tau < 0.0) | (tau > 1.0)))
    if outside:
        logger.warning(f"{outside} query time(s) outside the trained interval [0, 1]; trunk extrapolates")
    return outside


def trunk_basis(model, tau):
    """
    CODEX: Trunk basis at normalized time(s).

    Args:
        model (FilmDeepOnet): Model
        tau (float or array-like): Normalized time(s); values outside [0, 1] log a warning

    Returns:
        numpy.ndarray: (G,) for a scalar time, else (P, G)
    """
    _extrapolation_check(tau)
    phi, _ = mlp_forward(model.trunk, _trunk_input(tau))
    return phi[0] if np.ndim(tau) == 0 else phi


def contract(h, phi):
    """
    CODEX: Dot-product contraction of a branch block with a trunk basis vector.
    """
    h = np.asarray(h, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if h.shape != phi.shape or h.ndim != 1:
        raise ShapeError(f"Cannot contract shapes {h.shape} and {phi.shape}")
    return float(np.dot(h, phi))


def predict_trajectory(model, T_samples, doc0, times, t_origin=None, horizon=None):
    """
    CODEX: Physical-unit histories for one cycle at the requested times.

    Args:
        model (FilmDeepOnet): Trained model
        T_samples (numpy.ndarray): k raw sensor temperatures
        doc0 (float): Initial degree of cure
        times (array-like): Query times in minutes
        t_origin (float, optional): Cycle start for time rescaling
        horizon (float, optional): Cycle duration for time rescaling

    Returns:
        Prediction: doc, log-viscosity and deformation at each time
    """
    times = np.asarray(times, dtype=float)
    tau = normalize_times(model, times, t_origin, horizon)
    blocks = encode_branch(model, T_samples, doc0)
    phi = trunk_basis(model, tau)
    channels = []
    for c, h in enumerate(blocks):
        raw = np.array([contract(h, phi[p]) for p in range(phi.shape[0])])
        channels.append(model.normalization.denormalize_channel(c, raw))
    outside = int(np.count_nonzero((tau < 0.0) | (tau > 1.0)))
    metadata = {"extrapolated_points": outside, "extrapolated": outside > 0}
    return Prediction(times=times, doc_hat=channels[0], log_visc_hat=channels[1],
                      deformation_hat=channels[2], metadata=metadata)


# =====================================================================
# BATCHED EVALUATION
# =====================================================================

@dataclass(frozen=True, eq=False)
class BatchCache:
    model: FilmDeepOnet
    branch_cache: object
    trunk_cache: object
    blocks: np.ndarray   # (N, 3, G)
    basis: np.ndarray    # (P, G)


def forward_batch(model, x, c, tau):
    """
    CODEX: Normalized predictions for N cycles at P normalized times.

    Args:
        model (FilmDeepOnet): Model
        x (numpy.ndarray): (N, k + 1) normalized branch inputs
        c (numpy.ndarray): (N, 1) conditioning inputs
        tau (numpy.ndarray): (P,) normalized times

    Returns:
        tuple: (out of shape (N, 3, P), BatchCache)
    """
    hb, branch_cache = mlp_forward(model.branch, x, model.film, c)
    phi, trunk_cache = mlp_forward(model.trunk, _trunk_input(tau))
    blocks = hb.reshape(hb.shape[0], N_CHANNELS, model.latent_width)
    out = np.einsum("ncg,pg->ncp", blocks, phi)
    return out, BatchCache(model=model, branch_cache=branch_cache, trunk_cache=trunk_cache,
                           blocks=blocks, basis=phi)


def backward_batch(model, d_out, cache):
    """
    CODEX: Gradient of a scalar loss w.r.t. the flat parameter vector given dLoss/dout.

    Args:
        model (FilmDeepOnet): Model used in forward_batch
        d_out (numpy.ndarray): (N, 3, P) loss gradient
        cache (BatchCache): Cache from forward_batch

    Returns:
        numpy.ndarray: Flat gradient in parameter_vector order
    """
    if cache.model is not model:
        raise ShapeError("Backward pass called with a cache from a different model")
    d_blocks = np.einsum("ncp,pg->ncg", d_out, cache.basis)
    d_basis = np.einsum("ncp,ncg->pg", d_out, cache.blocks)
    branch_grads = backward(model.branch, model.film, d_blocks.reshape(d_blocks.shape[0], -1), cache.branch_cache)
    trunk_grads = backward(model.trunk, None, d_basis, cache.trunk_cache)
    return np.concatenate([branch_grads.to_vector(), branch_grads.film.to_vector(), trunk_grads.to_vector()])


def predict_terminal_batch(model, T_samples, doc0):
    """
    CODEX: Terminal degree of cure and deformation (physical units) for many cycles at once.

    Returns:
        tuple: (doc_final of shape (N,), deformation_final of shape (N,))
    """
    x, c = branch_features(model, T_samples, doc0)
    out, _ = forward_batch(model, x, c, np.array([1.0]))
    norm = model.normalization
    return norm.denormalize_channel(0, out[:, 0, 0]), norm.denormalize_channel(2, out[:, 2, 0])


# =====================================================================
# FLAT PARAMETERS
# =====================================================================

def parameter_vector(model):
    """
    CODEX: Flat parameters ordered branch layers, FiLM (gamma W, gamma b, beta W, beta b), trunk layers.
    """
    return np.concatenate([model.branch.to_vector(), model.film.to_vector(), model.trunk.to_vector()])


def parameter_slices(model):
    """
    CODEX: Named slices into parameter_vector. "branch.last" is the final branch layer.
    """
    nb = model.branch.n_params
    nf = model.film.n_params
    nt = model.trunk.n_params
    W_last = model.branch.weights[-1]
    n_last = W_last.size + W_last.shape[1]
    return {
        "branch": slice(0, nb),
        "branch.last": slice(nb - n_last, nb),
        "film": slice(nb, nb + nf),
        "trunk": slice(nb + nf, nb + nf + nt),
    }


def with_parameters(model, vector):
    """
    CODEX: New model with the given flat parameters; the normalization is shared.
    """
    vector = np.asarray(vector, dtype=float)
    if vector.shape != (model.n_params,):
        raise ShapeError(f"Parameter vector of length {vector.size} for a model with {model.n_params} parameters")
    s = parameter_slices(model)
    return FilmDeepOnet(
        branch=MlpParams.from_vector(model.branch.widths, vector[s["branch"]]),
        film=FilmParams.from_vector(1, model.film.width, model.film.layer, vector[s["film"]]),
        trunk=MlpParams.from_vector(model.trunk.widths, vector[s["trunk"]]),
        latent_width=model.latent_width,
        sensor_count=model.sensor_count,
        normalization=model.normalization,
    )


def with_last_branch_layer(model, weight, bias):
    """
    CODEX: New model whose final branch layer is replaced; every other array object is shared.
    """
    W_last = model.branch.weights[-1]
    if weight.shape != W_last.shape or bias.shape != (W_last.shape[1],):
        raise ShapeError(f"Last branch layer must be {W_last.shape}, got {weight.shape}")
    branch = MlpParams(weights=model.branch.weights[:-1] + (weight,),
                       biases=model.branch.biases[:-1] + (bias,))
    return FilmDeepOnet(branch=branch, film=model.film, trunk=model.trunk, latent_width=model.latent_width,
                        sensor_count=model.sensor_count, normalization=model.normalization)


def frozen_parameter_digest(model):
    """
    CODEX: SHA-256 over every parameter except the final branch layer.
    """
    vec = parameter_vector(model)
    last = parameter_slices(model)["branch.last"]
    frozen = np.concatenate([vec[:last.start], vec[last.stop:]])
    return hashlib.sha256(np.ascontiguousarray(frozen, dtype="<f8").tobytes()).hexdigest()


# =====================================================================
# SERIALIZATION
# =====================================================================

def model_to_dict(model):
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "latent_width": model.latent_width,
        "sensor_count": model.sensor_count,
        "channels": list(CHANNELS),
        "normalization": asdict(model.normalization),
        "branch": mlp_to_dict(model.branch),
        "film": film_to_dict(model.film),
        "trunk": mlp_to_dict(model.trunk),
    }


def model_from_dict(payload):
    if payload.get("format") != MODEL_FORMAT or payload.get("version") != MODEL_VERSION:
        raise DataError(f"Not a CureNet model document: {payload.get('format')} v{payload.get('version')}")
    norm = dict(payload["normalization"])
    norm["target_mean"] = tuple(norm["target_mean"])
    norm["target_std"] = tuple(norm["target_std"])
    return FilmDeepOnet(
        branch=mlp_from_dict(payload["branch"]),
        film=film_from_dict(payload["film"]),
        trunk=mlp_from_dict(payload["trunk"]),
        latent_width=int(payload["latent_width"]),
        sensor_count=int(payload["sensor_count"]),
        normalization=Normalization(**norm),
    )


def save_model(model, path):
    write_json(model_to_dict(model), path)


def load_model(path):
    return model_from_dict(read_json(path))
