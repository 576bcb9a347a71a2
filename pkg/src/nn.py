#!/usr/bin/env python3
#  ██████╗██╗   ██╗██████╗ ███████╗███╗   ██╗███████╗████████╗
# ██╔════╝██║   ██║██╔══██╗██╔════╝████╗  ██║██╔════╝╚══██╔══╝
# ██║     ██║   ██║██████╔╝█████╗  ██╔██╗ ██║█████╗     ██║
# ██║     ██║   ██║██╔══██╗██╔══╝  ██║╚██╗██║██╔══╝     ██║
# ╚██████╗╚██████╔╝██║  ██║███████╗██║ ╚████║███████╗   ██║
#  ╚═════╝ ╚═════╝ ╚═╝  ╚═╝╚══════╝╚═╝  ╚═══╝╚══════╝   ╚═╝
# NEURAL NETWORK MODULE v1.0
# CODEX: Small dense-network engine: tanh MLPs, FiLM modulation, exact backpropagation
# CODEX: and Adam with exponential learning-rate decay, all on plain numpy arrays.

import math
import logging
from dataclasses import dataclass, replace

import numpy as np

from src.errors import ShapeError, StaleCacheError, TrainingError

logger = logging.getLogger(__name__)

PARAMS_FORMAT = "curenet-mlp"
PARAMS_VERSION = 1


# =====================================================================
# PARAMETER CONTAINERS
# =====================================================================

@dataclass(frozen=True, eq=False)
class MlpParams:
    """
    CODEX: Dense network parameters. weights[l] has shape (in, out); tanh on hidden layers,
    CODEX: identity on the output layer.
    """
    weights: tuple
    biases: tuple

    def __post_init__(self):
        if len(self.weights) == 0 or len(self.weights) != len(self.biases):
            raise ShapeError("MLP needs one bias vector per weight matrix")
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or b.shape != (W.shape[1],):
                raise ShapeError(f"Layer {l}: weight {W.shape} and bias {b.shape} do not conform")
            if l > 0 and self.weights[l - 1].shape[1] != W.shape[0]:
                raise ShapeError(f"Layer {l}: expects {W.shape[0]} inputs, previous layer gives "
                                 f"{self.weights[l - 1].shape[1]}")

    @property
    def widths(self):
        return [self.weights[0].shape[0]] + [W.shape[1] for W in self.weights]

    @property
    def n_params(self):
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    def to_vector(self):
        """
        CODEX: Flatten as [W0, b0, W1, b1, ...], each weight row-major.
        """
        parts = []
        for W, b in zip(self.weights, self.biases):
            parts.append(W.ravel())
            parts.append(b)
        return np.concatenate(parts)

    @classmethod
    def from_vector(cls, widths, vector):
        vector = np.asarray(vector, dtype=float)
        expected = sum(i * o + o for i, o in zip(widths[:-1], widths[1:]))
        if vector.shape != (expected,):
            raise ShapeError(f"Parameter vector of length {vector.size} does not fit widths {widths} ({expected})")
        weights, biases = [], []
        pos = 0
        for n_in, n_out in zip(widths[:-1], widths[1:]):
            weights.append(vector[pos:pos + n_in * n_out].reshape(n_in, n_out))
            pos += n_in * n_out
            biases.append(vector[pos:pos + n_out])
            pos += n_out
        return cls(weights=tuple(weights), biases=tuple(biases))


@dataclass(frozen=True, eq=False)
class FilmParams:
    """
    CODEX: Affine maps gamma(c) = c @ gamma_weight + gamma_bias and beta(c) = c @ beta_weight + beta_bias
    CODEX: modulating the output of hidden layer `layer` of an MLP.
    """
    gamma_weight: np.ndarray
    gamma_bias: np.ndarray
    beta_weight: np.ndarray
    beta_bias: np.ndarray
    layer: int

    def __post_init__(self):
        width = self.gamma_bias.shape[0]
        for name in ("gamma_weight", "beta_weight"):
            arr = getattr(self, name)
            if arr.ndim != 2 or arr.shape[1] != width:
                raise ShapeError(f"FiLM {name} has shape {arr.shape}, expected (c_dim, {width})")
        if self.beta_bias.shape != (width,) or self.gamma_weight.shape != self.beta_weight.shape:
            raise ShapeError("FiLM gamma and beta maps must have identical shapes")

    @property
    def width(self):
        return self.gamma_bias.shape[0]

    @property
    def cond_dim(self):
        return self.gamma_weight.shape[0]

    @property
    def n_params(self):
        return 2 * (self.gamma_weight.size + self.gamma_bias.size)

    def to_vector(self):
        return np.concatenate([self.gamma_weight.ravel(), self.gamma_bias,
                               self.beta_weight.ravel(), self.beta_bias])

    @classmethod
    def from_vector(cls, cond_dim, width, layer, vector):
        vector = np.asarray(vector, dtype=float)
        block = cond_dim * width
        if vector.shape != (2 * (block + width),):
            raise ShapeError(f"FiLM vector of length {vector.size} does not fit ({cond_dim}, {width})")
        return cls(
            gamma_weight=vector[:block].reshape(cond_dim, width),
            gamma_bias=vector[block:block + width],
            beta_weight=vector[block + width:2 * block + width].reshape(cond_dim, width),
            beta_bias=vector[2 * block + width:],
            layer=layer,
        )


@dataclass(frozen=True, eq=False)
class MlpCache:
    params: MlpParams
    film: object
    inputs: tuple         # input of every layer
    hidden: tuple         # tanh outputs before FiLM
    cond: object
    gamma: object
    squeeze: bool


@dataclass(frozen=True, eq=False)
class MlpGrads:
    """
    CODEX: Gradients mirroring MlpParams and FilmParams, plus input and conditioning gradients.
    """
    weights: tuple
    biases: tuple
    film: object
    d_input: np.ndarray
    d_cond: object

    def to_vector(self):
        return MlpParams(weights=self.weights, biases=self.biases).to_vector()


# =====================================================================
# INITIALIZATION
# =====================================================================

def init_mlp(widths, rng):
    """
    CODEX: Glorot-uniform weights, zero biases.

    Args:
        widths (list): Layer widths including input and output
        rng (numpy.random.Generator): Seeded generator

    Returns:
        MlpParams: Initialized parameters
    """
    if len(widths) < 2 or any(w < 1 for w in widths):
        raise ShapeError(f"Invalid layer widths: {widths}")
    weights, biases = [], []
    for n_in, n_out in zip(widths[:-1], widths[1:]):
        limit = math.sqrt(6.0 / (n_in + n_out))
        weights.append(rng.uniform(-limit, limit, size=(n_in, n_out)))
        biases.append(np.zeros(n_out))
    return MlpParams(weights=tuple(weights), biases=tuple(biases))


def init_film(cond_dim, width, layer):
    """
    CODEX: Identity modulation: gamma == 1 and beta == 0 for every conditioning input.
    """
    return FilmParams(
        gamma_weight=np.zeros((cond_dim, width)),
        gamma_bias=np.ones(width),
        beta_weight=np.zeros((cond_dim, width)),
        beta_bias=np.zeros(width),
        layer=layer,
    )


# =====================================================================
# FORWARD / BACKWARD
# =====================================================================

def _as_batch(x, width, what):
    arr = np.asarray(x, dtype=float)
    squeeze = arr.ndim == 1
    if squeeze:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != width:
        raise ShapeError(f"{what}: expected width {width}, got shape {np.shape(x)}")
    return arr, squeeze


def _film_coefficients(c, f):
    return c @ f.gamma_weight + f.gamma_bias, c @ f.beta_weight + f.beta_bias


def film_apply(h, c, f):
    """
    CODEX: Feature-wise modulation gamma(c) * h + beta(c).

    Args:
        h (numpy.ndarray): Hidden features, (width,) or (N, width)
        c (array-like): Conditioning input, (c_dim,) or (N, c_dim)
        f (FilmParams): Modulation parameters

    Returns:
        numpy.ndarray: Modulated features, same shape as h
    """
    h_arr, squeeze = _as_batch(h, f.width, "FiLM input")
    c_arr, _ = _as_batch(np.atleast_1d(c) if np.ndim(c) == 0 else c, f.cond_dim, "FiLM conditioning")
    gamma, beta = _film_coefficients(c_arr, f)
    out = gamma * h_arr + beta
    return out[0] if squeeze else out


def mlp_forward(p, x, film=None, c=None):
    """
    CODEX: Forward pass through the tanh chain, optionally FiLM-modulating one hidden layer.

    Args:
        p (MlpParams): Network parameters
        x (numpy.ndarray): Input, (in,) or (N, in)
        film (FilmParams, optional): Modulation of hidden layer film.layer. Defaults to None.
        c (numpy.ndarray, optional): Conditioning input, (c_dim,) or (N, c_dim)

    Returns:
        tuple: (y, cache)
    """
    a, squeeze = _as_batch(x, p.weights[0].shape[0], "Layer 0")
    n_layers = len(p.weights)
    c_arr = gamma = None
    if film is not None:
        if not (0 <= film.layer < n_layers - 1):
            raise ShapeError(f"FiLM layer {film.layer} is not a hidden layer of a {n_layers}-layer network")
        if film.width != p.weights[film.layer].shape[1]:
            raise ShapeError(f"FiLM width {film.width} does not match hidden layer {film.layer} "
                             f"({p.weights[film.layer].shape[1]})")
        if c is None:
            raise ShapeError("FiLM modulation needs a conditioning input")
        c_arr, _ = _as_batch(c, film.cond_dim, "FiLM conditioning")
        if c_arr.shape[0] != a.shape[0]:
            raise ShapeError(f"Conditioning batch {c_arr.shape[0]} does not match input batch {a.shape[0]}")

    inputs, hidden = [], []
    for l in range(n_layers):
        inputs.append(a)
        z = a @ p.weights[l] + p.biases[l]
        if l == n_layers - 1:
            a = z
            break
        h = np.tanh(z)
        hidden.append(h)
        if film is not None and l == film.layer:
            gamma, beta = _film_coefficients(c_arr, film)
            a = gamma * h + beta
        else:
            a = h
    cache = MlpCache(params=p, film=film, inputs=tuple(inputs), hidden=tuple(hidden),
                     cond=c_arr, gamma=gamma, squeeze=squeeze)
    return (a[0] if squeeze else a), cache


def backward(p, f, loss_grad, cache):
    """
    CODEX: Exact gradients of a scalar loss given dLoss/dy.

    Args:
        p (MlpParams): Parameters used in the forward pass
        f (FilmParams): FiLM parameters used in the forward pass (or None)
        loss_grad (numpy.ndarray): dLoss/dy, same shape as y
        cache (MlpCache): Cache returned by mlp_forward

    Returns:
        MlpGrads: Gradients for every parameter plus d/dx and d/dc
    """
    if cache.params is not p or cache.film is not f:
        raise StaleCacheError("Backward pass called with a cache from different parameters")
    delta = np.asarray(loss_grad, dtype=float)
    if cache.squeeze:
        delta = delta[None, :]
    n_layers = len(p.weights)
    if delta.shape != (cache.inputs[0].shape[0], p.weights[-1].shape[1]):
        raise ShapeError(f"Loss gradient shape {np.shape(loss_grad)} does not match the output")

    grad_w = [None] * n_layers
    grad_b = [None] * n_layers
    film_grads = None
    d_cond = None
    for l in range(n_layers - 1, -1, -1):
        grad_w[l] = cache.inputs[l].T @ delta
        grad_b[l] = delta.sum(axis=0)
        d_a = delta @ p.weights[l].T
        if l == 0:
            break
        h = cache.hidden[l - 1]
        if f is not None and f.layer == l - 1:
            d_gamma = d_a * h
            d_beta = d_a
            film_grads = FilmParams(
                gamma_weight=cache.cond.T @ d_gamma,
                gamma_bias=d_gamma.sum(axis=0),
                beta_weight=cache.cond.T @ d_beta,
                beta_bias=d_beta.sum(axis=0),
                layer=f.layer,
            )
            d_cond = d_gamma @ f.gamma_weight.T + d_beta @ f.beta_weight.T
            d_h = d_a * cache.gamma
        else:
            d_h = d_a
        delta = d_h * (1.0 - h * h)

    if cache.squeeze:
        d_a = d_a[0]
        if d_cond is not None:
            d_cond = d_cond[0]
    return MlpGrads(weights=tuple(grad_w), biases=tuple(grad_b), film=film_grads,
                    d_input=d_a, d_cond=d_cond)


# =====================================================================
# ADAM
# =====================================================================

@dataclass(frozen=True, eq=False)
class AdamState:
    """
    CODEX: Adam moments over a flat parameter vector plus the decay schedule.
    """
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    learning_rate: float = 1e-3
    decay_rate: float = 0.95
    decay_steps: int = 1000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def create(cls, n_params, learning_rate=1e-3, decay_rate=0.95, decay_steps=1000):
        return cls(m=np.zeros(n_params), v=np.zeros(n_params), learning_rate=learning_rate,
                   decay_rate=decay_rate, decay_steps=decay_steps)

    def current_lr(self):
        """
        CODEX: Exponentially decayed rate lr0 * decay_rate ** (step / decay_steps).
        """
        return self.learning_rate * self.decay_rate ** (self.step / self.decay_steps)


def adam_step(state, params, grads):
    """
    CODEX: One bias-corrected Adam update with the scheduled learning rate.

    Args:
        state (AdamState): Optimizer state before the update
        params (numpy.ndarray): Flat parameter vector
        grads (numpy.ndarray): Flat gradient vector

    Returns:
        tuple: (new_params, new_state)
    """
    if params.shape != state.m.shape or grads.shape != state.m.shape:
        raise ShapeError(f"Adam state of size {state.m.size} got params {params.shape} and grads {grads.shape}")
    if not np.all(np.isfinite(grads)):
        raise TrainingError("Non-finite gradient", state.step)
    lr = state.current_lr()
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_params = params - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new_params, replace(state, m=m, v=v, step=t)


# =====================================================================
# SERIALIZATION
# =====================================================================

def mlp_to_dict(p):
    return {
        "format": PARAMS_FORMAT,
        "version": PARAMS_VERSION,
        "widths": p.widths,
        "weights": [W.tolist() for W in p.weights],
        "biases": [b.tolist() for b in p.biases],
    }


def mlp_from_dict(payload):
    if payload.get("format") != PARAMS_FORMAT or payload.get("version") != PARAMS_VERSION:
        raise ShapeError(f"Unsupported network document: {payload.get('format')} v{payload.get('version')}")
    return MlpParams(
        weights=tuple(np.array(W, dtype=float) for W in payload["weights"]),
        biases=tuple(np.array(b, dtype=float) for b in payload["biases"]),
    )


def film_to_dict(f):
    return {
        "layer": f.layer,
        "gamma_weight": f.gamma_weight.tolist(),
        "gamma_bias": f.gamma_bias.tolist(),
        "beta_weight": f.beta_weight.tolist(),
        "beta_bias": f.beta_bias.tolist(),
    }


def film_from_dict(payload):
    return FilmParams(
        gamma_weight=np.array(payload["gamma_weight"], dtype=float),
        gamma_bias=np.array(payload["gamma_bias"], dtype=float),
        beta_weight=np.array(payload["beta_weight"], dtype=float),
        beta_bias=np.array(payload["beta_bias"], dtype=float),
        layer=int(payload["layer"]),
    )
