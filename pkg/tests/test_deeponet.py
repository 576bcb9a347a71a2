#!/usr/bin/env python3
#  ██████╗██╗   ██╗██████╗ ███████╗███╗   ██╗███████╗████████╗
# ██╔════╝██║   ██║██╔══██╗██╔════╝████╗  ██║██╔════╝╚══██╔══╝
# ██║     ██║   ██║██████╔╝█████╗  ██╔██╗ ██║█████╗     ██║   
# ██║     ██║   ██║██╔══██╗██╔══╝  ██║╚██╗██║██╔══╝     ██║   
# ╚██████╗╚██████╔╝██║  ██║███████╗██║ ╚████║███████╗   ██║   
#  ╚═════╝ ╚═════╝ ╚═╝  ╚═╝╚══════╝╚═╝  ╚═══╝╚══════╝   ╚═╝   
# OPERATOR NETWORK TEST SCRIPT v1.0
# CODEX: Branch/trunk composition, batched gradients, flat parameters and model files.

import logging
import os
import sys

import numpy as np
import pytest

# Add the project directory to the path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.deeponet import (FilmDeepOnet, Normalization, backward_batch, branch_features, contract,
                          encode_branch, forward_batch, frozen_parameter_digest, init_model,
                          load_model, normalize_times, parameter_slices, parameter_vector,
                          predict_terminal_batch, predict_trajectory, save_model, trunk_basis,
                          with_last_branch_layer, with_parameters)
from src.errors import DataError, ShapeError
from src.nn import MlpParams

from conftest import TINY_ARCHITECTURE


def sample_cycle(tset, index=0):
    return tset.T_samples[index], float(tset.doc0[index])


# =====================================================================
# COMPONENTS
# =====================================================================

def test_encode_branch_blocks(tiny_model, tiny_tset):
    T, doc0 = sample_cycle(tiny_tset)
    h_d, h_v, h_eps = encode_branch(tiny_model, T, doc0)
    assert h_d.shape == h_v.shape == h_eps.shape == (4,)
    again = encode_branch(tiny_model, T, doc0)
    for first, second in zip((h_d, h_v, h_eps), again):
        np.testing.assert_array_equal(first, second)


def test_encode_branch_depends_on_initial_doc(tiny_model, tiny_tset):
    T, _ = sample_cycle(tiny_tset)
    high = np.concatenate(encode_branch(tiny_model, T, 0.3))
    low = np.concatenate(encode_branch(tiny_model, T, 0.001))
    assert np.max(np.abs(high - low)) > 0.0


def test_branch_features_check_shapes(tiny_model):
    with pytest.raises(ShapeError):
        branch_features(tiny_model, np.zeros((2, 5)), [0.3, 0.3])
    with pytest.raises(ShapeError):
        branch_features(tiny_model, np.zeros((2, 8)), [0.3])


def test_trunk_basis_shape_and_continuity(tiny_model):
    phi = trunk_basis(tiny_model, 0.4)
    assert phi.shape == (4,)
    assert np.all(np.abs(trunk_basis(tiny_model, 0.4 + 1e-6) - phi) < 1e-3)
    assert trunk_basis(tiny_model, np.linspace(0, 1, 5)).shape == (5, 4)


def test_zero_trunk_gives_zero_basis(tiny_model):
    trunk = tiny_model.trunk
    zero = MlpParams(weights=tuple(np.zeros_like(W) for W in trunk.weights),
                     biases=tuple(np.zeros_like(b) for b in trunk.biases))
    model = FilmDeepOnet(branch=tiny_model.branch, film=tiny_model.film, trunk=zero,
                         latent_width=4, sensor_count=8, normalization=tiny_model.normalization)
    np.testing.assert_array_equal(trunk_basis(model, 0.7), np.zeros(4))


def test_trunk_extrapolation_is_logged(tiny_model, caplog):
    with caplog.at_level(logging.WARNING, logger="src.deeponet"):
        trunk_basis(tiny_model, np.array([0.5, 1.2]))
    assert "outside the trained interval" in caplog.text


def test_contract_arithmetic():
    assert contract([1.0, 2.0], [3.0, 4.0]) == 11.0
    assert contract([1.0, 2.0], [0.0, 0.0]) == 0.0
    h, phi = np.array([0.3, -1.7, 2.2]), np.array([1.1, 0.4, -0.9])
    assert contract(2.5 * h, phi) == pytest.approx(2.5 * contract(h, phi), abs=1e-12)
    assert contract(h, phi) == contract(phi, h)
    with pytest.raises(ShapeError):
        contract([1.0, 2.0], [1.0])


# =====================================================================
# PREDICTION
# =====================================================================

def test_predict_trajectory_equals_manual_composition(tiny_model, tiny_tset):
    T, doc0 = sample_cycle(tiny_tset, 1)
    times = tiny_tset.times
    prediction = predict_trajectory(tiny_model, T, doc0, times)
    blocks = encode_branch(tiny_model, T, doc0)
    phi = trunk_basis(tiny_model, normalize_times(tiny_model, times))
    norm = tiny_model.normalization
    for c, (h, values) in enumerate(zip(blocks, prediction.channels())):
        manual = norm.denormalize_channel(c, np.array([contract(h, phi[p]) for p in range(len(times))]))
        np.testing.assert_array_equal(values, manual)
    assert prediction.doc_hat.shape == times.shape
    assert prediction.metadata == {"extrapolated_points": 0, "extrapolated": False}


def test_predict_trajectory_flags_extrapolation(tiny_model, tiny_tset):
    T, doc0 = sample_cycle(tiny_tset)
    times = np.array([tiny_tset.times[0], tiny_tset.times[-1] + 30.0])
    prediction = predict_trajectory(tiny_model, T, doc0, times)
    assert prediction.metadata["extrapolated_points"] == 1


def test_normalize_times_uses_own_duration(tiny_model):
    np.testing.assert_allclose(normalize_times(tiny_model, [10.0, 60.0], t_origin=10.0, horizon=100.0), [0.0, 0.5])
    with pytest.raises(DataError):
        normalize_times(tiny_model, [1.0], horizon=0.0)


def test_forward_batch_agrees_with_single_prediction(tiny_model, tiny_tset):
    x, c = tiny_tset.features()
    out, _ = forward_batch(tiny_model, x, c, tiny_tset.tau)
    assert out.shape == (len(tiny_tset), 3, len(tiny_tset.times))
    T, doc0 = sample_cycle(tiny_tset, 5)
    prediction = predict_trajectory(tiny_model, T, doc0, tiny_tset.times)
    np.testing.assert_allclose(tiny_model.normalization.denormalize_targets(out[5]), prediction.channels(),
                               rtol=1e-10, atol=1e-10)


def test_predict_terminal_batch_matches_trajectory_end(tiny_model, tiny_tset):
    doc_final, deformation_final = predict_terminal_batch(tiny_model, tiny_tset.T_samples[:3], tiny_tset.doc0[:3])
    for i in range(3):
        T, doc0 = sample_cycle(tiny_tset, i)
        prediction = predict_trajectory(tiny_model, T, doc0, [tiny_tset.times[-1]])
        assert doc_final[i] == pytest.approx(prediction.doc_hat[0], abs=1e-10)
        assert deformation_final[i] == pytest.approx(prediction.deformation_hat[0], abs=1e-10)


def test_backward_batch_matches_central_differences(tiny_model, tiny_tset, rng):
    x, c = tiny_tset.features([0, 1, 2])
    tau = tiny_tset.tau[::3]
    weights = rng.normal(size=(3, 3, tau.size))
    theta = parameter_vector(tiny_model)

    def objective(vector):
        out, _ = forward_batch(with_parameters(tiny_model, vector), x, c, tau)
        return float(np.sum(weights * out))

    _, cache = forward_batch(tiny_model, x, c, tau)
    analytic = backward_batch(tiny_model, weights, cache)
    assert analytic.shape == theta.shape

    indices = rng.choice(theta.size, size=min(100, theta.size), replace=False)
    numeric = np.empty(indices.size)
    step = 1e-5
    for n, i in enumerate(indices):
        plus, minus = theta.copy(), theta.copy()
        plus[i] += step
        minus[i] -= step
        numeric[n] = (objective(plus) - objective(minus)) / (2 * step)
    error = np.linalg.norm(numeric - analytic[indices]) / np.linalg.norm(analytic[indices])
    assert error < 1e-5


# =====================================================================
# FLAT PARAMETERS
# =====================================================================

def test_parameter_slices_cover_vector(tiny_model):
    slices = parameter_slices(tiny_model)
    theta = parameter_vector(tiny_model)
    assert theta.size == tiny_model.n_params
    assert slices["trunk"].stop == theta.size
    last = slices["branch.last"]
    W, b = tiny_model.branch.weights[-1], tiny_model.branch.biases[-1]
    np.testing.assert_array_equal(theta[last], np.concatenate([W.ravel(), b]))


def test_with_parameters_rebuilds_same_model(tiny_model, tiny_tset):
    rebuilt = with_parameters(tiny_model, parameter_vector(tiny_model))
    T, doc0 = sample_cycle(tiny_tset)
    np.testing.assert_array_equal(predict_trajectory(rebuilt, T, doc0, tiny_tset.times).channels(),
                                  predict_trajectory(tiny_model, T, doc0, tiny_tset.times).channels())
    with pytest.raises(ShapeError):
        with_parameters(tiny_model, np.zeros(3))


def test_last_layer_swap_keeps_frozen_digest(tiny_model):
    W, b = tiny_model.branch.weights[-1], tiny_model.branch.biases[-1]
    swapped = with_last_branch_layer(tiny_model, W + 1.0, b - 1.0)
    assert frozen_parameter_digest(swapped) == frozen_parameter_digest(tiny_model)
    assert swapped.trunk is tiny_model.trunk
    moved = with_parameters(tiny_model, parameter_vector(tiny_model) + 1e-3)
    assert frozen_parameter_digest(moved) != frozen_parameter_digest(tiny_model)
    with pytest.raises(ShapeError):
        with_last_branch_layer(tiny_model, W[:-1], b)


def test_same_seed_same_model(tiny_tset):
    first = init_model(TINY_ARCHITECTURE, 8, tiny_tset.normalization, seed=11)
    second = init_model(TINY_ARCHITECTURE, 8, tiny_tset.normalization, seed=11)
    third = init_model(TINY_ARCHITECTURE, 8, tiny_tset.normalization, seed=12)
    np.testing.assert_array_equal(parameter_vector(first), parameter_vector(second))
    assert not np.array_equal(parameter_vector(first), parameter_vector(third))


def test_init_model_requires_hidden_branch_layer(tiny_tset):
    with pytest.raises(ShapeError):
        init_model({"branch_hidden": [], "trunk_hidden": [4], "latent_width": 2}, 8, tiny_tset.normalization, 0)


def test_normalization_rejects_degenerate_scales():
    with pytest.raises(DataError):
        Normalization(T_offset=20.0, T_scale=0.0, t_origin=0.0, horizon=1.0,
                      target_mean=(0.0, 0.0, 0.0), target_std=(1.0, 1.0, 1.0))
    with pytest.raises(ShapeError):
        Normalization(T_offset=20.0, T_scale=1.0, t_origin=0.0, horizon=1.0,
                      target_mean=(0.0, 0.0), target_std=(1.0, 1.0))


# =====================================================================
# MODEL FILES
# =====================================================================

def test_model_file_preserves_predictions(tmp_path, tiny_model, tiny_tset):
    path = str(tmp_path / "model.json")
    save_model(tiny_model, path)
    loaded = load_model(path)
    assert loaded.architecture() == tiny_model.architecture()
    assert loaded.normalization == tiny_model.normalization
    T, doc0 = sample_cycle(tiny_tset)
    np.testing.assert_array_equal(predict_trajectory(loaded, T, doc0, tiny_tset.times).channels(),
                                  predict_trajectory(tiny_model, T, doc0, tiny_tset.times).channels())


def test_load_model_rejects_foreign_document(tmp_path):
    path = tmp_path / "other.json"
    path.write_text('{"format": "curenet-dataset", "version": 1}')
    with pytest.raises(DataError):
        load_model(str(path))
