# -*- encoding: utf-8 -*-
import sys
from pathlib import Path

import numpy as np
import pytest

cur_dir = Path(__file__).resolve().parent
root_dir = cur_dir.parent

sys.path.append(str(root_dir))

from churnlab.dataset import FeatureSpec, LabeledDataset
from churnlab.nnet import (
    DEEP_ANN_1,
    DEEP_ANN_2,
    AdamState,
    LayerSpec,
    NetworkParams,
    NeuralNetwork,
    NNetError,
    TrainConfig,
    adam_update,
    backward,
    bce_loss,
    build_layers,
    forward,
    init,
    train,
)


def as_dataset(x, y):
    specs = [FeatureSpec(f"x{j}") for j in range(x.shape[1])]
    return LabeledDataset(x, y, specs, [str(i) for i in range(len(y))])


def blobs(seed, n=200):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    centers = np.where(y[:, None] == 1, 2.0, -2.0)
    return as_dataset(centers + 0.5 * rng.normal(size=(n, 2)), y)


def test_build_layers_appends_sigmoid_output():
    layers = DEEP_ANN_1.layers()
    assert [l.width for l in layers] == [64, 32, 16, 8, 1]
    assert [l.activation for l in layers] == ["tanh", "relu", "relu", "relu", "sigmoid"]
    assert all(l.dropout_rate == 0.2 for l in layers[:-1])
    assert layers[-1].dropout_rate == 0.0
    assert DEEP_ANN_2.dropout == 0.4 and DEEP_ANN_2.learning_rate == 0.000012

    with pytest.raises(NNetError):
        build_layers([4, 2], ["tanh"])


@pytest.mark.parametrize(
    "kwargs",
    [dict(width=0), dict(width=2, activation="gelu"), dict(width=2, dropout_rate=1.0)],
)
def test_layer_spec_validation(kwargs):
    with pytest.raises(NNetError):
        LayerSpec(**kwargs)


def test_init_shapes_and_glorot_bounds():
    layers = build_layers([4], ["tanh"])
    params = init(3, layers, seed=0)
    assert [w.shape for w in params.weights] == [(4, 3), (1, 4)]
    assert np.all(np.abs(params.weights[0]) <= np.sqrt(6 / 7))
    assert all(np.all(b == 0) for b in params.biases)


def test_forward_dimension_mismatch():
    layers = build_layers([4], ["tanh"])
    params = init(3, layers)
    with pytest.raises(NNetError) as exc_info:
        forward(params, layers, np.zeros((2, 5)))
    assert "dimension mismatch" in str(exc_info.value)


def test_dropout_only_in_train_mode():
    layers = build_layers([16], ["relu"], dropout=0.5)
    params = init(3, layers, seed=1)
    batch = np.random.default_rng(0).normal(size=(8, 3))

    a = forward(params, layers, batch, "infer").probabilities
    b = forward(params, layers, batch, "infer").probabilities
    np.testing.assert_array_equal(a, b)

    t1 = forward(params, layers, batch, "train", mask_seed=[1, 2]).probabilities
    t2 = forward(params, layers, batch, "train", mask_seed=[1, 2]).probabilities
    t3 = forward(params, layers, batch, "train", mask_seed=[1, 3]).probabilities
    np.testing.assert_array_equal(t1, t2)
    assert not np.array_equal(t1, t3)
    assert not np.array_equal(t1, a)


@pytest.mark.parametrize(
    "n_in, widths, activations",
    [(2, [4], ["tanh"]), (4, [8, 8], ["relu", "relu"])],
)
def test_backward_matches_finite_differences(n_in, widths, activations):
    layers = build_layers(widths, activations)
    params = init(n_in, layers, seed=3)
    rng = np.random.default_rng(5)
    x = rng.normal(size=(10, n_in))
    y = (np.arange(10) % 2).astype(float)

    fp = forward(params, layers, x, "infer")
    grads = backward(params, layers, y, fp).flat()

    h = 1e-5
    flat = params.flat()
    for k, arr in enumerate(flat):
        numeric = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            plus = [p.copy() for p in flat]
            minus = [p.copy() for p in flat]
            plus[k][idx] += h
            minus[k][idx] -= h
            lp = bce_loss(forward(NetworkParams.from_flat(plus), layers, x).probabilities, y)
            lm = bce_loss(forward(NetworkParams.from_flat(minus), layers, x).probabilities, y)
            numeric[idx] = (lp - lm) / (2 * h)

        err = np.linalg.norm(grads[k] - numeric) / max(
            np.linalg.norm(grads[k]) + np.linalg.norm(numeric), 1e-12
        )
        assert err <= 1e-4


def test_adam_on_quadratic():
    config = TrainConfig(learning_rate=0.1)
    w = [np.array([1.0])]
    state = AdamState.zeros(w)
    for _ in range(200):
        w, state = adam_update(w, [2.0 * w[0]], state, config)
    assert abs(w[0][0]) < 0.05
    assert state.t == 200


def test_adam_leaves_inputs_untouched():
    config = TrainConfig(learning_rate=0.1)
    w = [np.array([1.0, 2.0])]
    state = AdamState.zeros(w)
    new_w, new_state = adam_update(w, [np.array([1.0, 1.0])], state, config)
    assert w[0].tolist() == [1.0, 2.0]
    assert state.t == 0 and new_state.t == 1
    np.testing.assert_allclose(new_w[0], [0.9, 1.9])


def test_adam_zero_gradient_keeps_params():
    config = TrainConfig(learning_rate=0.1)
    w = [np.array([1.0, -2.0]), np.array([[0.5]])]
    new_w, new_state = adam_update(w, [np.zeros(2), np.zeros((1, 1))], AdamState.zeros(w), config)
    for before, after in zip(w, new_w):
        np.testing.assert_array_equal(before, after)
    assert new_state.t == 1


def test_loss_decreases_on_convex_logistic():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(400, 2))
    y = (rng.random(400) < 1.0 / (1.0 + np.exp(-(3.0 * x[:, 0] - 3.0 * x[:, 1])))).astype(int)
    config = TrainConfig(learning_rate=0.005, epochs=60, batch_size=400, seed=0)
    net = train(as_dataset(x, y), build_layers([], []), config)

    assert np.all(np.diff(net.loss_trace) <= 0)
    assert net.loss_trace[-1] < net.loss_trace[0]


@pytest.mark.parametrize("seed", range(5))
def test_train_separable_blobs(seed):
    ds = blobs(seed)
    config = TrainConfig(learning_rate=0.01, epochs=100, batch_size=32, seed=seed)
    net = train(ds, build_layers([8], ["relu"]), config)

    accuracy = np.mean(net.predict(ds.features) == ds.labels)
    assert accuracy >= 0.99
    assert len(net.loss_trace) == 100


def test_train_xor():
    x = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    y = np.array([0, 1, 1, 0])
    config = TrainConfig(learning_rate=0.03, epochs=2000, batch_size=4, seed=0)
    net = train(as_dataset(x, y), build_layers([8, 8], ["tanh", "tanh"]), config)
    assert net.loss_trace[-1] < 0.1


def test_train_is_seeded():
    ds = blobs(0, n=64)
    config = TrainConfig(learning_rate=0.01, epochs=3, batch_size=16, seed=4)
    layers = build_layers([8], ["relu"], dropout=0.2)
    a = train(ds, layers, config)
    b = train(ds, layers, config)
    np.testing.assert_array_equal(a.predict_proba(ds.features), b.predict_proba(ds.features))


def test_network_json_and_loss_trace(tmp_path):
    ds = blobs(1, n=32)
    net = train(ds, build_layers([4], ["tanh"]), TrainConfig(epochs=2, batch_size=8))
    restored = NeuralNetwork.from_json(net.to_json())
    np.testing.assert_array_equal(restored.predict_proba(ds.features), net.predict_proba(ds.features))

    net.save_loss_trace(tmp_path / "loss.csv")
    lines = (tmp_path / "loss.csv").read_text().splitlines()
    assert lines[0] == "epoch,loss" and len(lines) == 3
