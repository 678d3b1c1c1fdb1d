import json

import numpy as np
import pytest

from wellmon.base import NotFittedError
from wellmon.cnn import (
    ACTIVATIONS,
    CnnClassifier,
    SearchSpace,
    TrainingDivergedError,
    avgpool_forward,
    conv1d_forward,
    random_search,
    sample_trial,
)


# ---------------------------------------------------------------------------
# layer primitives
# ---------------------------------------------------------------------------

def test_conv_identity_filter():
    x = np.arange(10.0)[None, :]  # 1 channel, length 10
    filters = np.zeros((1, 1, 3))
    filters[0, 0, 0] = 1.0  # delta at j=0
    out = conv1d_forward(x, filters, np.zeros(1))
    assert np.array_equal(out, x[:, :8])


def test_conv_sliding_sums():
    x = np.array([[1.0, 2.0, 3.0, 4.0]])
    filters = np.ones((1, 1, 3))
    out = conv1d_forward(x, filters, np.zeros(1))
    assert np.allclose(out, [[6.0, 9.0]])


def test_conv_default_layer_shape(rng):
    x = rng.standard_normal((6, 300))
    filters = rng.standard_normal((12, 6, 30))
    out = conv1d_forward(x, filters, rng.standard_normal(12))
    assert out.shape == (12, 271)


def test_conv_matches_direct_computation(rng):
    x = rng.standard_normal((3, 20))
    filters = rng.standard_normal((4, 3, 5))
    bias = rng.standard_normal(4)
    out = conv1d_forward(x, filters, bias)
    for c in range(4):
        for i in range(16):
            expected = bias[c] + np.sum(filters[c] * x[:, i : i + 5])
            assert out[c, i] == pytest.approx(expected, abs=1e-12)


def test_conv_rejects_short_input(rng):
    with pytest.raises(ValueError, match="kernel"):
        conv1d_forward(rng.standard_normal((1, 4)), np.ones((1, 1, 5)), np.zeros(1))


def test_avgpool_constant_preserved():
    out = avgpool_forward(np.full((3, 40), 2.5))
    assert np.allclose(out, 2.5)


def test_avgpool_shapes(rng):
    assert avgpool_forward(rng.standard_normal((12, 271))).shape == (12, 52)
    assert avgpool_forward(rng.standard_normal((24, 23))).shape == (24, 2)


def test_avgpool_window_means():
    x = np.arange(20.0)[None, :]
    out = avgpool_forward(x, kernel=4, stride=2)
    assert np.allclose(out[0], [1.5, 3.5, 5.5, 7.5, 9.5, 11.5, 13.5, 15.5, 17.5])


def test_avgpool_rejects_short(rng):
    with pytest.raises(ValueError):
        avgpool_forward(rng.standard_normal((2, 10)), kernel=15, stride=5)


# ---------------------------------------------------------------------------
# forward pass
# ---------------------------------------------------------------------------

def test_zero_parameters_give_half():
    model = CnnClassifier().init_params(300)
    for name in model.params_:
        model.params_[name][:] = 0.0
    probs, embedding = model.forward(np.zeros((2, 6, 300)))
    assert np.all(probs == 0.5)
    assert np.all(embedding == 0.0)


def test_forward_shapes_and_range(rng):
    model = CnnClassifier(seed=1).init_params(300)
    probs, embedding = model.forward(rng.standard_normal((5, 6, 300)))
    assert probs.shape == (5,)
    assert embedding.shape == (5, 2)
    assert np.all((probs > 0.0) & (probs < 1.0))


def test_shape_chain_flatten_48():
    model = CnnClassifier()
    assert model.flatten_size(300) == 48
    for length in range(284, 309):
        assert model.flatten_size(length) == 48


def test_forward_rejects_incompatible_length(rng):
    model = CnnClassifier(seed=0).init_params(300)
    with pytest.raises(ValueError, match="fc1"):
        model.forward(rng.standard_normal((1, 6, 350)))
    with pytest.raises(ValueError, match="conv1"):
        model.forward(rng.standard_normal((1, 6, 20)))
    with pytest.raises(ValueError, match=r"channels"):
        model.forward(rng.standard_normal((1, 4, 300)))


def test_forward_before_init_raises(rng):
    with pytest.raises(NotFittedError):
        CnnClassifier().forward(rng.standard_normal((1, 6, 300)))


def test_activations_cover_table_set():
    assert set(ACTIVATIONS) == {"tanh", "sigmoid", "swish", "relu", "leaky_relu"}
    f, df = ACTIVATIONS["swish"]
    z = np.array([0.7])
    assert f(z)[0] == pytest.approx(0.7 / (1.0 + np.exp(-0.7)))
    eps = 1e-6
    numeric = (f(z + eps) - f(z - eps)) / (2 * eps)
    assert df(z)[0] == pytest.approx(numeric[0], abs=1e-8)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def _toy_data(rng, n=8, length=300):
    X = rng.standard_normal((n, 6, length))
    X[n // 2 :, 4:, :] *= 2.0  # class 1 has inflated bending-moment channels
    y = np.array([0] * (n // 2) + [1] * (n // 2))
    return X, y


def test_zero_learning_rate_leaves_parameters(rng):
    X, y = _toy_data(rng)
    model = CnnClassifier(epochs=3, learning_rate=0.0, seed=2)
    model.fit(X, y)
    reference = CnnClassifier(seed=2).init_params(300)
    for name in reference.params_:
        assert np.array_equal(model.params_[name], reference.params_[name])


def test_single_sample_memorization(rng):
    X = rng.standard_normal((1, 6, 300))
    y = np.array([1])
    model = CnnClassifier(epochs=500, learning_rate=1e-2, batch_size=1, seed=0)
    model.fit(X, y)
    assert model.mse(X, y) < 1e-3


def test_loss_decreases_early(rng):
    X, y = _toy_data(rng, n=12)
    for lr in (1e-3, 1e-2):
        model = CnnClassifier(epochs=5, learning_rate=lr, batch_size=4, seed=3)
        model.fit(X, y)
        curve = model.history_["train_mse"]
        assert curve[-1] < curve[0]


def test_history_shapes(rng):
    X, y = _toy_data(rng)
    model = CnnClassifier(epochs=4, learning_rate=1e-3, seed=0)
    model.fit(X, y, eval_set=(X, y))
    assert len(model.history_["train_mse"]) == 4
    assert len(model.history_["test_mse"]) == 4


def test_training_determinism(rng):
    X, y = _toy_data(rng)
    a = CnnClassifier(epochs=3, learning_rate=1e-3, seed=7).fit(X, y)
    b = CnnClassifier(epochs=3, learning_rate=1e-3, seed=7).fit(X.copy(), y.copy())
    for name in a.params_:
        assert np.array_equal(a.params_[name], b.params_[name])


def test_divergence_aborts_with_location(rng):
    # the guard fires on any non-finite loss, naming epoch and batch
    X, y = _toy_data(rng, n=4)
    X[2, 3, 17] = np.nan
    model = CnnClassifier(epochs=5, learning_rate=1e-3, batch_size=4, seed=0)
    with pytest.raises(TrainingDivergedError, match="epoch 0, batch 0"):
        model.fit(X, y)


def test_predict_threshold(rng):
    X, y = _toy_data(rng)
    model = CnnClassifier(epochs=2, learning_rate=1e-3, seed=0).fit(X, y)
    probs = model.predict_proba(X)
    assert np.array_equal(model.predict(X), (probs >= 0.5).astype(int))


# ---------------------------------------------------------------------------
# gradient check
# ---------------------------------------------------------------------------

def test_grad_check_fc_only_path(rng):
    # convs bypassed entirely: the model reduces to flatten -> fc -> sigmoid
    X = rng.standard_normal((4, 2, 12))
    y = np.array([0, 1, 0, 1])
    model = CnnClassifier(
        conv_layers=(), in_channels=2, activation="tanh", seed=0
    ).init_params(12)
    assert model.flatten_size_ == 24
    err = model.grad_check(X, y, fraction=0.5, seed=1)
    assert err < 1e-7


def test_grad_check_full_network(rng):
    X = rng.standard_normal((4, 6, 300))
    y = np.array([0, 1, 1, 0])
    model = CnnClassifier(activation="swish", seed=4).init_params(300)
    assert model.grad_check(X, y, seed=2) < 1e-4


def test_grad_check_excludes_kink_probes():
    # zero input and zero conv biases put every relu pre-activation at the
    # kink; perturbing conv parameters flips the sign, so they are excluded
    model = CnnClassifier(activation="relu", seed=0).init_params(300)
    model.params_["conv1.b"][:] = 0.0
    X = np.zeros((2, 6, 300))
    y = np.array([0, 1])
    err = model.grad_check(X, y, fraction=0.02, seed=0)
    assert np.isfinite(err)
    assert err < 1e-4


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def test_checkpoint_roundtrip(tmp_path, rng):
    X, y = _toy_data(rng)
    model = CnnClassifier(epochs=2, learning_rate=1e-3, seed=5).fit(X, y)
    model.save(tmp_path / "cnn_model")
    manifest = json.loads((tmp_path / "cnn_model.json").read_text())
    assert manifest["dtype"] == "float64"
    assert {t["name"] for t in manifest["tensors"]} == set(model.params_)
    loaded = CnnClassifier.load(tmp_path / "cnn_model")
    for name in model.params_:
        assert np.array_equal(loaded.params_[name], model.params_[name])
    assert np.array_equal(loaded.predict(X), model.predict(X))


# ---------------------------------------------------------------------------
# random search
# ---------------------------------------------------------------------------

def test_sample_distributions():
    space = SearchSpace()
    rng = np.random.default_rng(0)
    draws = [sample_trial(space, rng) for _ in range(10000)]
    log_lr = np.log10([d["learning_rate"] for d in draws])
    q1, q2, q3 = np.percentile(log_lr, [25, 50, 75])
    assert q1 == pytest.approx(-3.25, abs=0.1)
    assert q2 == pytest.approx(-2.5, abs=0.1)
    assert q3 == pytest.approx(-1.75, abs=0.1)
    assert {d["batch_size"] for d in draws} == {10, 30, 50, 100}
    assert {d["activation"] for d in draws} == set(space.activations)
    log_wd = np.log10([d["weight_decay"] for d in draws])
    assert log_wd.min() >= np.log10(1e-7) and log_wd.max() <= np.log10(5e-4)


def test_random_search_single_trial(rng, tmp_path):
    X, y = _toy_data(rng)
    space = SearchSpace(n_trials=1)
    best, trials = random_search(
        space, X, y, X, y, seed=3, epochs=2, log_path=tmp_path / "trials.jsonl"
    )
    assert len(trials) == 1
    assert best["activation"] == trials[0]["activation"]
    assert best["learning_rate"] == trials[0]["learning_rate"]
    lines = (tmp_path / "trials.jsonl").read_text().splitlines()
    assert len(lines) == 1
    assert json.loads(lines[0])["trial"] == 0


def test_random_search_picks_lowest_test_mse(rng):
    X, y = _toy_data(rng, n=8)
    space = SearchSpace(n_trials=3)
    best, trials = random_search(space, X, y, X, y, seed=0, epochs=2)
    finished = [t for t in trials if not t["diverged"]]
    assert best["learning_rate"] == min(finished, key=lambda t: t["test_mse"])[
        "learning_rate"
    ]
