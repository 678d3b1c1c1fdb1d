"""Minimal 1-D convolutional classifier with manual backpropagation.

Architecture (for C x L input, canonical 6 x 300): conv(12, k=30) -> act ->
avgpool(15, stride 5) -> conv(24, k=30) -> act -> avgpool -> flatten(48) ->
fc(48, 2) -> act -> fc(2, 1) -> sigmoid. The 2-unit activation before the
output layer is exposed as the embedding. Convolutions are valid, stride 1,
implemented as cross-correlation. Everything runs in double precision so
the finite-difference gradient check is meaningful.

Training is mini-batch Adam on the MSE between predicted probability and
the 0/1 label, with weight decay added to the gradient as lambda * theta
before the moment updates (the coupled convention).
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .base import BaseEstimator, check_is_fitted
from .validation import as_label_vector


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss becomes non-finite."""


# ---------------------------------------------------------------------------
# activations: (value, derivative) evaluated at the pre-activation
# ---------------------------------------------------------------------------

def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    expz = np.exp(z[~pos])
    out[~pos] = expz / (1.0 + expz)
    return out


ACTIVATIONS = {
    "tanh": (np.tanh, lambda z: 1.0 - np.tanh(z) ** 2),
    "sigmoid": (_sigmoid, lambda z: _sigmoid(z) * (1.0 - _sigmoid(z))),
    "swish": (
        lambda z: z * _sigmoid(z),
        lambda z: _sigmoid(z) * (1.0 + z * (1.0 - _sigmoid(z))),
    ),
    "relu": (
        lambda z: np.maximum(z, 0.0),
        lambda z: (z > 0).astype(np.float64),
    ),
    "leaky_relu": (
        lambda z: np.where(z > 0, z, 0.01 * z),
        lambda z: np.where(z > 0, 1.0, 0.01),
    ),
}

# activations with a non-differentiable point at zero
KINKED = ("relu", "leaky_relu")


# ---------------------------------------------------------------------------
# layer primitives (batched internally, single-sample public wrappers)
# ---------------------------------------------------------------------------

def _unfold(x, k):
    """(B, C, L) -> (B, L-k+1, C*k) sliding windows."""
    b, c, length = x.shape
    lo = length - k + 1
    s = x.strides
    windows = np.lib.stride_tricks.as_strided(
        x, shape=(b, c, lo, k), strides=(s[0], s[1], s[2], s[2])
    )
    return np.ascontiguousarray(windows.transpose(0, 2, 1, 3)).reshape(b, lo, c * k)


def _conv_batch(x, filters, bias, unfolded=None):
    b, c_in, length = x.shape
    c_out, c_in_f, k = filters.shape
    if c_in != c_in_f:
        raise ValueError(f"input has {c_in} channels, filters expect {c_in_f}")
    if length < k:
        raise ValueError(f"input length {length} < kernel size {k}")
    if unfolded is None:
        unfolded = _unfold(x, k)
    out = unfolded @ filters.reshape(c_out, -1).T + bias
    return out.transpose(0, 2, 1)


def _conv_batch_backward(unfolded, filters, grad_out, need_input_grad=True):
    """Gradients of a valid stride-1 cross-correlation, reusing the
    forward pass's unfolded input."""
    c_out, c_in, k = filters.shape
    grad_bias = grad_out.sum(axis=(0, 2))
    grad_flat = np.tensordot(grad_out, unfolded, axes=([0, 2], [0, 1]))
    grad_filters = grad_flat.reshape(c_out, c_in, k)
    if not need_input_grad:
        return None, grad_filters, grad_bias
    # grad wrt input = full correlation with channel-transposed flipped filters
    padded = np.pad(grad_out, ((0, 0), (0, 0), (k - 1, k - 1)))
    flipped = filters[:, :, ::-1].transpose(1, 0, 2)
    grad_x = _conv_batch(padded, np.ascontiguousarray(flipped), np.zeros(c_in))
    return grad_x, grad_filters, grad_bias


_POOL_CACHE = {}


def _cached_pool_matrix(length, kernel, stride):
    key = (length, kernel, stride)
    if key not in _POOL_CACHE:
        _POOL_CACHE[key] = _pool_matrix(length, kernel, stride)
    return _POOL_CACHE[key]


def _pool_matrix(length, kernel, stride):
    if length < kernel:
        raise ValueError(f"input length {length} < pooling kernel {kernel}")
    lo = (length - kernel) // stride + 1
    mat = np.zeros((lo, length))
    for o in range(lo):
        mat[o, o * stride : o * stride + kernel] = 1.0 / kernel
    return mat


def conv1d_forward(x, filters, bias):
    """Valid stride-1 convolution of one (C_in, L) sample -> (C_out, L-k+1)."""
    x = np.asarray(x, dtype=np.float64)
    return _conv_batch(x[None], np.asarray(filters, dtype=np.float64),
                       np.asarray(bias, dtype=np.float64))[0]


def avgpool_forward(x, kernel=15, stride=5):
    """Window means of one (C, L) sample, no padding."""
    x = np.asarray(x, dtype=np.float64)
    return x @ _pool_matrix(x.shape[1], kernel, stride).T


# ---------------------------------------------------------------------------
# the classifier
# ---------------------------------------------------------------------------

class CnnClassifier(BaseEstimator):
    """1-D CNN binary classifier trained with Adam on MSE loss.

    Parameters
    ----------
    activation : str
        One of tanh, sigmoid, swish, relu, leaky_relu.
    learning_rate, weight_decay, batch_size, epochs : training knobs.
    adam_betas, adam_eps : Adam moment parameters.
    conv_layers : tuple of (out_channels, kernel_size)
        Convolution stack; each layer is followed by the average pool.
    embedding_dim : int
        Width of the hidden fully connected layer (the plotted embedding).
    seed : int
        Drives parameter init and epoch shuffling; same seed, same model.
    """

    def __init__(self, activation="leaky_relu", learning_rate=1e-2,
                 weight_decay=0.0, batch_size=30, epochs=100,
                 adam_betas=(0.9, 0.999), adam_eps=1e-8,
                 conv_layers=((12, 30), (24, 30)), pool_kernel=15,
                 pool_stride=5, embedding_dim=2, in_channels=6, seed=0):
        self.activation = activation
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.epochs = epochs
        self.adam_betas = adam_betas
        self.adam_eps = adam_eps
        self.conv_layers = conv_layers
        self.pool_kernel = pool_kernel
        self.pool_stride = pool_stride
        self.embedding_dim = embedding_dim
        self.in_channels = in_channels
        self.seed = seed

    # -- construction ------------------------------------------------------

    def flatten_size(self, input_len):
        """Feature count after the conv/pool stack for a given input length."""
        length = input_len
        channels = self.in_channels
        for i, (c_out, k) in enumerate(self.conv_layers, start=1):
            if length < k:
                raise ValueError(f"conv{i}: input length {length} < kernel {k}")
            length = length - k + 1
            if length < self.pool_kernel:
                raise ValueError(
                    f"pool{i}: input length {length} < kernel {self.pool_kernel}"
                )
            length = (length - self.pool_kernel) // self.pool_stride + 1
            channels = c_out
        return channels * length

    def init_params(self, input_len=300):
        """Seeded uniform +/- 1/sqrt(fan_in) init, one draw order per tensor:
        conv weights then bias per layer, then fc1, then fc2."""
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        rng = np.random.default_rng((self.seed, 0))
        params = {}
        c_in = self.in_channels
        for i, (c_out, k) in enumerate(self.conv_layers, start=1):
            bound = 1.0 / np.sqrt(c_in * k)
            params[f"conv{i}.W"] = rng.uniform(-bound, bound, (c_out, c_in, k))
            params[f"conv{i}.b"] = rng.uniform(-bound, bound, c_out)
            c_in = c_out
        flat = self.flatten_size(input_len)
        bound = 1.0 / np.sqrt(flat)
        params["fc1.W"] = rng.uniform(-bound, bound, (self.embedding_dim, flat))
        params["fc1.b"] = rng.uniform(-bound, bound, self.embedding_dim)
        bound = 1.0 / np.sqrt(self.embedding_dim)
        params["fc2.W"] = rng.uniform(-bound, bound, (1, self.embedding_dim))
        params["fc2.b"] = rng.uniform(-bound, bound, 1)
        self.params_ = params
        self.flatten_size_ = flat
        self.input_len_ = input_len
        return self

    # -- forward / backward --------------------------------------------------

    def _prepare_batch(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 2:
            X = X[None]
        if X.ndim != 3:
            raise ValueError(f"expected (B, C, L) input, got shape {X.shape}")
        if X.shape[1] != self.in_channels:
            raise ValueError(
                f"conv1: expected {self.in_channels} channels, got {X.shape[1]}"
            )
        return X

    def _forward(self, X):
        check_is_fitted(self, "params_")
        act, dact = ACTIVATIONS[self.activation]
        cache = {"unfolded": [], "preacts": []}
        out = X
        for i in range(1, len(self.conv_layers) + 1):
            k = self.params_[f"conv{i}.W"].shape[2]
            if out.shape[2] < k:
                raise ValueError(f"conv{i}: input length {out.shape[2]} < kernel {k}")
            unfolded = _unfold(out, k)
            cache["unfolded"].append(unfolded)
            z = _conv_batch(
                out, self.params_[f"conv{i}.W"], self.params_[f"conv{i}.b"],
                unfolded=unfolded,
            )
            cache["preacts"].append(z)
            a = act(z)
            if a.shape[2] < self.pool_kernel:
                raise ValueError(
                    f"pool{i}: input length {a.shape[2]} < kernel {self.pool_kernel}"
                )
            pool = _cached_pool_matrix(a.shape[2], self.pool_kernel, self.pool_stride)
            cache[f"pool{i}"] = pool
            out = a @ pool.T
        flat = out.reshape(out.shape[0], -1)
        if flat.shape[1] != self.flatten_size_:
            raise ValueError(
                f"fc1: expected {self.flatten_size_} flattened features, got "
                f"{flat.shape[1]} (unsupported input length)"
            )
        cache["conv_out_shape"] = out.shape
        cache["flat"] = flat
        z3 = flat @ self.params_["fc1.W"].T + self.params_["fc1.b"]
        cache["z3"] = z3
        embedding = act(z3)
        cache["embedding"] = embedding
        z4 = embedding @ self.params_["fc2.W"].T + self.params_["fc2.b"]
        cache["z4"] = z4
        cache["probs"] = _sigmoid(z4)[:, 0]
        return cache

    def forward(self, X):
        """Probabilities in (0, 1) and the 2-D embedding after fc1."""
        X = self._prepare_batch(X)
        cache = self._forward(X)
        return cache["probs"], cache["embedding"]

    def _loss_and_grads(self, X, y):
        act, dact = ACTIVATIONS[self.activation]
        cache = self._forward(X)
        probs = cache["probs"]
        batch = X.shape[0]
        loss = float(np.mean((probs - y) ** 2))
        grads = {}
        dprob = 2.0 * (probs - y) / batch
        dz4 = (dprob * probs * (1.0 - probs))[:, None]
        grads["fc2.W"] = dz4.T @ cache["embedding"]
        grads["fc2.b"] = dz4.sum(axis=0)
        demb = dz4 @ self.params_["fc2.W"]
        dz3 = demb * dact(cache["z3"])
        grads["fc1.W"] = dz3.T @ cache["flat"]
        grads["fc1.b"] = dz3.sum(axis=0)
        dflat = dz3 @ self.params_["fc1.W"]
        dout = dflat.reshape(cache["conv_out_shape"])
        for i in range(len(self.conv_layers), 0, -1):
            da = dout @ cache[f"pool{i}"]
            dz = da * dact(cache["preacts"][i - 1])
            dout, grads[f"conv{i}.W"], grads[f"conv{i}.b"] = _conv_batch_backward(
                cache["unfolded"][i - 1], self.params_[f"conv{i}.W"], dz,
                need_input_grad=(i > 1),
            )
        return loss, grads, cache

    # -- training ------------------------------------------------------------

    def fit(self, X, y, eval_set=None):
        """Mini-batch Adam training; records per-epoch train/test MSE.

        eval_set is an optional (X_test, y_test) pair for the test curve.
        """
        X = self._prepare_batch(X)
        y = as_label_vector(y).astype(np.float64)
        if X.shape[0] != y.shape[0]:
            raise ValueError("X and y disagree on the number of samples")
        if self.learning_rate < 0 or self.weight_decay < 0 or self.epochs < 0:
            raise ValueError("learning_rate, weight_decay, epochs must be >= 0")
        self.init_params(X.shape[2])
        beta1, beta2 = self.adam_betas
        m = {k: np.zeros_like(v) for k, v in self.params_.items()}
        v = {k: np.zeros_like(val) for k, val in self.params_.items()}
        t = 0
        rng = np.random.default_rng((self.seed, 1))
        history = {"train_mse": [], "test_mse": []}
        n = X.shape[0]
        batch_size = min(self.batch_size, n)
        for epoch in range(self.epochs):
            perm = rng.permutation(n)
            epoch_loss = 0.0
            for start in range(0, n, batch_size):
                idx = perm[start : start + batch_size]
                loss, grads, _ = self._loss_and_grads(X[idx], y[idx])
                if not np.isfinite(loss):
                    raise TrainingDivergedError(
                        f"non-finite loss at epoch {epoch}, batch {start // batch_size}"
                    )
                epoch_loss += loss * len(idx)
                t += 1
                for name, param in self.params_.items():
                    g = grads[name] + self.weight_decay * param
                    m[name] = beta1 * m[name] + (1.0 - beta1) * g
                    v[name] = beta2 * v[name] + (1.0 - beta2) * g * g
                    mhat = m[name] / (1.0 - beta1**t)
                    vhat = v[name] / (1.0 - beta2**t)
                    param -= self.learning_rate * mhat / (np.sqrt(vhat) + self.adam_eps)
            # epoch training curve = sample-weighted mean of the batch losses
            history["train_mse"].append(epoch_loss / n)
            if eval_set is not None:
                history["test_mse"].append(self.mse(eval_set[0], eval_set[1]))
        self.history_ = history
        return self

    def mse(self, X, y):
        probs, _ = self.forward(X)
        y = np.asarray(y, dtype=np.float64)
        return float(np.mean((probs - y) ** 2))

    def predict_proba(self, X):
        probs, _ = self.forward(X)
        return probs

    def predict(self, X):
        """Label 1 iff probability >= 0.5."""
        return (self.predict_proba(X) >= 0.5).astype(np.int64)

    def embed(self, X):
        _, embedding = self.forward(X)
        return embedding

    # -- verification ----------------------------------------------------------

    def _loss_and_kink_signs(self, X, y):
        cache = self._forward(X)
        loss = float(np.mean((cache["probs"] - y) ** 2))
        if self.activation in KINKED:
            signs = np.concatenate(
                [np.sign(z).ravel() for z in cache["preacts"]]
                + [np.sign(cache["z3"]).ravel()]
            )
        else:
            signs = None
        return loss, signs

    def grad_check(self, X, y, eps=1e-5, fraction=0.01, seed=0):
        """Max relative error between analytic and central-difference grads.

        A random fraction of each tensor is probed. Two probe classes are
        excluded: for kinked activations, probes whose +/- eps evaluations
        flip any pre-activation sign (non-differentiable point policy), and
        probes whose loss difference sits below double-precision round-off
        (the central difference then carries no gradient information).
        """
        X = self._prepare_batch(X)
        y = np.asarray(y, dtype=np.float64)
        _, grads, _ = self._loss_and_grads(X, y)
        rng = np.random.default_rng(seed)
        worst = 0.0
        for name, param in self.params_.items():
            n_pick = max(1, int(round(fraction * param.size)))
            picks = rng.choice(param.size, size=min(n_pick, param.size), replace=False)
            for flat_idx in picks:
                original = param.flat[flat_idx]
                param.flat[flat_idx] = original + eps
                loss_plus, signs_plus = self._loss_and_kink_signs(X, y)
                param.flat[flat_idx] = original - eps
                loss_minus, signs_minus = self._loss_and_kink_signs(X, y)
                param.flat[flat_idx] = original
                if signs_plus is not None and np.any(signs_plus != signs_minus):
                    continue
                if abs(loss_plus - loss_minus) < 1e-12 * max(
                    1.0, abs(loss_plus) + abs(loss_minus)
                ):
                    continue
                numeric = (loss_plus - loss_minus) / (2.0 * eps)
                analytic = grads[name].flat[flat_idx]
                rel = abs(analytic - numeric) / max(abs(analytic) + abs(numeric), 1e-8)
                worst = max(worst, rel)
        return worst

    # -- persistence -------------------------------------------------------------

    def save(self, stem):
        """Flat float64 binary of named tensors plus a JSON manifest."""
        check_is_fitted(self, "params_")
        stem = Path(stem)
        tensors = []
        offset = 0
        chunks = []
        for name, param in self.params_.items():
            tensors.append({"name": name, "shape": list(param.shape), "offset": offset})
            offset += param.size
            chunks.append(param.ravel())
        np.concatenate(chunks).astype(np.float64).tofile(stem.with_suffix(".bin"))
        config = self.get_params()
        config["adam_betas"] = list(config["adam_betas"])
        config["conv_layers"] = [list(layer) for layer in config["conv_layers"]]
        manifest = {
            "kind": "cnn",
            "dtype": "float64",
            "input_len": self.input_len_,
            "config": config,
            "tensors": tensors,
        }
        stem.with_suffix(".json").write_text(json.dumps(manifest, indent=2) + "\n")

    @classmethod
    def load(cls, stem):
        stem = Path(stem)
        manifest = json.loads(stem.with_suffix(".json").read_text())
        config = manifest["config"]
        config["adam_betas"] = tuple(config["adam_betas"])
        config["conv_layers"] = tuple(tuple(layer) for layer in config["conv_layers"])
        model = cls(**config)
        flat = np.fromfile(stem.with_suffix(".bin"), dtype=np.float64)
        model.params_ = {}
        for spec_entry in manifest["tensors"]:
            shape = tuple(spec_entry["shape"])
            size = int(np.prod(shape))
            start = spec_entry["offset"]
            model.params_[spec_entry["name"]] = flat[start : start + size].reshape(shape)
        model.input_len_ = manifest["input_len"]
        model.flatten_size_ = model.flatten_size(model.input_len_)
        return model


# ---------------------------------------------------------------------------
# random hyperparameter search
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SearchSpace:
    """Sampling distributions for the training hyperparameters."""

    activations: tuple = ("tanh", "sigmoid", "swish", "relu", "leaky_relu")
    learning_rate_range: tuple = (1e-4, 1e-1)
    weight_decay_range: tuple = (1e-7, 5e-4)
    batch_sizes: tuple = (10, 30, 50, 100)
    n_trials: int = 100


def sample_trial(space, rng):
    """One hyperparameter draw: discrete uniform for activation and batch
    size, log-uniform for learning rate and weight decay."""
    lr_lo, lr_hi = space.learning_rate_range
    wd_lo, wd_hi = space.weight_decay_range
    return {
        "activation": str(rng.choice(space.activations)),
        "learning_rate": float(np.exp(rng.uniform(np.log(lr_lo), np.log(lr_hi)))),
        "weight_decay": float(np.exp(rng.uniform(np.log(wd_lo), np.log(wd_hi)))),
        "batch_size": int(rng.choice(space.batch_sizes)),
    }


def random_search(space, X_train, y_train, X_test, y_test, seed=0,
                  epochs=100, log_path=None, **fixed):
    """Seeded independent trials; best = lowest test MSE.

    Returns (best_params, trials) where trials is the full log. Each trial
    trains with an independently derived seed, so trials could run in
    parallel without changing results.
    """
    if space.n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    rng = np.random.default_rng(seed)
    trials = []
    for trial in range(space.n_trials):
        params = sample_trial(space, rng)
        trial_seed = int(np.random.SeedSequence([seed, trial]).generate_state(1)[0])
        model = CnnClassifier(
            epochs=epochs, seed=trial_seed, **params, **fixed
        )
        record = {"trial": trial, "seed": trial_seed, **params}
        try:
            model.fit(X_train, y_train)
            record["train_mse"] = model.history_["train_mse"][-1]
            record["test_mse"] = model.mse(X_test, y_test)
            record["diverged"] = False
        except TrainingDivergedError as exc:
            record["diverged"] = True
            record["error"] = str(exc)
        trials.append(record)
    if log_path is not None:
        with open(log_path, "w") as fh:
            for record in trials:
                fh.write(json.dumps(record) + "\n")
    finished = [r for r in trials if not r["diverged"]]
    if not finished:
        raise RuntimeError(f"all {space.n_trials} trials diverged: {trials}")
    best = min(finished, key=lambda r: r["test_mse"])
    best_params = {
        k: best[k] for k in ("activation", "learning_rate", "weight_decay",
                             "batch_size", "seed")
    }
    best_params["epochs"] = epochs
    return best_params, trials
