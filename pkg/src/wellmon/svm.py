"""Soft-margin SVM trained by sequential minimal optimization of the dual.

The dual quadratic program (minimize 0.5 a'Ha - a'1 subject to a'y = 0 and
0 <= a <= C) is solved by SMO with Platt's working-pair heuristics: each KKT
violator is paired with the index maximizing |E_i - E_j|, alternating full
passes with passes over the non-bound subset. The box constraint implements
l1-penalization of margin violations (hinge loss).
"""

import json
from pathlib import Path

import numpy as np

from .base import BaseEstimator, check_is_fitted
from .validation import check_X_y, require_both_classes, stratified_kfold_indices

ALPHA_SNAP = 1e-8


class ConvergenceError(RuntimeError):
    """SMO ran out of passes with KKT violations above tolerance."""


def rbf_gamma_scale(X):
    """gamma = 1 / (d * mean per-feature variance), the 'scale' convention."""
    X = np.asarray(X, dtype=np.float64)
    mean_var = float(np.mean(np.var(X, axis=0)))
    if mean_var <= 0:
        return 1.0
    return 1.0 / (X.shape[1] * mean_var)


def kernel_eval(kind, x, z, gamma=None):
    """Single kernel value: linear x'z or rbf exp(-gamma ||x - z||^2)."""
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if x.shape != z.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {z.shape}")
    if kind == "linear":
        return float(x @ z)
    if kind == "rbf":
        if gamma is None or gamma <= 0:
            raise ValueError("rbf kernel needs gamma > 0")
        diff = x - z
        return float(np.exp(-gamma * (diff @ diff)))
    raise ValueError(f"unknown kernel {kind!r}; expected 'linear' or 'rbf'")


def kernel_matrix(kind, A, B, gamma=None):
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    if kind == "linear":
        return A @ B.T
    if kind == "rbf":
        if gamma is None or gamma <= 0:
            raise ValueError("rbf kernel needs gamma > 0")
        sq = (
            np.sum(A * A, axis=1)[:, None]
            + np.sum(B * B, axis=1)[None, :]
            - 2.0 * (A @ B.T)
        )
        return np.exp(-gamma * np.maximum(sq, 0.0))
    raise ValueError(f"unknown kernel {kind!r}; expected 'linear' or 'rbf'")


def dual_objective(K, y_pm, alpha):
    """0.5 a'Ha - a'1 with H_ij = y_i y_j K_ij."""
    hy = alpha * y_pm
    return 0.5 * float(hy @ K @ hy) - float(alpha.sum())


def kkt_violations(alpha, y_pm, decision, C, snap=ALPHA_SNAP):
    """Per-point KKT violation magnitudes for a dual solution."""
    margin = y_pm * decision
    v = np.zeros_like(alpha)
    at_zero = alpha <= snap
    at_c = alpha >= C - snap
    interior = ~at_zero & ~at_c
    v[at_zero] = np.maximum(0.0, 1.0 - margin[at_zero])
    v[interior] = np.abs(margin[interior] - 1.0)
    v[at_c & ~at_zero] = np.maximum(0.0, margin[at_c & ~at_zero] - 1.0)
    return v


class SvmClassifier(BaseEstimator):
    """Binary soft-margin SVM.

    Parameters
    ----------
    kernel : str
        "linear" or "rbf".
    C : float
        Box constraint on the dual coefficients (margin-violation penalty).
    gamma : float or "scale"
        RBF width; "scale" resolves to 1/(d * mean feature variance).
    tol : float
        KKT violation tolerance for convergence.
    max_passes : int
        Pass budget for the SMO loop.
    seed : int
        Seed for the randomized fallback scans in pair selection.
    """

    def __init__(self, kernel="rbf", C=1.0, gamma="scale", tol=1e-3,
                 max_passes=5000, seed=0):
        self.kernel = kernel
        self.C = C
        self.gamma = gamma
        self.tol = tol
        self.max_passes = max_passes
        self.seed = seed

    # -- training ----------------------------------------------------------

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        require_both_classes(y)
        if self.C <= 0:
            raise ValueError("C must be positive")
        y_pm = 2.0 * y - 1.0
        gamma = self.gamma
        if self.kernel == "rbf" and gamma == "scale":
            gamma = rbf_gamma_scale(X)
        K = kernel_matrix(self.kernel, X, X, gamma)
        alpha, bias = self._smo(K, y_pm)
        alpha[alpha < ALPHA_SNAP] = 0.0
        alpha[alpha > self.C - ALPHA_SNAP] = self.C
        f = K @ (alpha * y_pm)
        bias = self._final_bias(alpha, y_pm, f, bias)
        worst = float(np.max(kkt_violations(alpha, y_pm, f + bias, self.C)))
        if worst >= self.tol:
            raise ConvergenceError(
                f"SMO stalled; largest KKT violation {worst:.3e} >= tol {self.tol}"
            )
        sv = np.flatnonzero(alpha > 0.0)
        self.support_idx_ = sv
        self.alphas_ = alpha[sv]
        self.support_vectors_ = X[sv]
        self.support_labels_ = y_pm[sv]
        self.bias_ = bias
        self.n_support_ = len(sv)
        self.gamma_ = gamma
        self.n_samples_ = len(y)
        if self.kernel == "linear":
            self.w_ = (self.alphas_ * self.support_labels_) @ self.support_vectors_
        return self

    def _smo(self, K, y_pm):
        n = len(y_pm)
        C = self.C
        # the final bias is re-averaged over margin SVs, which can shift the
        # margins by up to the working tolerance; solving to 0.4 * tol keeps
        # the stored model inside the advertised KKT tolerance
        tol = 0.4 * self.tol
        rng = np.random.default_rng(self.seed)
        alpha = np.zeros(n)
        bias = 0.0
        f = np.zeros(n)  # f_i = sum_j alpha_j y_j K_ij, bias excluded

        def take_step(i1, i2):
            nonlocal bias, f
            if i1 == i2:
                return False
            a1o, a2o = alpha[i1], alpha[i2]
            y1, y2 = y_pm[i1], y_pm[i2]
            e1 = f[i1] + bias - y1
            e2 = f[i2] + bias - y2
            s = y1 * y2
            if y1 != y2:
                low, high = max(0.0, a2o - a1o), min(C, C + a2o - a1o)
            else:
                low, high = max(0.0, a1o + a2o - C), min(C, a1o + a2o)
            if high - low < 1e-12:
                return False
            k11, k12, k22 = K[i1, i1], K[i1, i2], K[i2, i2]
            eta = k11 + k22 - 2.0 * k12
            if eta > 1e-12:
                a2 = a2o + y2 * (e1 - e2) / eta
                a2 = min(max(a2, low), high)
            else:
                # flat direction: evaluate the dual at both box ends
                v1 = f[i1] - a1o * y1 * k11 - a2o * y2 * k12
                v2 = f[i2] - a1o * y1 * k12 - a2o * y2 * k22
                gamma_sum = a1o + s * a2o

                def objective(a2c):
                    a1c = gamma_sum - s * a2c
                    return (
                        0.5 * k11 * a1c * a1c
                        + 0.5 * k22 * a2c * a2c
                        + s * k12 * a1c * a2c
                        + y1 * a1c * v1
                        + y2 * a2c * v2
                        - a1c
                        - a2c
                    )

                lo_obj, hi_obj = objective(low), objective(high)
                if lo_obj < hi_obj - 1e-12:
                    a2 = low
                elif hi_obj < lo_obj - 1e-12:
                    a2 = high
                else:
                    return False
            if abs(a2 - a2o) < 1e-12 * (a2 + a2o + 1e-12):
                return False
            a1 = a1o + s * (a2o - a2)
            d1, d2 = a1 - a1o, a2 - a2o
            b1 = bias - e1 - y1 * d1 * k11 - y2 * d2 * k12
            b2 = bias - e2 - y1 * d1 * k12 - y2 * d2 * k22
            if ALPHA_SNAP < a1 < C - ALPHA_SNAP:
                bias = b1
            elif ALPHA_SNAP < a2 < C - ALPHA_SNAP:
                bias = b2
            else:
                bias = 0.5 * (b1 + b2)
            f += d1 * y1 * K[:, i1] + d2 * y2 * K[:, i2]
            alpha[i1], alpha[i2] = a1, a2
            return True

        def examine(i2):
            e2 = f[i2] + bias - y_pm[i2]
            r2 = e2 * y_pm[i2]
            if not ((r2 < -tol and alpha[i2] < C) or (r2 > tol and alpha[i2] > 0)):
                return 0
            non_bound = np.flatnonzero((alpha > 0) & (alpha < C))
            if len(non_bound) > 1:
                errors = f[non_bound] + bias - y_pm[non_bound]
                i1 = int(non_bound[np.argmax(np.abs(errors - e2))])
                if take_step(i1, i2):
                    return 1
            start = rng.integers(n)
            for i1 in np.roll(non_bound, -int(start % max(len(non_bound), 1))):
                if take_step(int(i1), i2):
                    return 1
            start = rng.integers(n)
            for i1 in np.roll(np.arange(n), -int(start)):
                if take_step(int(i1), i2):
                    return 1
            return 0

        examine_all = True
        num_changed = 0
        passes = 0
        while num_changed > 0 or examine_all:
            passes += 1
            if passes > self.max_passes:
                d = f + bias
                worst = float(np.max(kkt_violations(alpha, y_pm, d, C)))
                raise ConvergenceError(
                    f"no convergence in {self.max_passes} passes; "
                    f"largest KKT violation {worst:.3e}"
                )
            if examine_all:
                targets = range(n)
            else:
                targets = np.flatnonzero((alpha > 0) & (alpha < C))
            num_changed = sum(examine(int(i2)) for i2 in targets)
            if examine_all:
                examine_all = False
            elif num_changed == 0:
                examine_all = True
        return alpha, bias

    def _final_bias(self, alpha, y_pm, f, fallback):
        """Average y - f over margin SVs; otherwise the KKT-interval midpoint."""
        margin = (alpha > 0.0) & (alpha < self.C)
        if np.any(margin):
            return float(np.mean(y_pm[margin] - f[margin]))
        lo, hi = [], []
        at_zero = alpha == 0.0
        at_c = alpha == self.C
        lo.extend(1.0 - f[at_zero & (y_pm > 0)])
        lo.extend(-1.0 - f[at_c & (y_pm < 0)])
        hi.extend(-1.0 - f[at_zero & (y_pm < 0)])
        hi.extend(1.0 - f[at_c & (y_pm > 0)])
        if lo and hi:
            return 0.5 * (max(lo) + min(hi))
        return float(fallback)

    # -- inference ---------------------------------------------------------

    def decision_function(self, X):
        """D(x) = sum_j y_j alpha_j K(x_j, x) + b."""
        check_is_fitted(self, "bias_")
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.support_vectors_.shape[1]:
            raise ValueError(
                f"expected {self.support_vectors_.shape[1]} features, "
                f"got {X.shape[1]}"
            )
        K = kernel_matrix(self.kernel, X, self.support_vectors_, self.gamma_)
        d = K @ (self.alphas_ * self.support_labels_) + self.bias_
        return float(d[0]) if single else d

    def predict(self, X):
        """Label 1 iff D(x) >= 0 (ties to broken)."""
        d = self.decision_function(X)
        if np.isscalar(d):
            return int(d >= 0.0)
        return (d >= 0.0).astype(np.int64)

    def training_kkt_violations(self, X, y):
        """KKT violation per training point; X, y must be the fit data."""
        check_is_fitted(self, "bias_")
        X, y = check_X_y(X, y)
        if len(y) != self.n_samples_:
            raise ValueError("pass the training set used in fit")
        alpha = np.zeros(len(y))
        alpha[self.support_idx_] = self.alphas_
        d = self.decision_function(X)
        return kkt_violations(alpha, 2.0 * y - 1.0, d, self.C)

    # -- persistence -------------------------------------------------------

    def save(self, path):
        check_is_fitted(self, "bias_")
        payload = {
            "kind": "svm",
            "kernel": self.kernel,
            "C": self.C,
            "gamma": self.gamma_ if self.kernel == "rbf" else None,
            "bias": self.bias_,
            "alphas": self.alphas_.tolist(),
            "support_vectors": self.support_vectors_.tolist(),
            "support_labels": self.support_labels_.tolist(),
        }
        if self.kernel == "linear":
            payload["w"] = self.w_.tolist()
        Path(path).write_text(json.dumps(payload, indent=2) + "\n")

    @classmethod
    def load(cls, path):
        payload = json.loads(Path(path).read_text())
        model = cls(kernel=payload["kernel"], C=payload["C"])
        model.gamma_ = payload["gamma"]
        model.bias_ = float(payload["bias"])
        model.alphas_ = np.array(payload["alphas"], dtype=np.float64)
        model.support_vectors_ = np.array(
            payload["support_vectors"], dtype=np.float64
        )
        model.support_labels_ = np.array(
            payload["support_labels"], dtype=np.float64
        )
        model.support_idx_ = np.arange(len(model.alphas_))
        model.n_support_ = len(model.alphas_)
        model.n_samples_ = len(model.alphas_)
        if "w" in payload:
            model.w_ = np.array(payload["w"], dtype=np.float64)
        return model


def tune_C(X, y, kernel, c_grid, k_folds, gamma="scale", tol=1e-3, seed=0):
    """Grid search over C by stratified k-fold CV accuracy.

    Ties go to the smallest C. Returns (best_C, best_cv_accuracy).
    """
    X, y = check_X_y(X, y)
    c_grid = sorted(c_grid)
    if not c_grid:
        raise ValueError("c_grid is empty")
    folds = stratified_kfold_indices(y, k_folds, seed)
    best = None
    for C in c_grid:
        scores = []
        for train_idx, test_idx in folds:
            model = SvmClassifier(
                kernel=kernel, C=C, gamma=gamma, tol=tol, seed=seed
            )
            model.fit(X[train_idx], y[train_idx])
            pred = model.predict(X[test_idx])
            scores.append(float(np.mean(pred == y[test_idx])))
        score = float(np.mean(scores))
        if best is None or score > best[1]:
            best = (C, score)
    return best
