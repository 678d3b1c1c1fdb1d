"""Input validation helpers used across the toolkit."""

import numpy as np


def as_float_matrix(X, name="X"):
    """Coerce to a finite 2-D float64 array."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite entries")
    return X


def as_float_vector(x, name="x"):
    """Coerce to a finite 1-D float64 array."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite entries")
    return x


def as_label_vector(y, name="y"):
    """Coerce labels to a 1-D int array of 0/1."""
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {y.shape}")
    y = y.astype(np.int64)
    bad = set(np.unique(y)) - {0, 1}
    if bad:
        raise ValueError(f"{name} must be binary 0/1, found values {sorted(bad)}")
    return y


def check_X_y(X, y):
    """Validate a feature matrix with matching binary labels."""
    X = as_float_matrix(X)
    y = as_label_vector(y)
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]} labels")
    return X, y


def require_both_classes(y, name="y"):
    if len(np.unique(y)) < 2:
        raise ValueError(f"{name} must contain both classes")


def check_symmetric(A, tol, name="matrix"):
    A = as_float_matrix(A, name)
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"{name} must be square, got shape {A.shape}")
    if np.max(np.abs(A - A.T)) > tol:
        raise ValueError(f"{name} is not symmetric within {tol}")
    return A


def stratified_kfold_indices(y, k, seed=0):
    """Deterministic stratified k-fold split: list of (train_idx, test_idx).

    Every fold must contain both classes; raises otherwise.
    """
    y = as_label_vector(y)
    if k < 2:
        raise ValueError("k must be >= 2")
    rng = np.random.default_rng(seed)
    folds = [[] for _ in range(k)]
    for cls in (0, 1):
        idx = np.flatnonzero(y == cls)
        if len(idx) < k:
            raise ValueError(
                f"class {cls} has {len(idx)} samples, fewer than k={k} folds"
            )
        idx = idx[rng.permutation(len(idx))]
        for pos, i in enumerate(idx):
            folds[pos % k].append(i)
    splits = []
    for f in range(k):
        test_idx = np.sort(np.array(folds[f], dtype=np.int64))
        train_idx = np.sort(
            np.concatenate([folds[g] for g in range(k) if g != f]).astype(np.int64)
        )
        splits.append((train_idx, test_idx))
    return splits
