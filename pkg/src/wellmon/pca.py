"""Principal component analysis: normalize, eigendecompose, project.

The feature covariance uses the divisor 1/N on the normalized data, and the
full eigenvalue spectrum is kept so explained ratios are available for any
cut-off. Eigenvector sign is fixed so each component's largest-magnitude
coordinate is positive, which removes the sign ambiguity and makes fits
reproducible.
"""

import json
import warnings
from pathlib import Path

import numpy as np

from .base import BaseEstimator, check_is_fitted
from .linalg import eigh_descending
from .transforms import CONSTANT_COLUMN_TOL, FeatureMatrix, _matrix_values


def _fix_signs(vectors):
    flipped = vectors.copy()
    for j in range(flipped.shape[1]):
        pivot = np.argmax(np.abs(flipped[:, j]))
        if flipped[pivot, j] < 0:
            flipped[:, j] = -flipped[:, j]
    return flipped


class PCA(BaseEstimator):
    """Project features onto the top principal components.

    Parameters
    ----------
    n_components : int
        Number of components d to retain, 1 <= d <= number of input features.
    """

    def __init__(self, n_components):
        self.n_components = n_components

    def fit(self, X):
        values, names = _matrix_values(X)
        n, d_in = values.shape
        if n < 2:
            raise ValueError("PCA needs at least 2 rows")
        if not 1 <= self.n_components <= d_in:
            raise ValueError(
                f"n_components must lie in [1, {d_in}], got {self.n_components}"
            )
        self.mean_ = values.mean(axis=0)
        std = values.std(axis=0)
        constant = std <= CONSTANT_COLUMN_TOL
        if np.any(constant):
            warnings.warn("constant column(s) in PCA input: std set to 1")
            std = np.where(constant, 1.0, std)
        self.std_ = std
        normalized = (values - self.mean_) / self.std_
        sigma = normalized.T @ normalized / n
        sigma = 0.5 * (sigma + sigma.T)
        eigenvalues, vectors = eigh_descending(sigma)
        vectors = _fix_signs(vectors)
        self.eigenvalues_ = eigenvalues
        self.components_ = vectors[:, : self.n_components]
        self.n_features_in_ = d_in
        return self

    def transform(self, X):
        check_is_fitted(self, "components_")
        values, _ = _matrix_values(X)
        if values.shape[1] != self.n_features_in_:
            raise ValueError(
                f"expected {self.n_features_in_} features, got {values.shape[1]}"
            )
        projected = ((values - self.mean_) / self.std_) @ self.components_
        if isinstance(X, FeatureMatrix):
            names = tuple(f"PC{i + 1}" for i in range(self.n_components))
            return FeatureMatrix(projected, names, X.labels)
        return projected

    def fit_transform(self, X):
        return self.fit(X).transform(X)

    def explained_variance_ratio(self):
        """eigenvalues / sum(eigenvalues) over the full spectrum."""
        check_is_fitted(self, "eigenvalues_")
        total = self.eigenvalues_.sum()
        if total <= 0:
            raise ValueError("all-zero eigenvalue spectrum")
        return self.eigenvalues_ / total

    def save(self, path):
        """JSON model: mean, std, eigenvalues, components (row-major), d."""
        check_is_fitted(self, "components_")
        payload = {
            "kind": "pca",
            "mean": self.mean_.tolist(),
            "std": self.std_.tolist(),
            "eigenvalues": self.eigenvalues_.tolist(),
            "components": self.components_.tolist(),
            "d": int(self.n_components),
        }
        Path(path).write_text(json.dumps(payload, indent=2) + "\n")

    @classmethod
    def load(cls, path):
        payload = json.loads(Path(path).read_text())
        model = cls(n_components=payload["d"])
        model.mean_ = np.array(payload["mean"], dtype=np.float64)
        model.std_ = np.array(payload["std"], dtype=np.float64)
        model.eigenvalues_ = np.array(payload["eigenvalues"], dtype=np.float64)
        model.components_ = np.array(payload["components"], dtype=np.float64)
        model.n_features_in_ = model.mean_.shape[0]
        return model
