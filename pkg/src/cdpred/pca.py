"""Principal component analysis on standardized columns.

Fit standardizes each column (zero-STD columns fall back to a divisor of 1),
eigendecomposes the explicit covariance matrix with divisor n - 1, and orders
components by descending eigenvalue with a deterministic sign convention.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Tuple

import numpy as np

NEG_EIGENVALUE_TOL = 1e-10


@dataclass
class PcaModel:
    means: np.ndarray                     # (d,)
    stds: np.ndarray                      # (d,), zeros replaced by 1
    components: np.ndarray                # (d, d), rows are components
    eigenvalues: np.ndarray               # (d,), descending, >= 0
    explained_variance_ratio: np.ndarray  # (d,), sums to 1

    def to_json(self) -> str:
        return json.dumps({
            "means": self.means.tolist(),
            "stds": self.stds.tolist(),
            "components": self.components.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "explained_variance_ratio": self.explained_variance_ratio.tolist(),
        }, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PcaModel":
        raw = json.loads(text)
        return cls(
            means=np.asarray(raw["means"], dtype=float),
            stds=np.asarray(raw["stds"], dtype=float),
            components=np.asarray(raw["components"], dtype=float),
            eigenvalues=np.asarray(raw["eigenvalues"], dtype=float),
            explained_variance_ratio=np.asarray(
                raw["explained_variance_ratio"], dtype=float),
        )


def _standardize(model: PcaModel, X: np.ndarray) -> np.ndarray:
    return (X - model.means[None, :]) / model.stds[None, :]


def fit_pca(X: np.ndarray) -> PcaModel:
    """Fit a full-rank PCA model on the rows of ``X``.

    The sign convention makes the largest-magnitude entry of every component
    positive, so fits are deterministic. Tiny negative eigenvalues from
    floating point are clamped to zero.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be 2-D")
    n, d = X.shape
    if n < 2:
        raise ValueError("fit_pca requires at least 2 rows")
    if not np.isfinite(X).all():
        raise ValueError("fit_pca requires finite input")

    means = X.mean(axis=0)
    stds = X.std(axis=0, ddof=1)
    stds = np.where(stds == 0.0, 1.0, stds)
    Z = (X - means[None, :]) / stds[None, :]

    cov = (Z.T @ Z) / (n - 1)
    eigenvalues, eigenvectors = np.linalg.eigh(cov)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = eigenvalues[order]
    components = eigenvectors[:, order].T

    largest = eigenvalues[0] if eigenvalues.size else 0.0
    floor = -NEG_EIGENVALUE_TOL * max(largest, 1.0)
    if (eigenvalues < floor).any():
        raise ValueError("covariance eigendecomposition produced a negative eigenvalue")
    eigenvalues = np.maximum(eigenvalues, 0.0)

    for i in range(d):
        j = int(np.argmax(np.abs(components[i])))
        if components[i, j] < 0:
            components[i] = -components[i]

    total = eigenvalues.sum()
    if total <= 0.0:
        raise ValueError("input has no variance in any column")
    ratio = eigenvalues / total
    return PcaModel(means=means, stds=stds, components=components,
                    eigenvalues=eigenvalues, explained_variance_ratio=ratio)


def components_for_variance(model: PcaModel, threshold: float = 0.95) -> int:
    """Smallest k whose cumulative explained-variance ratio reaches threshold."""
    if not (0.0 < threshold <= 1.0):
        raise ValueError("threshold must be in (0, 1]")
    cumulative = np.cumsum(model.explained_variance_ratio)
    hits = np.flatnonzero(cumulative >= threshold)
    # Rounding can leave the final cumulative a hair under 1; fall back to d.
    return int(hits[0]) + 1 if hits.size else int(model.eigenvalues.shape[0])


def transform(model: PcaModel, X: np.ndarray, k: int) -> np.ndarray:
    """Project rows of ``X`` onto the first ``k`` components."""
    X = np.asarray(X, dtype=float)
    d = model.components.shape[0]
    if X.ndim != 2 or X.shape[1] != d:
        raise ValueError(f"X must have {d} columns")
    if not (1 <= k <= d):
        raise ValueError(f"k must be in [1, {d}]")
    if not np.isfinite(X).all():
        raise ValueError("transform requires finite input")
    return _standardize(model, X) @ model.components[:k].T


def inverse_transform(model: PcaModel, T: np.ndarray) -> np.ndarray:
    """Map projections back to the original column space (un-standardized)."""
    T = np.asarray(T, dtype=float)
    k = T.shape[1]
    d = model.components.shape[0]
    if not (1 <= k <= d):
        raise ValueError(f"projection width must be in [1, {d}]")
    Z = T @ model.components[:k]
    return Z * model.stds[None, :] + model.means[None, :]
