"""PCA projection with leading-component removal, and cosine scoring."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted


class ZeroVectorError(ValueError):
    """Cosine similarity is undefined for a zero vector."""


class RankError(ValueError):
    pass


def _fix_signs(vectors):
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def pca_basis(X, rank_tol=1e-10):
    """Principal axes of the rows of ``X``, eigenvalue-descending.

    Uses the covariance matrix when there are more rows than columns and the
    Gram matrix otherwise. Directions with eigenvalue below
    ``rank_tol * largest`` are dropped.
    """
    n, d = X.shape
    mean = X.mean(axis=0)
    Xc = X - mean
    if n > d:
        evals, evecs = np.linalg.eigh(Xc.T @ Xc / n)
        evals, evecs = evals[::-1], evecs[:, ::-1]
    else:
        gvals, gvecs = np.linalg.eigh(Xc @ Xc.T / n)
        gvals, gvecs = gvals[::-1], gvecs[:, ::-1]
        keep = gvals > rank_tol * max(gvals[0], 0.0)
        gvals, gvecs = gvals[keep], gvecs[:, keep]
        evecs = Xc.T @ gvecs / np.sqrt(n * gvals)
        # re-orthonormalize to wash out round-off from the dual route
        evecs, _ = np.linalg.qr(evecs)
        evals = gvals
    top = max(evals[0], 0.0) if evals.size else 0.0
    keep = evals > rank_tol * top if top > 0 else np.zeros(evals.size, dtype=bool)
    return mean, _fix_signs(evecs[:, keep]), evals[keep]


class ProjectionHead(TransformerMixin, BaseEstimator):
    """PCA that discards the ``removed_k`` leading components.

    The leading components of cross-modal training data concentrate the
    difference between modalities, so dropping them leaves a space where
    both modalities can be compared directly.

    Parameters
    ----------
    removed_k : int
        Number of leading principal components to discard.
    energy_cutoff : float or None
        If set, keep only the leading components that explain this fraction of
        variance (counted before removal).
    """

    def __init__(self, removed_k=11, energy_cutoff=None):
        self.removed_k = removed_k
        self.energy_cutoff = energy_cutoff

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64, ensure_min_samples=2)
        mean, basis, evals = pca_basis(X)
        r = basis.shape[1]
        if self.energy_cutoff is not None:
            frac = np.cumsum(evals) / evals.sum()
            r = min(r, int(np.searchsorted(frac, self.energy_cutoff) + 1))
        if self.removed_k < 0 or self.removed_k >= r:
            raise RankError(f"cannot remove {self.removed_k} components from rank-{r} data")
        self.mean_ = mean
        self.components_ = basis[:, :r]
        self.explained_variance_ = evals[:r]
        self.n_features_in_ = X.shape[1]
        return self

    @property
    def kept_basis(self):
        check_is_fitted(self, "components_")
        return self.components_[:, self.removed_k:]

    @property
    def removed_basis(self):
        check_is_fitted(self, "components_")
        return self.components_[:, :self.removed_k]

    def transform(self, X):
        check_is_fitted(self, "components_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.mean_.size:
            raise ValueError(f"expected dimension {self.mean_.size}, got {X.shape[1]}")
        return (X - self.mean_) @ self.kept_basis

    def inverse_transform(self, Z):
        Z = check_array(Z, dtype=np.float64)
        return Z @ self.kept_basis.T + self.mean_

    @classmethod
    def from_arrays(cls, mean, components, removed_k, explained_variance=None):
        head = cls(removed_k=int(removed_k))
        head.mean_ = np.asarray(mean, dtype=np.float64)
        head.components_ = np.asarray(components, dtype=np.float64)
        if explained_variance is None:
            explained_variance = np.zeros(head.components_.shape[1])
        head.explained_variance_ = np.asarray(explained_variance, dtype=np.float64)
        head.n_features_in_ = head.mean_.size
        return head


def fit_head(train_vectors, removed_k, energy_cutoff=None) -> ProjectionHead:
    return ProjectionHead(removed_k, energy_cutoff).fit(train_vectors)


def project(head: ProjectionHead, vector):
    vector = np.asarray(vector, dtype=np.float64)
    out = head.transform(np.atleast_2d(vector))
    return out[0] if vector.ndim == 1 else out


def cosine(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0 or ny == 0:
        raise ZeroVectorError("cosine of a zero vector")
    return float(np.clip(x @ y / (nx * ny), -1.0, 1.0))


def cosine_matrix(probes, gallery) -> np.ndarray:
    """Cosine similarity of every probe row against every gallery row."""
    probes = np.atleast_2d(np.asarray(probes, dtype=np.float64))
    gallery = np.atleast_2d(np.asarray(gallery, dtype=np.float64))
    np_ = np.linalg.norm(probes, axis=1)
    ng = np.linalg.norm(gallery, axis=1)
    if np.any(np_ == 0) or np.any(ng == 0):
        raise ZeroVectorError("cosine of a zero vector")
    return np.clip((probes / np_[:, None]) @ (gallery / ng[:, None]).T, -1.0, 1.0)


@dataclass(frozen=True)
class MatchScore:
    value: float


def fuse_halves(left, right):
    """Sum-rule fusion of the two half-face similarities."""
    left = left.value if isinstance(left, MatchScore) else left
    right = right.value if isinstance(right, MatchScore) else right
    return left + right


def zscore_normalize(scores):
    """Standardize each probe row against its gallery (population std)."""
    scores = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    if scores.shape[1] < 2:
        raise ValueError("z-score normalization needs at least 2 gallery entries")
    std = scores.std(axis=1)
    if np.any(std == 0):
        raise ValueError("score row with zero standard deviation")
    return (scores - scores.mean(axis=1, keepdims=True)) / std[:, None]
