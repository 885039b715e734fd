"""Whitening transforms that put Gaussian-RBM inputs at unit variance."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

ZCA = "zca"
WPCA = "wpca"


class GaussianNormalizer(TransformerMixin, BaseEstimator):
    """ZCA or PCA whitening fit on training rows.

    Parameters
    ----------
    kind : {"zca", "wpca"}
        ZCA keeps the original axes, WPCA rotates onto principal axes.
    reg : float
        Added to every covariance eigenvalue before inversion, as a fraction
        of the mean eigenvalue. Low-variance (noise) directions are then
        shrunk instead of being inflated to unit variance. With ``reg=0`` the
        fitted rows come out with unit standard deviation per dimension.
    floor : float
        Eigenvalues below ``floor * max_eigenvalue`` are raised to that level,
        so the transform stays invertible on rank-deficient data.
    """

    def __init__(self, kind=ZCA, reg=0.0, floor=1e-10):
        self.kind = kind
        self.reg = reg
        self.floor = floor

    def fit(self, X, y=None):
        if self.kind not in (ZCA, WPCA):
            raise ValueError(f"unknown whitening kind {self.kind!r}")
        X = check_array(X, dtype=np.float64, ensure_min_samples=2)
        self.mean_ = X.mean(axis=0)
        Xc = X - self.mean_
        cov = Xc.T @ Xc / X.shape[0]
        evals, evecs = np.linalg.eigh(cov)
        evals = evals[::-1]
        evecs = evecs[:, ::-1]
        # deterministic sign: largest-magnitude entry of each vector positive
        signs = np.sign(evecs[np.argmax(np.abs(evecs), axis=0), np.arange(evecs.shape[1])])
        signs[signs == 0] = 1.0
        evecs = evecs * signs
        top = max(evals[0], 0.0)
        lam = np.maximum(evals, self.floor * top if top > 0 else 1.0)
        lam = lam + self.reg * max(float(np.mean(evals)), 0.0)
        scale = 1.0 / np.sqrt(lam)
        if self.kind == ZCA:
            self.transform_ = (evecs * scale) @ evecs.T
        else:
            self.transform_ = scale[:, None] * evecs.T
        self.eigenvalues_ = evals
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "transform_")
        X = check_array(X, dtype=np.float64)
        return (X - self.mean_) @ self.transform_.T

    def inverse_transform(self, X):
        check_is_fitted(self, "transform_")
        X = check_array(X, dtype=np.float64)
        return np.linalg.solve(self.transform_, X.T).T + self.mean_

    @classmethod
    def from_arrays(cls, mean, transform, kind=ZCA):
        norm = cls(kind=kind)
        norm.mean_ = np.asarray(mean, dtype=np.float64)
        norm.transform_ = np.asarray(transform, dtype=np.float64)
        norm.n_features_in_ = norm.mean_.size
        return norm

    @classmethod
    def identity(cls, dim: int):
        return cls.from_arrays(np.zeros(dim), np.eye(dim))
