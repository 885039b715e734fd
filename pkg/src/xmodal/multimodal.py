"""Two-modality Gaussian RBM with a shared hidden layer.

Both visible groups are unit-variance Gaussians on whitened input and share
one layer of logistic hidden units. Once trained, the model supports three
queries: filling in a missing modality, fusing both modalities into hidden
probabilities, and inferring hidden probabilities from one modality alone.
The last one produces the modality-free features used for matching.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import expit, logsumexp
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .rbm import (
    LOG_2PI,
    MAX_ENUM_HIDDEN,
    BatchStream,
    EnumerationError,
    RbmParams,
    TrainConfig,
    binary_configs,
    check_finite_or_raise,
)

MODALITY_A = "A"
MODALITY_B = "B"
MODALITIES = (MODALITY_A, MODALITY_B)
GIBBS = "gibbs"
MEAN_FIELD = "mean_field"


@dataclass(eq=False)
class MultiModalRbmParams:
    """``a``/``W1`` belong to modality A, ``b``/``W2`` to modality B, ``c`` to the hidden layer."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    W1: np.ndarray
    W2: np.ndarray

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=np.float64).reshape(-1)
        self.b = np.asarray(self.b, dtype=np.float64).reshape(-1)
        self.c = np.asarray(self.c, dtype=np.float64).reshape(-1)
        self.W1 = np.asarray(self.W1, dtype=np.float64)
        self.W2 = np.asarray(self.W2, dtype=np.float64)
        if self.W1.shape != (self.a.size, self.c.size):
            raise ValueError(f"W1 has shape {self.W1.shape}, expected {(self.a.size, self.c.size)}")
        if self.W2.shape != (self.b.size, self.c.size):
            raise ValueError(f"W2 has shape {self.W2.shape}, expected {(self.b.size, self.c.size)}")
        for k in ("a", "b", "c", "W1", "W2"):
            if not np.all(np.isfinite(getattr(self, k))):
                raise ValueError(f"non-finite entries in {k}")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.a.size, self.c.size, self.b.size

    @property
    def architecture(self) -> str:
        return "-".join(str(d) for d in self.dims)

    @classmethod
    def zeros(cls, m1: int, n: int, m2: int):
        return cls(np.zeros(m1), np.zeros(m2), np.zeros(n), np.zeros((m1, n)), np.zeros((m2, n)))

    def copy(self):
        return MultiModalRbmParams(self.a.copy(), self.b.copy(), self.c.copy(),
                                   self.W1.copy(), self.W2.copy())

    def swapped(self) -> "MultiModalRbmParams":
        """The same model with the two modality roles exchanged."""
        return MultiModalRbmParams(self.b, self.a, self.c, self.W2, self.W1)

    def single_modality(self, modality: str) -> RbmParams:
        """The (bias, hidden bias, weights) RBM seen by one modality."""
        if modality == MODALITY_A:
            return RbmParams(self.a, self.c, self.W1)
        return RbmParams(self.b, self.c, self.W2)

    def __eq__(self, other):
        if not isinstance(other, MultiModalRbmParams):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k))
                   for k in ("a", "b", "c", "W1", "W2"))


@dataclass
class SharedRepVector:
    probs: np.ndarray
    source: str  # "from_A", "from_B" or "from_both"


def _check_modality(modality):
    if modality not in MODALITIES:
        raise ValueError(f"modality must be 'A' or 'B', got {modality!r}")


def _vec(x, size, name):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != size:
        raise ValueError(f"{name} has {x.shape[-1]} entries, expected {size}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    return x


def energy_mm(v1, v2, h, p: MultiModalRbmParams) -> float:
    v1 = _vec(v1, p.a.size, "v1")
    v2 = _vec(v2, p.b.size, "v2")
    h = _vec(h, p.c.size, "h")
    d1 = v1 - p.a
    d2 = v2 - p.b
    return float(0.5 * (d1 @ d1) + 0.5 * (d2 @ d2) - p.c @ h - v1 @ p.W1 @ h - v2 @ p.W2 @ h)


def cond_hidden_joint(v1, v2, p: MultiModalRbmParams) -> np.ndarray:
    """P(h_j = 1 | v1, v2); exact because the hidden units are conditionally independent."""
    v1 = _vec(v1, p.a.size, "v1")
    v2 = _vec(v2, p.b.size, "v2")
    return expit(p.c + v1 @ p.W1 + v2 @ p.W2)


def cond_visible_mm(h, p: MultiModalRbmParams, modality: str) -> np.ndarray:
    """Mean of one modality's Gaussian conditional given ``h``."""
    _check_modality(modality)
    h = _vec(h, p.c.size, "h")
    if modality == MODALITY_A:
        return p.a + h @ p.W1.T
    return p.b + h @ p.W2.T


def _oriented(p: MultiModalRbmParams, present: str) -> MultiModalRbmParams:
    # present modality always occupies the (a, W1) slot internally
    _check_modality(present)
    return p if present == MODALITY_A else p.swapped()


def _run_chain(v, q: MultiModalRbmParams, method: str, sweeps: int, seed):
    """Shared chain for :func:`infer_shared` and :func:`generate_missing`.

    ``q`` is oriented so the observed modality is A. Returns the averaged
    hidden probabilities and the missing-modality estimate.
    """
    if sweeps < 1:
        raise ValueError("sweeps must be >= 1")
    if method not in (GIBBS, MEAN_FIELD):
        raise ValueError(f"unknown inference method {method!r}")
    v = _vec(v, q.a.size, "v")
    single = v.ndim == 1
    v = np.atleast_2d(v)
    n_rows = v.shape[0]
    drive = q.c + v @ q.W1  # constant contribution of the observed modality
    if method == MEAN_FIELD:
        miss = np.broadcast_to(q.b, (n_rows, q.b.size)).copy()
        for _ in range(sweeps):
            probs = expit(drive + miss @ q.W2)
            miss = q.b + probs @ q.W2.T
        out_h, out_v = probs, miss
    else:
        rng = np.random.default_rng(seed)
        miss = rng.standard_normal((n_rows, q.b.size))
        keep_from = sweeps - max(sweeps // 2, 1)
        acc_h = np.zeros((n_rows, q.c.size))
        acc_v = np.zeros((n_rows, q.b.size))
        for t in range(sweeps):
            probs = expit(drive + miss @ q.W2)
            h = (rng.random(probs.shape) < probs).astype(np.float64)
            miss = q.b + h @ q.W2.T + rng.standard_normal(miss.shape)
            if t >= keep_from:
                acc_h += probs
                acc_v += miss
        kept = sweeps - keep_from
        out_h, out_v = acc_h / kept, acc_v / kept
    if single:
        return out_h[0], out_v[0]
    return out_h, out_v


def infer_shared(v_present, present: str, p: MultiModalRbmParams, method: str = MEAN_FIELD,
                 sweeps: int = 50, seed=None) -> np.ndarray:
    """Hidden activation probabilities given one observed modality.

    The missing modality and the hidden layer are treated as unobserved.
    ``mean_field`` iterates expectations from the missing modality's bias and
    returns the final hidden probabilities. ``gibbs`` starts the missing
    modality at standard normal noise, alternates block samples, and averages
    P(h | v1, v2) over the last half of the sweeps. Accepts one vector or a
    batch of rows.
    """
    probs, _ = _run_chain(v_present, _oriented(p, present), method, sweeps, seed)
    return probs


def fuse_modalities(v1, v2, p: MultiModalRbmParams) -> SharedRepVector:
    return SharedRepVector(cond_hidden_joint(v1, v2, p), "from_both")


def generate_missing(v_present, present: str, p: MultiModalRbmParams,
                     method: str = MEAN_FIELD, sweeps: int = 50, seed=None) -> np.ndarray:
    """Reconstruct the unobserved modality from the observed one."""
    _, v_missing = _run_chain(v_present, _oriented(p, present), method, sweeps, seed)
    return v_missing


# ---------------------------------------------------------------------------
# exact oracles for tiny models


def mm_hidden_log_weights(p: MultiModalRbmParams):
    """Hidden configurations with both visible groups integrated out."""
    if p.c.size > MAX_ENUM_HIDDEN:
        raise EnumerationError(f"{p.c.size} hidden units exceed the enumeration limit")
    H = binary_configs(p.c.size)
    w1 = H @ p.W1.T
    w2 = H @ p.W2.T
    logw = (H @ p.c + w1 @ p.a + 0.5 * np.sum(w1 * w1, axis=1)
            + w2 @ p.b + 0.5 * np.sum(w2 * w2, axis=1)
            + 0.5 * (p.a.size + p.b.size) * LOG_2PI)
    return H, logw


def mm_log_partition_exact(p: MultiModalRbmParams) -> float:
    return float(logsumexp(mm_hidden_log_weights(p)[1]))


def mm_loglik_exact(v1, v2, p: MultiModalRbmParams) -> float:
    """Mean exact joint log density of paired rows."""
    v1 = np.atleast_2d(_vec(v1, p.a.size, "v1"))
    v2 = np.atleast_2d(_vec(v2, p.b.size, "v2"))
    act = p.c + v1 @ p.W1 + v2 @ p.W2
    neg_free = (np.logaddexp(0.0, act).sum(axis=1)
                - 0.5 * np.sum((v1 - p.a) ** 2, axis=1)
                - 0.5 * np.sum((v2 - p.b) ** 2, axis=1))
    return float(neg_free.mean() - mm_log_partition_exact(p))


def hidden_posterior_one_modality_exact(v_present, present: str, p: MultiModalRbmParams):
    """Exact P(h_j = 1 | one modality), integrating the other one analytically."""
    q = _oriented(p, present)
    v = _vec(v_present, q.a.size, "v")
    if q.c.size > MAX_ENUM_HIDDEN:
        raise EnumerationError(f"{q.c.size} hidden units exceed the enumeration limit")
    H = binary_configs(q.c.size)
    w2 = H @ q.W2.T
    logw = H @ q.c + H @ (v @ q.W1) + w2 @ q.b + 0.5 * np.sum(w2 * w2, axis=1)
    post = np.exp(logw - logsumexp(logw))
    return post @ H


# ---------------------------------------------------------------------------
# training


def _init_params(m1, n, m2, config: TrainConfig, rng) -> MultiModalRbmParams:
    return MultiModalRbmParams(np.zeros(m1), np.zeros(m2), np.zeros(n),
                               config.init_std * rng.standard_normal((m1, n)),
                               config.init_std * rng.standard_normal((m2, n)))


def train_mm(v1, v2, n_hidden: int, config: TrainConfig = TrainConfig(),
             init: Optional[MultiModalRbmParams] = None,
             callback: Optional[Callable[[int, MultiModalRbmParams], None]] = None
             ) -> MultiModalRbmParams:
    """Contrastive-divergence training on paired, whitened rows.

    The positive phase uses the exact hidden conditional with both modalities
    observed. The negative phase runs ``config.cd_k`` block-Gibbs sweeps over
    (h, v1, v2), persistent across updates when ``config.persistent`` is set.
    """
    v1 = check_array(v1, dtype=np.float64)
    v2 = check_array(v2, dtype=np.float64)
    if v1.shape[0] == 0:
        raise ValueError("empty training data")
    if v1.shape[0] != v2.shape[0]:
        raise ValueError("modalities must have the same number of paired rows")
    rng = np.random.default_rng(config.seed)
    p = init.copy() if init is not None else _init_params(
        v1.shape[1], n_hidden, v2.shape[1], config, rng)
    vel = {k: np.zeros_like(getattr(p, k)) for k in ("a", "b", "c", "W1", "W2")}
    batches = BatchStream(v1.shape[0], config.batch_size, rng)
    fantasy = None
    lr = config.learning_rate
    for step in range(config.n_updates):
        idx = batches.next()
        x1, x2 = v1[idx], v2[idx]
        ph_pos = expit(p.c + x1 @ p.W1 + x2 @ p.W2)
        if config.persistent:
            if fantasy is None:
                fantasy = (x1.copy(), x2.copy())
            y1, y2 = fantasy
            ph_neg = expit(p.c + y1 @ p.W1 + y2 @ p.W2)
        else:
            ph_neg = ph_pos
        for _ in range(config.cd_k):
            h = (rng.random(ph_neg.shape) < ph_neg).astype(np.float64)
            y1 = p.a + h @ p.W1.T
            y2 = p.b + h @ p.W2.T
            if config.sample_visible:
                y1 = y1 + rng.standard_normal(y1.shape)
                y2 = y2 + rng.standard_normal(y2.shape)
            ph_neg = expit(p.c + y1 @ p.W1 + y2 @ p.W2)
        if config.persistent:
            fantasy = (y1, y2)
        bs = x1.shape[0]
        grads = {
            "W1": (x1.T @ ph_pos - y1.T @ ph_neg) / bs - config.weight_decay * p.W1,
            "W2": (x2.T @ ph_pos - y2.T @ ph_neg) / bs - config.weight_decay * p.W2,
            "a": (x1 - y1).mean(axis=0),
            "b": (x2 - y2).mean(axis=0),
            "c": (ph_pos - ph_neg).mean(axis=0),
        }
        mom = config.momentum(step)
        for k, g in grads.items():
            vel[k] = mom * vel[k] + lr * g
            getattr(p, k).__iadd__(vel[k])
        check_finite_or_raise(step, a=p.a, b=p.b, c=p.c, W1=p.W1, W2=p.W2)
        if callback is not None:
            callback(step, p)
    return p


class MultiModalRBM(TransformerMixin, BaseEstimator):
    """Estimator interface over :func:`train_mm` and :func:`infer_shared`.

    ``fit(X1, X2)`` takes paired rows of the two modalities;
    ``transform(X, modality=...)`` returns shared representations.
    """

    def __init__(self, n_hidden=80, learning_rate=0.001, batch_size=10, n_updates=50000,
                 cd_k=1, persistent=False, weight_decay=0.0, inference=MEAN_FIELD,
                 sweeps=50, random_state=0):
        self.n_hidden = n_hidden
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.n_updates = n_updates
        self.cd_k = cd_k
        self.persistent = persistent
        self.weight_decay = weight_decay
        self.inference = inference
        self.sweeps = sweeps
        self.random_state = random_state

    def _config(self) -> TrainConfig:
        return TrainConfig(learning_rate=self.learning_rate, batch_size=self.batch_size,
                           n_updates=self.n_updates, cd_k=self.cd_k,
                           persistent=self.persistent, weight_decay=self.weight_decay,
                           seed=self.random_state)

    def fit(self, X1, X2):
        self.params_ = train_mm(X1, X2, self.n_hidden, self._config())
        return self

    def transform(self, X, modality=MODALITY_A):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        return infer_shared(X, modality, self.params_, self.inference, self.sweeps,
                            self.random_state)

    def fuse(self, X1, X2):
        check_is_fitted(self, "params_")
        return cond_hidden_joint(check_array(X1), check_array(X2), self.params_)

    def generate(self, X, modality=MODALITY_A):
        """Reconstruct the other modality from rows of ``modality``."""
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        return generate_missing(X, modality, self.params_, self.inference, self.sweeps,
                                self.random_state)
