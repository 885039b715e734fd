"""Single-modality restricted Boltzmann machines.

Binary-visible and unit-variance Gaussian-visible RBMs share one parameter
container, :class:`RbmParams`. Everything here works on plain numpy arrays;
:class:`GaussianRBM` wraps the training loop in the scikit-learn estimator
interface.

The ``*_exact`` functions enumerate all hidden configurations and integrate
(Gaussian) or sum (binary) the visible layer analytically. They are only
usable for tiny models and act as test oracles for the samplers and the
contrastive-divergence trainer.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, fields, replace
from typing import Callable, Optional

import numpy as np
from scipy.special import expit, logsumexp
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

logger = logging.getLogger(__name__)

BINARY = "binary"
GAUSSIAN = "gaussian"
VISIBLE_KINDS = (BINARY, GAUSSIAN)

MAX_ENUM_HIDDEN = 20
MAX_ENUM_BINARY = 24

LOG_2PI = np.log(2.0 * np.pi)


class TrainingDivergedError(FloatingPointError):
    """Raised when a parameter update produces a non-finite value."""


class EnumerationError(ValueError):
    """Raised when a model is too large for exact enumeration."""


@dataclass(eq=False)
class RbmParams:
    """Biases and weights of one RBM.

    ``a`` holds the visible biases (m,), ``b`` the hidden biases (n,) and
    ``W`` the (m, n) coupling matrix.
    """

    a: np.ndarray
    b: np.ndarray
    W: np.ndarray
    visible_kind: str = GAUSSIAN

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=np.float64).reshape(-1)
        self.b = np.asarray(self.b, dtype=np.float64).reshape(-1)
        self.W = np.asarray(self.W, dtype=np.float64)
        if self.visible_kind not in VISIBLE_KINDS:
            raise ValueError(f"unknown visible_kind {self.visible_kind!r}")
        if self.W.shape != (self.a.size, self.b.size):
            raise ValueError(
                f"W has shape {self.W.shape}, expected {(self.a.size, self.b.size)}"
            )
        for f in ("a", "b", "W"):
            if not np.all(np.isfinite(getattr(self, f))):
                raise ValueError(f"non-finite entries in {f}")

    @property
    def n_visible(self) -> int:
        return self.a.size

    @property
    def n_hidden(self) -> int:
        return self.b.size

    @classmethod
    def zeros(cls, n_visible: int, n_hidden: int, visible_kind: str = GAUSSIAN):
        return cls(np.zeros(n_visible), np.zeros(n_hidden),
                   np.zeros((n_visible, n_hidden)), visible_kind)

    def copy(self) -> "RbmParams":
        return RbmParams(self.a.copy(), self.b.copy(), self.W.copy(), self.visible_kind)

    def __eq__(self, other):
        if not isinstance(other, RbmParams):
            return NotImplemented
        return (self.visible_kind == other.visible_kind
                and all(np.array_equal(getattr(self, k), getattr(other, k))
                        for k in ("a", "b", "W")))


def _check_vec(x, size, name):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != size:
        raise ValueError(f"{name} has {x.shape[-1]} entries, expected {size}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    return x


# ---------------------------------------------------------------------------
# energies and conditionals


def energy_binary(v, h, p: RbmParams) -> float:
    """Energy of a binary RBM: ``-a.v - b.h - v.W.h``."""
    if p.visible_kind != BINARY:
        raise ValueError("energy_binary needs a binary-visible model")
    v = _check_vec(v, p.n_visible, "v")
    h = _check_vec(h, p.n_hidden, "h")
    return float(-(p.a @ v) - (p.b @ h) - v @ p.W @ h)


def energy_gaussian(v, h, p: RbmParams) -> float:
    """Energy of a unit-variance Gaussian RBM on whitened input ``v``."""
    if p.visible_kind != GAUSSIAN:
        raise ValueError("energy_gaussian needs a gaussian-visible model")
    v = _check_vec(v, p.n_visible, "v")
    h = _check_vec(h, p.n_hidden, "h")
    d = v - p.a
    return float(0.5 * (d @ d) - (p.b @ h) - v @ p.W @ h)


def energy(v, h, p: RbmParams) -> float:
    if p.visible_kind == BINARY:
        return energy_binary(v, h, p)
    return energy_gaussian(v, h, p)


def cond_hidden(v, p: RbmParams) -> np.ndarray:
    """P(h_j = 1 | v) for a single vector or a batch of rows."""
    v = _check_vec(v, p.n_visible, "v")
    return expit(p.b + v @ p.W)


def cond_visible(h, p: RbmParams) -> np.ndarray:
    """Mean of the visible conditional: ``a + W h`` or its logistic."""
    h = _check_vec(h, p.n_hidden, "h")
    act = p.a + h @ p.W.T
    if p.visible_kind == BINARY:
        return expit(act)
    return act


def sample_hidden(v, p: RbmParams, rng: np.random.Generator):
    ph = cond_hidden(v, p)
    return (rng.random(ph.shape) < ph).astype(np.float64), ph


def sample_visible(h, p: RbmParams, rng: np.random.Generator, mean_only=False):
    mu = cond_visible(h, p)
    if mean_only:
        return mu
    if p.visible_kind == BINARY:
        return (rng.random(mu.shape) < mu).astype(np.float64)
    return mu + rng.standard_normal(mu.shape)


def free_energy(v, p: RbmParams) -> np.ndarray:
    """Free energy ``-log sum_h exp(-E(v, h))`` per row of ``v``."""
    v = _check_vec(v, p.n_visible, "v")
    act = p.b + v @ p.W
    hidden_term = np.logaddexp(0.0, act).sum(axis=-1)
    if p.visible_kind == BINARY:
        return -(v @ p.a) - hidden_term
    d = v - p.a
    return 0.5 * np.sum(d * d, axis=-1) - hidden_term


# ---------------------------------------------------------------------------
# exact enumeration oracles


def binary_configs(n: int) -> np.ndarray:
    """All 2**n binary vectors, in lexicographic order, as float rows."""
    return np.array(list(itertools.product((0.0, 1.0), repeat=n))).reshape(2 ** n, n)


def _check_enumerable(p: RbmParams):
    if p.n_hidden > MAX_ENUM_HIDDEN:
        raise EnumerationError(
            f"{p.n_hidden} hidden units; enumeration is limited to {MAX_ENUM_HIDDEN}")
    if p.visible_kind == BINARY and p.n_visible + p.n_hidden > MAX_ENUM_BINARY:
        raise EnumerationError(
            f"binary model with {p.n_visible}+{p.n_hidden} units exceeds "
            f"the enumeration limit of {MAX_ENUM_BINARY}")


def hidden_log_weights(p: RbmParams) -> tuple[np.ndarray, np.ndarray]:
    """Unnormalized log marginal of every hidden configuration.

    Returns ``(H, logw)`` where ``logw[k] = log ∫ exp(-E(v, H[k])) dv`` (sum
    for binary visibles).
    """
    _check_enumerable(p)
    H = binary_configs(p.n_hidden)
    act = p.a + H @ p.W.T  # (2^n, m)
    if p.visible_kind == BINARY:
        logw = H @ p.b + np.logaddexp(0.0, act).sum(axis=1)
    else:
        # ∫ exp(-½|v-a|² + v.Wh) dv = (2π)^{m/2} exp(a.Wh + ½|Wh|²)
        wh = H @ p.W.T
        logw = (H @ p.b + wh @ p.a + 0.5 * np.sum(wh * wh, axis=1)
                + 0.5 * p.n_visible * LOG_2PI)
    return H, logw


def log_partition_exact(p: RbmParams) -> float:
    """log Z by enumerating hidden states (visibles handled analytically)."""
    _, logw = hidden_log_weights(p)
    return float(logsumexp(logw))


def hidden_marginal_exact(p: RbmParams) -> tuple[np.ndarray, np.ndarray]:
    """Hidden configurations and their exact model probabilities."""
    H, logw = hidden_log_weights(p)
    return H, np.exp(logw - logsumexp(logw))


def joint_table(p: RbmParams, energy_offset: float = 0.0):
    """Exact joint distribution of a binary RBM over all (v, h) pairs.

    Returns ``(V, H, P)`` with ``P[i, k] = P(V[i], H[k])``. ``energy_offset``
    is added to every energy before normalizing; it must not change ``P``.
    """
    if p.visible_kind != BINARY:
        raise ValueError("joint_table enumerates binary-visible models only")
    _check_enumerable(p)
    V = binary_configs(p.n_visible)
    H = binary_configs(p.n_hidden)
    E = -(V @ p.a)[:, None] - (H @ p.b)[None, :] - V @ p.W @ H.T + energy_offset
    logp = -E - logsumexp(-E)
    return V, H, np.exp(logp)


def loglik_exact(data, p: RbmParams) -> float:
    """Mean exact log-likelihood (log density for Gaussian visibles)."""
    data = np.atleast_2d(_check_vec(data, p.n_visible, "data"))
    if data.shape[0] == 0:
        raise ValueError("empty data")
    return float(np.mean(-free_energy(data, p)) - log_partition_exact(p))


def loglik_grad_exact(data, p: RbmParams) -> RbmParams:
    """Gradient of :func:`loglik_exact` w.r.t. (a, b, W).

    Data term minus model term; the model expectation is computed by
    enumeration over hidden states.
    """
    data = np.atleast_2d(_check_vec(data, p.n_visible, "data"))
    ph = cond_hidden(data, p)
    H, q = hidden_marginal_exact(p)
    mean_v_given_h = cond_visible(H, p)  # (2^n, m)
    model_v = q @ mean_v_given_h
    model_h = q @ H
    model_vh = (mean_v_given_h * q[:, None]).T @ H
    grad_a = data.mean(axis=0) - model_v
    grad_b = ph.mean(axis=0) - model_h
    grad_W = data.T @ ph / data.shape[0] - model_vh
    return RbmParams(grad_a, grad_b, grad_W, p.visible_kind)


def sample_exact(p: RbmParams, n_samples: int, rng: np.random.Generator):
    """Draw independent visible samples from a tiny model by ancestral sampling."""
    H, q = hidden_marginal_exact(p)
    idx = rng.choice(len(q), size=n_samples, p=q)
    return sample_visible(H[idx], p, rng)


# ---------------------------------------------------------------------------
# sampling


@dataclass
class GibbsResult:
    v: np.ndarray
    h: np.ndarray
    hidden_probs: np.ndarray  # (sweeps, n)
    v_trace: Optional[np.ndarray] = None
    h_trace: Optional[np.ndarray] = None


def gibbs_chain(p: RbmParams, v0, sweeps: int, seed=None,
                keep_samples: bool = False) -> GibbsResult:
    """Alternating block Gibbs sampler started at ``v0``.

    One sweep samples h | v and then v | h. The hidden-probability trace
    holds P(h | v) evaluated at the start of each sweep.
    """
    if sweeps < 1:
        raise ValueError("sweeps must be >= 1")
    rng = np.random.default_rng(seed)
    v = _check_vec(v0, p.n_visible, "v0").copy()
    probs = np.empty((sweeps, p.n_hidden))
    v_trace = np.empty((sweeps, p.n_visible)) if keep_samples else None
    h_trace = np.empty((sweeps, p.n_hidden)) if keep_samples else None
    h = np.zeros(p.n_hidden)
    for t in range(sweeps):
        h, probs[t] = sample_hidden(v, p, rng)
        v = sample_visible(h, p, rng)
        if keep_samples:
            v_trace[t] = v
            h_trace[t] = h
    return GibbsResult(v, h, probs, v_trace, h_trace)


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainConfig:
    """Hyperparameters shared by the single- and multi-modal trainers."""

    learning_rate: float = 0.001
    batch_size: int = 10
    n_updates: int = 50000
    cd_k: int = 1
    persistent: bool = False
    momentum_initial: float = 0.5
    momentum_final: float = 0.9
    momentum_switch: float = 0.2  # fraction of updates before switching
    weight_decay: float = 0.0
    init_std: float = 0.01
    sample_visible: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.n_updates < 1 or self.cd_k < 1:
            raise ValueError("batch_size, n_updates and cd_k must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")

    def momentum(self, step: int) -> float:
        if step < self.momentum_switch * self.n_updates:
            return self.momentum_initial
        return self.momentum_final

    def with_seed(self, seed: int) -> "TrainConfig":
        return replace(self, seed=int(seed))

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


class BatchStream:
    """Epoch-shuffled minibatch indices drawn from a dedicated generator."""

    def __init__(self, n: int, batch_size: int, rng: np.random.Generator):
        self.n = n
        self.batch_size = min(batch_size, n)
        self.rng = rng
        self._order = rng.permutation(n)
        self._pos = 0

    def next(self) -> np.ndarray:
        if self._pos + self.batch_size > self.n:
            self._order = self.rng.permutation(self.n)
            self._pos = 0
        idx = self._order[self._pos:self._pos + self.batch_size]
        self._pos += self.batch_size
        return idx


def check_finite_or_raise(step: int, **arrays):
    for name, arr in arrays.items():
        if not np.all(np.isfinite(arr)):
            norms = {k: float(np.linalg.norm(np.nan_to_num(v))) for k, v in arrays.items()}
            raise TrainingDivergedError(
                f"non-finite {name} after update {step}; parameter norms {norms}")


def train_cd(data, n_hidden: int, config: TrainConfig = TrainConfig(),
             visible_kind: str = GAUSSIAN, init: Optional[RbmParams] = None,
             callback: Optional[Callable[[int, RbmParams], None]] = None) -> RbmParams:
    """Fit an RBM by CD-k (or PCD-k) stochastic gradient ascent.

    ``data`` must already be normalized for Gaussian visibles. ``callback`` is
    invoked as ``callback(step, params)`` after every update with a live view
    of the parameters.
    """
    data = check_array(data, dtype=np.float64)
    if data.shape[0] == 0:
        raise ValueError("empty training data")
    rng = np.random.default_rng(config.seed)
    m = data.shape[1]
    if init is None:
        p = RbmParams(np.zeros(m), np.zeros(n_hidden),
                      config.init_std * rng.standard_normal((m, n_hidden)), visible_kind)
    else:
        p = init.copy()
    vel_a = np.zeros_like(p.a)
    vel_b = np.zeros_like(p.b)
    vel_W = np.zeros_like(p.W)
    batches = BatchStream(data.shape[0], config.batch_size, rng)
    fantasy = None
    lr = config.learning_rate
    for step in range(config.n_updates):
        v_pos = data[batches.next()]
        ph_pos = expit(p.b + v_pos @ p.W)
        if config.persistent:
            if fantasy is None:
                fantasy = v_pos.copy()
            v_neg = fantasy
        else:
            v_neg = v_pos
        ph_neg = ph_pos if not config.persistent else expit(p.b + v_neg @ p.W)
        for _ in range(config.cd_k):
            h_neg = (rng.random(ph_neg.shape) < ph_neg).astype(np.float64)
            v_neg = sample_visible(h_neg, p, rng, mean_only=not config.sample_visible)
            ph_neg = expit(p.b + v_neg @ p.W)
        if config.persistent:
            fantasy = v_neg
        bs = v_pos.shape[0]
        g_W = (v_pos.T @ ph_pos - v_neg.T @ ph_neg) / bs - config.weight_decay * p.W
        g_a = (v_pos - v_neg).mean(axis=0)
        g_b = (ph_pos - ph_neg).mean(axis=0)
        mom = config.momentum(step)
        vel_W = mom * vel_W + lr * g_W
        vel_a = mom * vel_a + lr * g_a
        vel_b = mom * vel_b + lr * g_b
        p.W += vel_W
        p.a += vel_a
        p.b += vel_b
        check_finite_or_raise(step, a=p.a, b=p.b, W=p.W)
        if callback is not None:
            callback(step, p)
    return p


class GaussianRBM(TransformerMixin, BaseEstimator):
    """Scikit-learn wrapper around :func:`train_cd`.

    ``transform`` returns hidden activation probabilities.
    """

    def __init__(self, n_hidden=80, visible_kind=GAUSSIAN, learning_rate=0.001,
                 batch_size=10, n_updates=50000, cd_k=1, persistent=False,
                 weight_decay=0.0, random_state=0):
        self.n_hidden = n_hidden
        self.visible_kind = visible_kind
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.n_updates = n_updates
        self.cd_k = cd_k
        self.persistent = persistent
        self.weight_decay = weight_decay
        self.random_state = random_state

    def _config(self) -> TrainConfig:
        return TrainConfig(learning_rate=self.learning_rate, batch_size=self.batch_size,
                           n_updates=self.n_updates, cd_k=self.cd_k,
                           persistent=self.persistent, weight_decay=self.weight_decay,
                           seed=self.random_state)

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.params_ = train_cd(X, self.n_hidden, self._config(), self.visible_kind)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        return cond_hidden(X, self.params_)

    def score_samples(self, X):
        """Negative free energy (unnormalized log-likelihood) per row."""
        check_is_fitted(self, "params_")
        return -free_energy(check_array(X, dtype=np.float64), self.params_)
