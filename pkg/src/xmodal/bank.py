"""Per-facial-point banks of multi-modal RBMs.

Three weight-sharing regimes are supported:

``local``
    one independent RBM per point (the default)
``convolutional``
    a single RBM shared by every point
``global``
    a single wide RBM over the concatenation of all points

Inputs are jets shaped ``(n_samples, n_points, jet_dim)``. Each point and
modality gets its own whitening transform, fitted on training rows only.
"""

from __future__ import annotations

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .multimodal import MEAN_FIELD, MODALITIES, MODALITY_A, infer_shared, train_mm
from .rbm import TrainConfig
from .whitening import ZCA, GaussianNormalizer

LOCAL = "local"
CONVOLUTIONAL = "convolutional"
GLOBAL = "global"
REGIMES = (LOCAL, CONVOLUTIONAL, GLOBAL)
_ALIASES = {"conv": CONVOLUTIONAL}


def normalize_regime(regime: str) -> str:
    regime = _ALIASES.get(regime, regime)
    if regime not in REGIMES:
        raise ValueError(f"unknown regime {regime!r}; expected one of {REGIMES}")
    return regime


def point_seed(master_seed: int, point_index: int) -> int:
    """Training seed of one point, derived from its position only."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(point_index),))
    return int(ss.generate_state(1)[0])


def _check_jets(jets, name):
    jets = np.asarray(jets, dtype=np.float64)
    if jets.ndim != 3:
        raise ValueError(f"{name} must be shaped (samples, points, dim), got {jets.shape}")
    if not np.all(np.isfinite(jets)):
        raise ValueError(f"{name} contains non-finite values")
    return jets


class RbmBank(BaseEstimator):
    """A bank of multi-modal RBMs producing shared representations.

    Parameters
    ----------
    regime : {"local", "convolutional", "global"}
    n_hidden : int
        Hidden units per point RBM (local and convolutional regimes).
    global_hidden : int
        Hidden units of the single RBM in the global regime.
    train_config : TrainConfig or None
        Hyperparameters; ``seed`` is replaced by ``random_state``-derived seeds.
    inference : {"mean_field", "gibbs"}
    sweeps : int
        Inference sweeps per point.
    whitening, whitening_reg, whitening_floor
        Forwarded to :class:`GaussianNormalizer`.
    random_state : int
        Master seed.
    n_jobs : int
        Parallel workers for local-regime training; results do not depend on it.
    """

    def __init__(self, regime=LOCAL, n_hidden=80, global_hidden=3520, train_config=None,
                 inference=MEAN_FIELD, sweeps=50, whitening=ZCA, whitening_reg=0.3,
                 whitening_floor=1e-10, random_state=0, n_jobs=1):
        self.regime = regime
        self.n_hidden = n_hidden
        self.global_hidden = global_hidden
        self.train_config = train_config
        self.inference = inference
        self.sweeps = sweeps
        self.whitening = whitening
        self.whitening_reg = whitening_reg
        self.whitening_floor = whitening_floor
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _normalizer(self):
        return GaussianNormalizer(kind=self.whitening, reg=self.whitening_reg,
                                  floor=self.whitening_floor)

    def fit(self, jets_a, jets_b, pairs=None):
        """Fit normalizers and RBMs.

        ``jets_a`` and ``jets_b`` hold the training samples of each modality.
        ``pairs`` is an (n_pairs, 2) array of row indices ``(i_a, i_b)`` of
        cross-modal samples of the same subject; by default row ``i`` of A is
        paired with row ``i`` of B.
        """
        regime = normalize_regime(self.regime)
        jets_a = _check_jets(jets_a, "jets_a")
        jets_b = _check_jets(jets_b, "jets_b")
        if jets_a.shape[1:] != jets_b.shape[1:]:
            raise ValueError("both modalities need the same points and jet dimension")
        if pairs is None:
            if jets_a.shape[0] != jets_b.shape[0]:
                raise ValueError("unpaired inputs need an explicit pairs array")
            pairs = np.column_stack([np.arange(jets_a.shape[0])] * 2)
        pairs = np.asarray(pairs, dtype=np.intp).reshape(-1, 2)
        if min(jets_a.shape[0], jets_b.shape[0]) < 2 or pairs.shape[0] < 2:
            raise ValueError("every point needs at least 2 training samples")
        n_points = jets_a.shape[1]
        config = self.train_config or TrainConfig()

        self.normalizers_ = []
        wa = np.empty_like(jets_a)
        wb = np.empty_like(jets_b)
        for i in range(n_points):
            na = self._normalizer().fit(jets_a[:, i])
            nb = self._normalizer().fit(jets_b[:, i])
            wa[:, i] = na.transform(jets_a[:, i])
            wb[:, i] = nb.transform(jets_b[:, i])
            self.normalizers_.append({"A": na, "B": nb})
        xa = wa[pairs[:, 0]]
        xb = wb[pairs[:, 1]]

        if regime == LOCAL:
            seeds = [point_seed(self.random_state, i) for i in range(n_points)]
            self.rbms_ = Parallel(n_jobs=self.n_jobs)(
                delayed(train_mm)(xa[:, i], xb[:, i], self.n_hidden, config.with_seed(s))
                for i, s in enumerate(seeds))
        elif regime == CONVOLUTIONAL:
            seeds = [point_seed(self.random_state, 0)]
            d = jets_a.shape[2]
            self.rbms_ = [train_mm(xa.reshape(-1, d), xb.reshape(-1, d), self.n_hidden,
                                   config.with_seed(seeds[0]))]
        else:
            seeds = [point_seed(self.random_state, 0)]
            self.rbms_ = [train_mm(xa.reshape(len(xa), -1), xb.reshape(len(xb), -1),
                                   self.global_hidden, config.with_seed(seeds[0]))]
        self.regime_ = regime
        self.point_seeds_ = seeds
        self.n_points_ = n_points
        self.jet_dim_ = jets_a.shape[2]
        return self

    @property
    def output_dim(self) -> int:
        check_is_fitted(self, "rbms_")
        if self.regime_ == GLOBAL:
            return self.rbms_[0].c.size
        return self.rbms_[0].c.size * self.n_points_

    def whiten(self, jets, modality=MODALITY_A):
        check_is_fitted(self, "rbms_")
        if modality not in MODALITIES:
            raise ValueError(f"modality must be 'A' or 'B', got {modality!r}")
        jets = _check_jets(jets, "jets")
        if jets.shape[1:] != (self.n_points_, self.jet_dim_):
            raise ValueError(f"jets shaped {jets.shape[1:]}, bank expects "
                             f"{(self.n_points_, self.jet_dim_)}")
        out = np.empty_like(jets)
        for i in range(self.n_points_):
            out[:, i] = self.normalizers_[i][modality].transform(jets[:, i])
        return out

    def rbm_for_point(self, i: int):
        return self.rbms_[i] if self.regime_ == LOCAL else self.rbms_[0]

    def transform(self, jets, modality=MODALITY_A):
        """Shared representation: hidden probabilities concatenated in point order."""
        w = self.whiten(jets, modality)
        if self.regime_ == GLOBAL:
            return infer_shared(w.reshape(len(w), -1), modality, self.rbms_[0],
                                self.inference, self.sweeps, self.point_seeds_[0])
        parts = []
        for i in range(self.n_points_):
            seed = point_seed(self.random_state, i)
            parts.append(infer_shared(w[:, i], modality, self.rbm_for_point(i),
                                      self.inference, self.sweeps, seed))
        return np.concatenate(parts, axis=1)

    @property
    def architecture(self) -> str:
        check_is_fitted(self, "rbms_")
        arch = self.rbms_[0].architecture
        if self.regime_ == LOCAL:
            return f"{self.n_points_}x({arch})"
        return arch


def train_bank(jets_a, jets_b, regime=LOCAL, config=None, pairs=None, **kwargs) -> RbmBank:
    """Functional shortcut for ``RbmBank(regime, ...).fit(...)``."""
    seed = kwargs.pop("random_state", config.seed if config is not None else 0)
    return RbmBank(regime=regime, train_config=config, random_state=seed,
                   **kwargs).fit(jets_a, jets_b, pairs)


def infer_bank(bank: RbmBank, jets, modality=MODALITY_A):
    return bank.transform(jets, modality)
