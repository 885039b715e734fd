"""End-to-end matcher: jets -> (RBM bank) -> PCA head -> fused cosine scores."""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .bank import LOCAL, RbmBank, normalize_regime
from .head import ProjectionHead, cosine_matrix, zscore_normalize
from .multimodal import MEAN_FIELD
from .rbm import TrainConfig
from .whitening import ZCA

REMOVED_K_WITH_RBM = 11
REMOVED_K_WITHOUT_RBM = 20


@dataclass
class GaborConfig:
    n_orientations: int = 8
    n_scales: int = 5
    k_max: float = float(np.pi / 2)
    k_factor: float = float(np.sqrt(2.0))
    sigma: float = float(2 * np.pi)
    patch_radius: int = 0
    deformation_factor: float = 0.1

    def bank_spec(self):
        from .features import GaborBankSpec
        return GaborBankSpec(self.n_orientations, self.n_scales, self.k_max, self.k_factor,
                             self.sigma, self.patch_radius)


@dataclass
class BankConfig:
    regime: str = LOCAL
    n_hidden: int = 80
    global_hidden: int = 3520
    per_half_banks: bool = False
    whitening: str = ZCA
    whitening_reg: float = 0.3
    inference: str = MEAN_FIELD
    sweeps: int = 50
    n_jobs: int = 1


@dataclass
class HeadConfig:
    removed_k_rbm: int = REMOVED_K_WITH_RBM
    removed_k_no_rbm: int = REMOVED_K_WITHOUT_RBM
    energy_cutoff: Optional[float] = None


@dataclass
class EvalConfig:
    n_repeats: int = 10
    train_fraction: float = 0.5
    dev_split_index: Optional[int] = None


@dataclass
class PipelineConfig:
    """Every tunable setting of the matching pipeline, with working defaults."""

    use_rbm: bool = True
    fuse_halves: bool = True
    zscore: bool = False
    far: float = 1e-3
    seed: int = 0
    gabor: GaborConfig = field(default_factory=GaborConfig)
    bank: BankConfig = field(default_factory=BankConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    head: HeadConfig = field(default_factory=HeadConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def __post_init__(self):
        self.bank.regime = normalize_regime(self.bank.regime)

    @property
    def removed_k(self) -> int:
        return self.head.removed_k_rbm if self.use_rbm else self.head.removed_k_no_rbm

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Optional[dict]) -> "PipelineConfig":
        return _merge(cls(), data or {})

    def updated(self, **overrides) -> "PipelineConfig":
        """Copy with dotted-path overrides, e.g. ``updated(**{"bank.regime": "global"})``."""
        nested: dict = {}
        for key, value in overrides.items():
            node = nested
            *path, leaf = key.split(".")
            for part in path:
                node = node.setdefault(part, {})
            node[leaf] = value
        return _merge(copy.deepcopy(self), nested)

    def check_consistency(self, n_points: int, head_dim: Optional[int] = None):
        if self.use_rbm and head_dim is not None:
            expected = (self.bank.global_hidden if self.bank.regime == "global"
                        else self.bank.n_hidden * n_points)
            if head_dim != expected:
                raise ValueError(f"head input dimension {head_dim} != bank output {expected}")


def _merge(obj, data: dict):
    if not isinstance(data, dict):
        raise ValueError(f"expected a mapping for {type(obj).__name__}, got {data!r}")
    names = {f.name: f for f in fields(obj)}
    for key, value in data.items():
        if key not in names:
            raise ValueError(f"unknown config key {key!r} in {type(obj).__name__}")
        current = getattr(obj, key)
        if is_dataclass(current):
            setattr(obj, key, _merge(current, value))
        else:
            setattr(obj, key, value)
    obj.__post_init__() if hasattr(obj, "__post_init__") else None
    return obj


def within_subject_pairs(subjects_a, subjects_b) -> np.ndarray:
    """All (row in A, row in B) index pairs that share a subject."""
    subjects_a = np.asarray(subjects_a)
    subjects_b = np.asarray(subjects_b)
    ia, ib = np.nonzero(subjects_a[:, None] == subjects_b[None, :])
    return np.column_stack([ia, ib])


class HeterogeneousMatcher(BaseEstimator):
    """Cross-modal face matcher.

    ``fit`` takes jets shaped ``(n_samples, n_halves, n_points, jet_dim)``
    with per-sample subject ids and modalities ("A"/"B"). Per half, the
    shared representation (or the raw jets when ``use_rbm`` is off) is fed
    to a :class:`ProjectionHead` fit on both modalities' training samples.
    ``score`` returns the fused cosine similarity matrix.
    """

    def __init__(self, config: Optional[PipelineConfig] = None):
        self.config = config

    @property
    def config_(self) -> PipelineConfig:
        return self.config if self.config is not None else PipelineConfig()

    def _make_bank(self):
        cfg = self.config_
        return RbmBank(regime=cfg.bank.regime, n_hidden=cfg.bank.n_hidden,
                       global_hidden=cfg.bank.global_hidden, train_config=cfg.train,
                       inference=cfg.bank.inference, sweeps=cfg.bank.sweeps,
                       whitening=cfg.bank.whitening, whitening_reg=cfg.bank.whitening_reg,
                       random_state=cfg.seed, n_jobs=cfg.bank.n_jobs)

    def fit(self, features, subjects, modalities):
        cfg = self.config_
        X = np.asarray(features, dtype=np.float64)
        if X.ndim != 4:
            raise ValueError(f"features must be (samples, halves, points, dim), got {X.shape}")
        subjects = np.asarray(subjects)
        modalities = np.asarray(modalities)
        a, b = modalities == "A", modalities == "B"
        if not a.any() or not b.any():
            raise ValueError("training data must contain both modalities")
        n_halves = X.shape[1]
        self.n_halves_ = n_halves
        self.n_points_ = X.shape[2]
        self.banks_ = []
        if cfg.use_rbm:
            pairs = within_subject_pairs(subjects[a], subjects[b])
            if len(pairs) == 0:
                raise ValueError("no subject has samples in both modalities")
            if cfg.bank.per_half_banks:
                self.banks_ = [self._make_bank().fit(X[a, h], X[b, h], pairs)
                               for h in range(n_halves)]
            else:
                # one bank shared by both halves: halves become extra samples
                na, nb = int(a.sum()), int(b.sum())
                ja = X[a].transpose(1, 0, 2, 3).reshape(-1, *X.shape[2:])
                jb = X[b].transpose(1, 0, 2, 3).reshape(-1, *X.shape[2:])
                all_pairs = np.vstack([pairs + [h * na, h * nb] for h in range(n_halves)])
                self.banks_ = [self._make_bank().fit(ja, jb, all_pairs)]
        self.train_reps_ = [self._represent(X[:, h], modalities, h) for h in range(n_halves)]
        self.refit_heads(cfg.removed_k)
        return self

    def _bank_for_half(self, h):
        return self.banks_[h] if len(self.banks_) > 1 else self.banks_[0]

    def _represent(self, jets, modalities, half):
        """Per-half holistic vectors before the head."""
        modalities = np.asarray(modalities)
        if not self.config_.use_rbm:
            return jets.reshape(len(jets), -1)
        bank = self._bank_for_half(half)
        out = None
        for mod in ("A", "B"):
            rows = modalities == mod
            if rows.any():
                rep = bank.transform(jets[rows], mod)
                if out is None:
                    out = np.empty((len(jets), rep.shape[1]))
                out[rows] = rep
        return out

    def refit_heads(self, removed_k: int):
        """Refit the per-half PCA heads on cached training representations."""
        check_is_fitted(self, "train_reps_")
        cfg = self.config_
        self.heads_ = [ProjectionHead(removed_k, cfg.head.energy_cutoff).fit(r)
                       for r in self.train_reps_]
        self.removed_k_ = removed_k
        return self

    @classmethod
    def from_parts(cls, config, banks, heads, n_points):
        """Rebuild a fitted matcher from archived banks and heads."""
        m = cls(config)
        m.banks_ = list(banks)
        m.heads_ = list(heads)
        m.n_halves_ = len(heads)
        m.n_points_ = n_points
        m.removed_k_ = heads[0].removed_k if heads else config.removed_k
        return m

    def transform(self, features, modality):
        """Projected per-half vectors: list with one (n_samples, dim) array per half.

        ``modality`` is one label for every row or an array of per-row labels.
        """
        check_is_fitted(self, "heads_")
        X = np.asarray(features, dtype=np.float64)
        if X.ndim != 4 or X.shape[1] != self.n_halves_:
            raise ValueError(f"features shaped {X.shape}, matcher expects "
                             f"(samples, {self.n_halves_}, points, dim)")
        mods = np.broadcast_to(np.asarray(modality), (len(X),))
        return [self.heads_[h].transform(self._represent(X[:, h], mods, h))
                for h in range(self.n_halves_)]

    def score(self, probe_features, gallery_features, probe_modality="A",
              gallery_modality="B"):
        cfg = self.config_
        p = self.transform(probe_features, probe_modality)
        g = self.transform(gallery_features, gallery_modality)
        per_half = [cosine_matrix(p[h], g[h]) for h in range(self.n_halves_)]
        if cfg.fuse_halves:
            scores = np.sum(per_half, axis=0)
        else:
            scores = per_half[0]
        if cfg.zscore:
            scores = zscore_normalize(scores)
        return scores
