"""Identification and verification metrics, and the repeated-split protocol."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

DEFAULT_FAR = 1e-3
ROC_GRID = np.concatenate([[0.0], np.logspace(-4, 0, 41)])


class ProtocolError(ValueError):
    pass


def _labels(x):
    return np.asarray(x)


def _check_scores(scores, probe_labels, gallery_labels):
    scores = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    pl, gl = _labels(probe_labels), _labels(gallery_labels)
    if scores.shape != (len(pl), len(gl)):
        raise ValueError(f"score matrix {scores.shape} does not match "
                         f"{len(pl)} probes x {len(gl)} gallery entries")
    missing = set(pl.tolist()) - set(gl.tolist())
    if missing:
        raise ProtocolError(f"probe subjects absent from gallery: {sorted(missing)[:5]}")
    return scores, pl, gl


def match_ranks(scores, probe_labels, gallery_labels) -> np.ndarray:
    """1-based rank of the first correct gallery entry for every probe.

    Gallery entries are ordered by descending score; equal scores keep
    gallery order, so the lowest index wins a tie.
    """
    scores, pl, gl = _check_scores(scores, probe_labels, gallery_labels)
    order = np.argsort(-scores, axis=1, kind="stable")
    hits = gl[order] == pl[:, None]
    return np.argmax(hits, axis=1) + 1


def rank1(scores, probe_labels, gallery_labels) -> float:
    """Fraction of probes whose top-scoring gallery entry has the right subject."""
    return float(np.mean(match_ranks(scores, probe_labels, gallery_labels) == 1))


def cmc_curve(scores, probe_labels, gallery_labels) -> np.ndarray:
    """Hit rate at ranks 1..gallery_size."""
    ranks = match_ranks(scores, probe_labels, gallery_labels)
    n_gallery = np.atleast_2d(scores).shape[1]
    return np.array([np.mean(ranks <= r) for r in range(1, n_gallery + 1)])


def split_scores(scores, probe_labels, gallery_labels):
    """Genuine and impostor scores over all probe-gallery pairs."""
    scores = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    same = _labels(probe_labels)[:, None] == _labels(gallery_labels)[None, :]
    return scores[same], scores[~same]


def vr_at_far(genuine, impostor, far_target: float = DEFAULT_FAR) -> float:
    """Verification rate at the smallest threshold meeting the FAR target.

    A pair is accepted when its score is >= the threshold. Candidate
    thresholds are the observed scores plus one just above the highest
    impostor, which always satisfies any target >= 0.
    """
    gen = np.sort(np.asarray(genuine, dtype=np.float64))
    imp = np.sort(np.asarray(impostor, dtype=np.float64))
    if gen.size == 0 or imp.size == 0:
        raise ValueError("vr_at_far needs genuine and impostor scores")
    cands = np.unique(np.concatenate([gen, imp, [np.nextafter(imp[-1], np.inf)]]))
    far = (imp.size - np.searchsorted(imp, cands, side="left")) / imp.size
    ok = far <= far_target
    threshold = cands[np.argmax(ok)]
    return float((gen.size - np.searchsorted(gen, threshold, side="left")) / gen.size)


def roc_curve(genuine, impostor):
    """Exact (far, vr) staircase over every distinct threshold, from (0, 0) to (1, 1)."""
    gen = np.sort(np.asarray(genuine, dtype=np.float64))
    imp = np.sort(np.asarray(impostor, dtype=np.float64))
    thr = np.unique(np.concatenate([gen, imp]))[::-1]
    far = (imp.size - np.searchsorted(imp, thr, side="left")) / imp.size
    vr = (gen.size - np.searchsorted(gen, thr, side="left")) / gen.size
    return np.concatenate([[0.0], far]), np.concatenate([[0.0], vr])


def d_prime(genuine, impostor) -> float:
    gen = np.asarray(genuine, dtype=np.float64)
    imp = np.asarray(impostor, dtype=np.float64)
    return float((gen.mean() - imp.mean()) / np.sqrt(0.5 * (gen.var() + imp.var())))


@dataclass
class SplitMetrics:
    rank1: float
    vr_at_far: float
    roc: np.ndarray   # VR sampled at ROC_GRID
    cmc: np.ndarray
    d_prime: float


def score_metrics(scores, probe_labels, gallery_labels, far=DEFAULT_FAR) -> SplitMetrics:
    gen, imp = split_scores(scores, probe_labels, gallery_labels)
    return SplitMetrics(
        rank1=rank1(scores, probe_labels, gallery_labels),
        vr_at_far=vr_at_far(gen, imp, far),
        roc=np.array([vr_at_far(gen, imp, f) for f in ROC_GRID]),
        cmc=cmc_curve(scores, probe_labels, gallery_labels),
        d_prime=d_prime(gen, imp),
    )


# ---------------------------------------------------------------------------
# split protocol


@dataclass
class SplitPlan:
    """Repeated random subject splits.

    Subjects, never samples, are assigned to train or test. The split at
    ``dev_split_index`` (if any) is reserved for tuning and left out of the
    reported mean and standard deviation.
    """

    n_repeats: int = 10
    train_fraction: float = 0.5
    seed: int = 0
    dev_split_index: Optional[int] = None
    train_subjects: Optional[list] = None  # explicit per-split lists override the fraction

    def __post_init__(self):
        if self.n_repeats < 1:
            raise ValueError("n_repeats must be >= 1")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")
        if self.dev_split_index is not None and not 0 <= self.dev_split_index < self.n_repeats:
            raise ValueError("dev_split_index out of range")
        if self.dev_split_index is not None and self.n_repeats == 1:
            raise ValueError("a single split cannot also be the dev split")

    def splits(self, subjects) -> list[tuple[list, list]]:
        subjects = sorted(set(subjects))
        if self.train_subjects is not None:
            out = []
            for tr in self.train_subjects:
                tr = sorted(set(tr))
                out.append((tr, [s for s in subjects if s not in set(tr)]))
            return out
        n_train = int(round(self.train_fraction * len(subjects)))
        if not 0 < n_train < len(subjects):
            raise ProtocolError(f"cannot split {len(subjects)} subjects with "
                                f"train_fraction={self.train_fraction}")
        rng = np.random.default_rng(self.seed)
        out = []
        for _ in range(self.n_repeats):
            perm = rng.permutation(len(subjects))
            tr = sorted(subjects[i] for i in perm[:n_train])
            te = sorted(subjects[i] for i in perm[n_train:])
            out.append((tr, te))
        return out

    def report_indices(self):
        return [i for i in range(self.n_repeats) if i != self.dev_split_index]


def mean_std(values):
    """Mean and sample (n-1) standard deviation; std is 0 for one value."""
    v = np.asarray(values, dtype=np.float64)
    return float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0


@dataclass
class EvalReport:
    rank1_mean: float
    rank1_std: float
    vr_at_far_mean: float
    vr_at_far_std: float
    far: float
    roc: list            # (far, mean vr)
    cmc: list            # (rank, mean hit rate)
    per_split: list = field(default_factory=list)       # SplitMetrics on test subjects
    per_split_train: list = field(default_factory=list)  # SplitMetrics on train subjects

    @classmethod
    def from_splits(cls, test: list, far: float, train: Optional[list] = None):
        r_mean, r_std = mean_std([m.rank1 for m in test])
        v_mean, v_std = mean_std([m.vr_at_far for m in test])
        roc = np.mean([m.roc for m in test], axis=0)
        n_rank = min(len(m.cmc) for m in test)
        cmc = np.mean([m.cmc[:n_rank] for m in test], axis=0)
        return cls(r_mean, r_std, v_mean, v_std, far,
                   [(float(f), float(v)) for f, v in zip(ROC_GRID, roc)],
                   [(r + 1, float(c)) for r, c in enumerate(cmc)],
                   list(test), list(train or []))

    def summary_rows(self):
        return [("rank1_mean", self.rank1_mean), ("rank1_std", self.rank1_std),
                ("vr_at_far_mean", self.vr_at_far_mean), ("vr_at_far_std", self.vr_at_far_std),
                ("far", self.far), ("n_splits", len(self.per_split))]

    def format_text(self) -> str:
        lines = [f"Rank-1      {100 * self.rank1_mean:6.2f} +- {100 * self.rank1_std:.2f} %",
                 f"VR@FAR={100 * self.far:g}% {100 * self.vr_at_far_mean:6.2f} +- "
                 f"{100 * self.vr_at_far_std:.2f} %",
                 f"splits      {len(self.per_split)}"]
        if self.per_split_train:
            tr = mean_std([m.vr_at_far for m in self.per_split_train])[0]
            lines.append(f"train VR    {100 * tr:6.2f} %")
        return "\n".join(lines) + "\n"


def run_protocol(config, features, subjects, modalities, plan: SplitPlan,
                 probe_modality="A", evaluate_train=False, removed_ks=None):
    """Fit on each split's train subjects and score its test subjects.

    ``features`` is ``(n_samples, n_halves, n_points, jet_dim)``; probes are
    samples of ``probe_modality``, the gallery the other modality. With
    ``removed_ks`` the bank is fitted once per split and the head refitted
    for each value, returning ``{k: EvalReport}`` instead of one report.
    """
    from .pipeline import HeterogeneousMatcher

    features = np.asarray(features, dtype=np.float64)
    subjects = np.asarray(subjects)
    modalities = np.asarray(modalities)
    gallery_modality = "B" if probe_modality == "A" else "A"
    ks = [None] if removed_ks is None else list(removed_ks)
    test_metrics = {k: [] for k in ks}
    train_metrics = {k: [] for k in ks}
    splits = plan.splits(subjects.tolist())
    for idx in plan.report_indices():
        tr_subj, te_subj = splits[idx]
        tr = np.isin(subjects, tr_subj)
        te = np.isin(subjects, te_subj)
        for name, mask in (("test", te), ("train", tr)):
            have_p = set(subjects[mask & (modalities == probe_modality)])
            have_g = set(subjects[mask & (modalities == gallery_modality)])
            if not have_p <= have_g:
                raise ProtocolError(f"split {idx}: {name} subjects without a gallery sample: "
                                    f"{sorted(have_p - have_g)[:5]}")
        matcher = HeterogeneousMatcher(config).fit(features[tr], subjects[tr], modalities[tr])
        for k in ks:
            if k is not None:
                matcher.refit_heads(k)
            for mask, bucket in ((te, test_metrics), (tr, train_metrics)):
                if bucket is train_metrics and not evaluate_train:
                    continue
                p = mask & (modalities == probe_modality)
                g = mask & (modalities == gallery_modality)
                s = matcher.score(features[p], features[g], probe_modality, gallery_modality)
                bucket[k].append(score_metrics(s, subjects[p], subjects[g], config.far))
    reports = {k: EvalReport.from_splits(test_metrics[k], config.far,
                                         train_metrics[k] if evaluate_train else None)
               for k in ks}
    return reports if removed_ks is not None else reports[None]
