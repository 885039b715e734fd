"""The shipped synthetic cross-modal benchmark and its pipeline settings.

The benchmark mimics the structure the matcher is designed for: identity
lives in a shared latent, each modality sees it through different
(partially correlated) per-point maps, and a strong low-rank nuisance plus
a constant modality offset dominate the raw jets.
"""

from __future__ import annotations

from .evaluation import SplitPlan
from .pipeline import PipelineConfig
from .synthetic import SyntheticSpec

BENCHMARK_SEED = 7


def benchmark_spec(seed: int = BENCHMARK_SEED) -> SyntheticSpec:
    return SyntheticSpec(
        n_subjects=50,
        samples_per_subject_per_modality=3,
        latent_dim=48,
        local_dim=4,
        nonlinearity_strength=0.5,
        noise_sigma=0.5,
        identity_jitter=0.5,
        nuisance_dim=6,
        nuisance_scale=4.0,
        modality_offset=1.0,
        map_correlation=0.5,
        n_points=16,
        n_halves=1,
        jet_dim=40,
        seed=seed,
    )


def benchmark_config(**overrides) -> PipelineConfig:
    """Pipeline settings for the benchmark; 5000 updates instead of 50000 keeps it desk-sized."""
    cfg = PipelineConfig.from_dict({
        "seed": 0,
        "bank": {"regime": "local", "n_hidden": 80, "global_hidden": 320},
        "train": {"learning_rate": 0.001, "batch_size": 10, "n_updates": 5000},
    })
    return cfg.updated(**overrides) if overrides else cfg


def benchmark_plan(n_repeats: int = 1, seed: int = 0) -> SplitPlan:
    return SplitPlan(n_repeats=n_repeats, train_fraction=0.5, seed=seed)
