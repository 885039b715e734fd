"""Synthetic cross-modal jets with a known shared latent identity.

Every subject draws one latent vector ``z``. At each point, modality A emits
``P_A z + alpha * tanh(Q_A z)`` plus a per-sample nuisance term, a fixed
modality offset and isotropic noise; modality B does the same with its own
maps. ``map_correlation`` controls how much of the linear map the two
modalities share: 1 makes them identical, 0 makes them independent.
The maps are redrawn per point, so the cross-modal relationship changes
with location.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .manifest import DatasetManifest, ManifestEntry

SPEC_VERSION = 1


@dataclass(frozen=True)
class SyntheticSpec:
    n_subjects: int = 50
    samples_per_subject_per_modality: int = 2
    latent_dim: int = 8
    nonlinearity_strength: float = 0.5
    noise_sigma: float = 0.3
    seed: int = 0
    n_points: int = 16
    n_halves: int = 1
    jet_dim: int = 40
    map_correlation: float = 0.5
    nuisance_dim: int = 3
    nuisance_scale: float = 0.0
    modality_offset: float = 0.0
    local_dim: int = 0  # 0: every point sees the full latent vector
    identity_jitter: float = 0.0  # per-sample perturbation of the subject latent

    def __post_init__(self):
        counts = ("n_subjects", "samples_per_subject_per_modality", "n_points",
                  "n_halves", "jet_dim")
        for name in counts:
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.latent_dim < 2:
            raise ValueError("latent_dim must be >= 2")
        if self.n_halves not in (1, 2):
            raise ValueError("n_halves must be 1 or 2")
        for name in ("nonlinearity_strength", "noise_sigma", "nuisance_scale",
                     "modality_offset", "identity_jitter"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0.0 <= self.map_correlation <= 1.0:
            raise ValueError("map_correlation must lie in [0, 1]")
        if not 0 <= self.local_dim <= self.latent_dim:
            raise ValueError("local_dim must lie in [0, latent_dim]")
        if self.nuisance_dim < 0:
            raise ValueError("nuisance_dim must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SyntheticMaps:
    linear: np.ndarray       # (2, n_points, jet_dim, latent_dim)
    nonlinear: np.ndarray    # (2, n_points, jet_dim, latent_dim)
    nuisance: np.ndarray     # (2, n_points, jet_dim, nuisance_dim)
    offset: np.ndarray       # (2, n_points, jet_dim)


@dataclass
class SyntheticData:
    manifest: DatasetManifest
    features: np.ndarray     # (n_samples, n_halves, n_points, jet_dim)
    latents: np.ndarray      # (n_subjects, latent_dim)
    maps: SyntheticMaps

    @property
    def subjects(self) -> np.ndarray:
        return np.array([e.subject_id for e in self.manifest.entries])

    @property
    def modalities(self) -> np.ndarray:
        return np.array([e.modality for e in self.manifest.entries])


def _draw_maps(spec: SyntheticSpec, rng: np.random.Generator) -> SyntheticMaps:
    P, L, D = spec.n_points, spec.latent_dim, spec.jet_dim
    r = spec.local_dim or L
    if r < L:
        # each point reads an r-dimensional random slice of the latent space
        select = np.stack([np.linalg.qr(rng.standard_normal((L, r)))[0].T for _ in range(P)])
    else:
        select = np.broadcast_to(np.eye(L), (P, L, L))
    base = rng.standard_normal((P, D, r)) / np.sqrt(r)
    other = rng.standard_normal((P, D, r)) / np.sqrt(r)
    rho = spec.map_correlation
    linear = np.stack([base, rho * base + np.sqrt(1.0 - rho * rho) * other]) @ select
    nonlinear = (rng.standard_normal((2, P, D, r)) * (2.0 / np.sqrt(r))) @ select
    nd = max(spec.nuisance_dim, 1)
    nuisance = rng.standard_normal((2, P, D, nd)) / np.sqrt(nd)
    if spec.nuisance_dim == 0:
        nuisance[:] = 0.0
    offset = rng.standard_normal((2, P, D)) * spec.modality_offset
    return SyntheticMaps(linear, nonlinear, nuisance, offset)


def emit(maps: SyntheticMaps, modality_index: int, z, nuis, noise, spec: SyntheticSpec):
    """Jets of one sample at all points: ``(n_points, jet_dim)``."""
    lin = np.einsum("pdl,l->pd", maps.linear[modality_index], z)
    nl = np.tanh(np.einsum("pdl,l->pd", maps.nonlinear[modality_index], z))
    out = lin + spec.nonlinearity_strength * nl + maps.offset[modality_index]
    if spec.nuisance_dim > 0 and spec.nuisance_scale > 0:
        out = out + spec.nuisance_scale * np.einsum(
            "pdk,k->pd", maps.nuisance[modality_index], nuis)
    return out + spec.noise_sigma * noise


def generate_synthetic(spec: SyntheticSpec) -> SyntheticData:
    """Deterministic synthetic dataset; a pure function of ``spec``."""
    map_ss, latent_ss, sample_ss = np.random.SeedSequence(spec.seed).spawn(3)
    maps = _draw_maps(spec, np.random.default_rng(map_ss))
    latents = np.random.default_rng(latent_ss).standard_normal(
        (spec.n_subjects, spec.latent_dim))
    rng = np.random.default_rng(sample_ss)
    entries, feats = [], []
    nd = max(spec.nuisance_dim, 1)
    for s in range(spec.n_subjects):
        subject = f"s{s:04d}"
        for mi, modality in enumerate("AB"):
            for k in range(spec.samples_per_subject_per_modality):
                sid = f"{subject}_{modality}{k}"
                nuis = rng.standard_normal(nd)
                z = latents[s] + spec.identity_jitter * rng.standard_normal(spec.latent_dim)
                halves = []
                for _ in range(spec.n_halves):
                    noise = rng.standard_normal((spec.n_points, spec.jet_dim))
                    halves.append(emit(maps, mi, z, nuis, noise, spec))
                feats.append(np.stack(halves))
                entries.append(ManifestEntry(sid, subject, modality,
                                             f"synthetic/{sid}.pgm",
                                             f"synthetic/{sid}.lm"))
    return SyntheticData(DatasetManifest(entries), np.stack(feats), latents, maps)


# ---------------------------------------------------------------------------
# rendered images, for exercising the image -> jet path


IMAGE_SHAPE = (144, 128)  # rows, columns
IMAGE_OFFSET_XY = (14.0, 12.0)  # template (0, 0) lands at this (x, y)


def render_synthetic_images(spec: SyntheticSpec, directory, landmark_jitter: float = 1.0):
    """Write one PGM image and landmark file per sample and return the manifest.

    Each subject owns a smooth random texture; modality B sees it through an
    inverted, gamma-distorted intensity map. Landmarks are the template
    landmarks shifted into the image frame plus a small per-sample jitter.
    """
    from pathlib import Path

    from .features import standard_landmarks
    from .manifest import LandmarkSet, format_landmarks
    from .store import write_pgm

    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    tex_ss, sample_ss = np.random.SeedSequence(spec.seed).spawn(2)
    tex_rng = np.random.default_rng(tex_ss)
    rng = np.random.default_rng(sample_ss)
    rows, cols = IMAGE_SHAPE
    yy, xx = np.mgrid[0:rows, 0:cols].astype(np.float64)
    std = standard_landmarks()
    entries = []
    for s in range(spec.n_subjects):
        subject = f"s{s:04d}"
        freqs = tex_rng.uniform(0.05, 0.6, size=(6, 2)) * tex_rng.choice([-1, 1], size=(6, 2))
        phases = tex_rng.uniform(0, 2 * np.pi, size=6)
        tex = sum(np.cos(f[0] * xx + f[1] * yy + ph) for f, ph in zip(freqs, phases)) / 6.0
        for modality in "AB":
            for k in range(spec.samples_per_subject_per_modality):
                sid = f"{subject}_{modality}{k}"
                img = 0.5 + 0.4 * tex + spec.noise_sigma * 0.05 * rng.standard_normal(tex.shape)
                img = np.clip(img, 0.0, 1.0)
                if modality == "B":
                    img = (1.0 - img) ** 1.5
                img_path = out / f"{sid}.pgm"
                lm_path = out / f"{sid}.lm"
                write_pgm(img_path, 255.0 * img)
                pts = std.points + np.array(IMAGE_OFFSET_XY) \
                    + landmark_jitter * rng.uniform(-1, 1, size=std.points.shape)
                lm_path.write_text(format_landmarks(LandmarkSet(pts, std.eye_left,
                                                                std.eye_right)))
                entries.append(ManifestEntry(sid, subject, modality, img_path.name,
                                             lm_path.name))
    return DatasetManifest(entries)


# ---------------------------------------------------------------------------
# planted-offset data, for removed-component sweeps


def planted_offset_data(offset_dim: int, seed: int = 0, n_subjects: int = 60, dim: int = 40,
                        identity_dim: int = 6, samples_per_modality: int = 2,
                        offset_scale: float = 6.0, identity_noise: float = 0.6,
                        background: float = 0.3):
    """Vectors whose leading ``offset_dim`` principal directions carry only modality offset.

    Identity occupies ``identity_dim`` further orthogonal directions with
    smaller variance. Returns ``(features, subjects, modalities)`` with
    features shaped ``(n, 1, 1, dim)`` so they feed the matcher directly.
    """
    if offset_dim + identity_dim > dim:
        raise ValueError("offset_dim + identity_dim exceeds dim")
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    U_off = Q[:, :offset_dim]
    U_id = Q[:, offset_dim:offset_dim + identity_dim]
    U_bg = Q[:, offset_dim + identity_dim:]
    z = rng.standard_normal((n_subjects, identity_dim)) * np.linspace(1.5, 1.0, identity_dim)
    X, S, M = [], [], []
    for s in range(n_subjects):
        for modality, sign in (("A", 1.0), ("B", -1.0)):
            for _ in range(samples_per_modality):
                off = offset_scale * (rng.standard_normal(offset_dim) + sign)
                ident = z[s] + identity_noise * rng.standard_normal(identity_dim)
                bg = background * rng.standard_normal(U_bg.shape[1])
                X.append(U_id @ ident + U_off @ off + U_bg @ bg)
                S.append(f"s{s:04d}")
                M.append(modality)
    return np.array(X)[:, None, None, :], np.array(S), np.array(M)
