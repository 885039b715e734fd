import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xmodal.head import cosine_matrix
from xmodal.synthetic import (
    SyntheticSpec,
    generate_synthetic,
    planted_offset_data,
    render_synthetic_images,
)
from xmodal.whitening import GaussianNormalizer


def noiseless_linear(**kw):
    base = dict(n_subjects=12, samples_per_subject_per_modality=1, latent_dim=4,
                nonlinearity_strength=0.0, noise_sigma=0.0, n_points=3, jet_dim=10, seed=5)
    base.update(kw)
    return SyntheticSpec(**base)


def test_noiseless_linear_features_are_images_of_latents():
    data = generate_synthetic(noiseless_linear())
    flat = data.features.reshape(len(data.features), -1)
    lin = data.maps.linear  # (2, P, D, L)
    for mi, mod in enumerate("AB"):
        M = lin[mi].reshape(-1, lin.shape[-1])
        rows = data.modalities == mod
        z, *_ = np.linalg.lstsq(M, flat[rows].T, rcond=None)
        assert np.allclose(z.T, data.latents, atol=1e-10)
        assert np.allclose(M @ z, flat[rows].T, atol=1e-10)


def test_determinism_and_counts():
    spec = SyntheticSpec(n_subjects=50, samples_per_subject_per_modality=2)
    d1, d2 = generate_synthetic(spec), generate_synthetic(spec)
    assert len(d1.manifest) == 200
    assert np.array_equal(d1.features, d2.features)
    assert d1.manifest == d2.manifest
    assert d1.features.shape == (200, 1, 16, 40)


def test_seed_changes_output():
    a = generate_synthetic(SyntheticSpec(n_subjects=3, seed=0)).features
    b = generate_synthetic(SyntheticSpec(n_subjects=3, seed=1)).features
    assert not np.array_equal(a, b)


@settings(max_examples=10)
@given(st.integers(0, 10_000))
def test_noiseless_linear_genuine_beats_impostor_after_whitening(seed):
    # identical maps in both modalities; each modality whitened on its own
    spec = noiseless_linear(map_correlation=1.0, n_subjects=15, seed=seed, jet_dim=6,
                            n_points=2, latent_dim=3)
    data = generate_synthetic(spec)
    flat = data.features.reshape(len(data.features), -1)
    a, b = data.modalities == "A", data.modalities == "B"
    wa = GaussianNormalizer().fit_transform(flat[a])
    wb = GaussianNormalizer().fit_transform(flat[b])
    S = cosine_matrix(wa, wb)
    genuine = np.diag(S)
    off = ~np.eye(len(S), dtype=bool)
    for i in range(len(S)):
        assert np.all(genuine[i] > S[i][off[i]])


def test_spec_validation():
    with pytest.raises(ValueError):
        SyntheticSpec(n_subjects=0)
    with pytest.raises(ValueError):
        SyntheticSpec(latent_dim=1)
    with pytest.raises(ValueError):
        SyntheticSpec(noise_sigma=-1)
    with pytest.raises(ValueError):
        SyntheticSpec(map_correlation=1.5)
    with pytest.raises(ValueError):
        SyntheticSpec(n_halves=3)


def test_two_halves_and_ids():
    data = generate_synthetic(SyntheticSpec(n_subjects=2, n_halves=2, n_points=4))
    assert data.features.shape == (8, 2, 4, 40)
    assert data.manifest.sample_ids[:3] == ["s0000_A0", "s0000_A1", "s0000_B0"]
    assert data.subjects.tolist().count("s0001") == 4


def test_planted_offset_shapes():
    X, S, M = planted_offset_data(3, seed=0, n_subjects=5)
    assert X.shape == (20, 1, 1, 40)
    assert set(M) == {"A", "B"} and len(set(S)) == 5
    with pytest.raises(ValueError):
        planted_offset_data(38, identity_dim=6)


def test_render_images(tmp_path):
    from xmodal.manifest import parse_landmarks
    from xmodal.store import read_pgm
    m = render_synthetic_images(SyntheticSpec(n_subjects=2, samples_per_subject_per_modality=1),
                                tmp_path)
    assert len(m) == 4
    img = read_pgm(tmp_path / m.entries[0].image_path)
    assert img.shape == (144, 128)
    lms = parse_landmarks((tmp_path / m.entries[0].landmark_path).read_text())
    assert lms.points.shape == (48, 2)
    first = (tmp_path / m.entries[0].image_path).read_bytes()
    render_synthetic_images(SyntheticSpec(n_subjects=2, samples_per_subject_per_modality=1),
                            tmp_path)
    assert (tmp_path / m.entries[0].image_path).read_bytes() == first
