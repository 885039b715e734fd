import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xmodal.features import (
    N_POINTS,
    POINTS_PER_HALF,
    TEMPLATE_AXIS,
    GaborBankSpec,
    PointOutsideImageError,
    WarpError,
    extract_face,
    extract_jet,
    extract_jets,
    fit_warp,
    format_template,
    generate_template,
    load_template,
    mirror_x,
    parse_template,
    standard_landmarks,
    warp_points,
)
from xmodal.manifest import LandmarkSet

BANK = GaborBankSpec()


def perturbed(seed, scale=3.0):
    std = standard_landmarks()
    pts = std.points + np.random.default_rng(seed).uniform(-scale, scale, std.points.shape)
    return LandmarkSet(pts, std.eye_left, std.eye_right)


# --- template ---------------------------------------------------------------


def test_template_shape_and_symmetry():
    t = load_template()
    assert t.points.shape == (N_POINTS, 2)
    left, right = t.halves
    assert np.max(np.abs(mirror_x(left) - right)) < 1e-9
    assert sorted(t.symmetry_map.tolist()) == list(range(POINTS_PER_HALF, N_POINTS))
    assert np.max(np.abs(mirror_x(t.landmarks.points[:24]) - t.landmarks.points[24:])) < 1e-9


def test_shipped_template_matches_generator():
    shipped, fresh = load_template(), generate_template()
    assert np.array_equal(shipped.points, fresh.points)
    assert np.array_equal(shipped.landmarks.points, fresh.landmarks.points)
    assert parse_template(format_template(fresh)).points.tolist() == fresh.points.tolist()


def test_template_points_distinct_and_on_their_side():
    t = load_template()
    assert len({tuple(p) for p in t.points.tolist()}) == N_POINTS
    left, right = t.halves
    assert np.all(left[:, 0] < TEMPLATE_AXIS) and np.all(right[:, 0] > TEMPLATE_AXIS)


# --- warp -------------------------------------------------------------------


def test_identity_warp():
    t = load_template()
    w = fit_warp(t.landmarks, t.landmarks)
    assert np.max(np.abs(warp_points(w, t) - t.points)) < 1e-9


def test_kernel_width_is_tenth_of_eye_distance():
    std = standard_landmarks()
    w = fit_warp(std, perturbed(0))
    assert w.kernel_width == pytest.approx(0.1 * std.eye_distance)
    w2 = fit_warp(std, perturbed(0), eye_distance=40.0)
    assert w2.kernel_width == pytest.approx(4.0)


def test_translation_warp():
    t = load_template()
    dst = LandmarkSet(t.landmarks.points + [5.0, -3.0], t.landmarks.eye_left,
                      t.landmarks.eye_right)
    w = fit_warp(t.landmarks, dst)
    assert np.max(np.abs(warp_points(w, t) - (t.points + [5.0, -3.0]))) < 1e-9


def test_scaling_warp():
    t = load_template()
    dst = LandmarkSet(2.0 * t.landmarks.points, t.landmarks.eye_left, t.landmarks.eye_right)
    w = fit_warp(t.landmarks, dst)
    assert np.max(np.abs(warp_points(w, t) - 2.0 * t.points)) < 1e-9


@settings(max_examples=25)
@given(st.integers(0, 10_000))
def test_warp_interpolates_control_points(seed):
    std = standard_landmarks()
    dst = perturbed(seed, scale=5.0)
    w = fit_warp(std, dst)
    assert np.max(np.abs(w(std.points) - dst.points)) < 1e-9


def test_degenerate_warp_rejected():
    std = standard_landmarks()
    dup = std.points.copy()
    dup[1] = dup[0]
    with pytest.raises(WarpError):
        fit_warp(LandmarkSet(dup, std.eye_left, std.eye_right), std)
    with pytest.raises(WarpError):
        fit_warp(std.points, std.points)  # no eye distance for raw arrays
    with pytest.raises(WarpError):
        fit_warp(std, std, eye_distance=0.0)


# --- Gabor bank -------------------------------------------------------------


def test_bank_parameters():
    assert BANK.n_kernels == 40
    assert np.allclose(BANK.frequencies, (np.pi / 2) * 2.0 ** (-np.arange(5) / 2))
    assert np.allclose(BANK.orientations, np.arange(8) * np.pi / 8)
    assert BANK.kernels().shape == (40, 2 * BANK.radius + 1, 2 * BANK.radius + 1)


def test_kernels_dc_free_and_unit_energy():
    K = BANK.kernels()
    assert np.max(np.abs(K.sum(axis=(1, 2)))) < 1e-10
    assert np.max(np.abs(np.sum(np.abs(K) ** 2, axis=(1, 2)) - 1.0)) < 1e-10


def test_constant_image_gives_zero_jet():
    img = np.full((128, 128), 173.0)
    assert np.max(extract_jet(img, (64, 64))) < 1e-8


def grating(scale, orientation, shape=(128, 128)):
    k = BANK.frequencies[scale]
    th = BANK.orientations[orientation]
    y, x = np.mgrid[0:shape[0], 0:shape[1]].astype(float)
    return np.cos(k * (x * np.cos(th) + y * np.sin(th)))


@pytest.mark.parametrize("scale", range(5))
@pytest.mark.parametrize("orientation", range(8))
def test_grating_argmax(scale, orientation):
    jet = extract_jet(grating(scale, orientation), (64, 64))
    assert int(np.argmax(jet)) == scale * 8 + orientation


def test_mirror_symmetry_of_jets():
    rng = np.random.default_rng(0)
    img = rng.uniform(0, 255, (120, 130))
    mirrored = img[:, ::-1]
    x, y = 40, 60
    a = extract_jet(img, (x, y))
    b = extract_jet(mirrored, (img.shape[1] - 1 - x, y))
    assert np.max(np.abs(a - b[BANK.mirror_permutation()])) < 1e-6


def test_translation_covariance():
    rng = np.random.default_rng(1)
    img = rng.uniform(0, 255, (200, 200))
    shifted = np.zeros_like(img)
    shifted[7:, 5:] = img[:-7, :-5]
    a = extract_jet(img, (90, 100))
    b = extract_jet(shifted, (95, 107))
    assert np.max(np.abs(a - b)) < 1e-10


def test_jets_nonnegative_and_errors():
    img = np.random.default_rng(2).uniform(0, 1, (50, 50))
    jets = extract_jets(img, [[0, 0], [49, 49], [25.4, 10.6]])
    assert jets.shape == (3, 40) and np.all(jets >= 0)
    with pytest.raises(PointOutsideImageError):
        extract_jet(img, (50, 10))
    with pytest.raises(PointOutsideImageError):
        extract_jet(img, (-1, 10))
    with pytest.raises(ValueError):
        extract_jets(np.zeros((3, 3, 3)), [[1, 1]])


def test_extract_face_shape():
    from xmodal.synthetic import IMAGE_OFFSET_XY
    t = load_template()
    img = np.random.default_rng(3).uniform(0, 255, (144, 128))
    std = t.landmarks
    lms = LandmarkSet(std.points + IMAGE_OFFSET_XY, std.eye_left, std.eye_right)
    jets = extract_face(img, lms, t)
    assert jets.shape == (2, POINTS_PER_HALF, 40)
    assert jets.reshape(2, -1).shape[1] == 7040
