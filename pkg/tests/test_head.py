import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial.distance import pdist

from xmodal.head import (
    MatchScore,
    ProjectionHead,
    RankError,
    ZeroVectorError,
    cosine,
    cosine_matrix,
    fit_head,
    fuse_halves,
    pca_basis,
    project,
    zscore_normalize,
)


def test_removed_zero_preserves_distances():
    X = np.random.default_rng(0).normal(size=(30, 5))
    head = fit_head(X, 0)
    assert np.allclose(pdist(head.transform(X)), pdist(X), atol=1e-8)


def test_removed_zero_preserves_distances_dual_route():
    X = np.random.default_rng(1).normal(size=(6, 50))  # n < d uses the Gram matrix
    head = fit_head(X, 0)
    assert head.components_.shape == (50, 5)
    assert np.allclose(pdist(head.transform(X)), pdist(X), atol=1e-8)


def test_isotropic_removed_one_orthogonality():
    X = np.random.default_rng(2).normal(size=(500, 3))
    head = fit_head(X, 1)
    kept, removed = head.kept_basis, head.removed_basis
    assert kept.shape == (3, 2)
    assert np.max(np.abs(kept.T @ removed)) < 1e-8
    assert np.max(np.abs(kept.T @ kept - np.eye(2))) < 1e-8


def test_dominant_direction_removed():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(2000, 3)) * [10.0, 1.0, 1.0]
    head = fit_head(X, 1)
    Z = head.inverse_transform(head.transform(X)) - head.mean_
    along = (Z @ head.removed_basis[:, 0]).var()
    assert along < 1e-8 * Z.var(axis=0).sum()


@given(st.integers(0, 10_000), st.integers(3, 12), st.integers(2, 8))
def test_basis_orthonormal_and_ordered(seed, n, d):
    X = np.random.default_rng(seed).normal(size=(n, d))
    mean, basis, evals = pca_basis(X)
    assert np.max(np.abs(basis.T @ basis - np.eye(basis.shape[1]))) < 1e-8
    assert np.all(np.diff(evals) <= 1e-12)
    assert basis.shape[1] == min(n - 1, d)


def test_gram_and_covariance_routes_agree():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(10, 6)) * np.arange(1, 7)
    _, b_cov, e_cov = pca_basis(X)
    _, b_gram, e_gram = pca_basis(X[:6])  # 6 rows, 6 cols -> Gram route
    _, b_cov6, e_cov6 = pca_basis(np.vstack([X[:6], X[:6]]))  # same spread, covariance route
    assert np.allclose(e_gram, e_cov6[:5], atol=1e-10)
    assert np.allclose(np.abs(b_gram.T @ b_cov6[:, :5]), np.eye(5), atol=1e-8)
    assert b_cov.shape == (6, 6)


def test_project_mean_is_zero_and_linear():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(40, 6))
    head = fit_head(X, 2)
    assert np.allclose(project(head, head.mean_), 0.0, atol=1e-12)
    x, y = rng.normal(size=6), rng.normal(size=6)
    lhs = project(head, 2.0 * x - 3.0 * y + head.mean_)
    rhs = 2.0 * project(head, x + head.mean_) - 3.0 * project(head, y + head.mean_)
    assert np.allclose(lhs, rhs, atol=1e-10)


def test_projection_round_trip_idempotent():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(40, 6))
    head = fit_head(X, 2)
    once = head.inverse_transform(head.transform(X))
    twice = head.inverse_transform(head.transform(once))
    assert np.allclose(once, twice, atol=1e-8)


def test_head_errors():
    X = np.random.default_rng(7).normal(size=(4, 10))
    with pytest.raises(RankError):
        fit_head(X, 3)  # rank 3
    with pytest.raises(ValueError):
        fit_head(X[:1], 0)
    head = fit_head(X, 1)
    with pytest.raises(ValueError):
        project(head, np.zeros(9))


def test_energy_cutoff_limits_rank():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(300, 4)) * [10.0, 5.0, 0.01, 0.01]
    head = ProjectionHead(removed_k=0, energy_cutoff=0.999).fit(X)
    assert head.components_.shape[1] == 2


def test_cosine_examples():
    x = np.array([0.3, -1.2, 2.0])
    assert cosine(x, x) == pytest.approx(1.0, abs=1e-15)
    assert cosine(x, -x) == pytest.approx(-1.0, abs=1e-15)
    assert cosine([1, 0], [0, 1]) == 0.0
    with pytest.raises(ZeroVectorError):
        cosine([0, 0], [1, 0])
    with pytest.raises(ZeroVectorError):
        cosine_matrix(np.zeros((1, 2)), np.ones((2, 2)))


@given(st.integers(0, 10_000), st.floats(0.01, 100))
def test_cosine_scale_invariance(seed, lam):
    rng = np.random.default_rng(seed)
    P, G = rng.normal(size=(4, 5)), rng.normal(size=(6, 5))
    S1 = cosine_matrix(P, G)
    S2 = cosine_matrix(lam * P, G)
    assert np.array_equal(np.argsort(-S1, axis=1, kind="stable"),
                          np.argsort(-S2, axis=1, kind="stable")) or np.allclose(S1, S2)
    assert np.all(np.abs(S1) <= 1.0)


def test_fuse_halves_examples():
    assert fuse_halves(MatchScore(0.5), MatchScore(0.25)) == 0.75
    assert fuse_halves(0.3, -0.1) == fuse_halves(-0.1, 0.3)
    assert fuse_halves(0.4, 0.4) == 2 * 0.4


def test_zscore_examples():
    out = zscore_normalize([[1.0, 2.0, 3.0]])
    assert np.allclose(out, [[-1.2247, 0.0, 1.2247]], atol=1e-4)
    rows = np.array([[0.1, 0.5, -0.2, 0.9], [1.1, 1.5, 0.8, 1.9]])
    z = zscore_normalize(rows)
    assert np.allclose(z[0], z[1], atol=1e-12)
    assert np.array_equal(np.argsort(z, axis=1), np.argsort(rows, axis=1))
    with pytest.raises(ValueError):
        zscore_normalize([[1.0, 1.0]])
    with pytest.raises(ValueError):
        zscore_normalize([[1.0]])


def test_planted_offset_removal_widens_margin():
    rng = np.random.default_rng(9)
    n, d = 40, 10
    ident = rng.normal(size=(n, d))
    offset = np.zeros(d)
    offset[0] = 8.0
    A = ident + offset + 0.2 * rng.normal(size=(n, d))
    B = ident - offset + 0.2 * rng.normal(size=(n, d))
    X = np.vstack([A, B])

    def margin(k):
        head = fit_head(X, k)
        S = cosine_matrix(head.transform(A), head.transform(B))
        off = ~np.eye(n, dtype=bool)
        return np.diag(S).mean() - S[off].mean()

    assert margin(1) > margin(0)


def test_estimator_params():
    assert ProjectionHead().get_params() == {"removed_k": 11, "energy_cutoff": None}
