import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from failsearch.diversity import (D_MAX, ArchiveDiversity, euclidean_diversity, fit_pca, kmeans,
                                  pca_cluster_diversity)
from failsearch.errors import DimensionMismatch, InsufficientData, InvalidK

import oracles

finite = st.floats(-50, 50, allow_nan=False)


def test_euclidean_examples():
    assert euclidean_diversity([0, 0], [[3, 4]]) == 5.0
    assert euclidean_diversity([0, 0], [[3, 4], [0, 0]]) == 2.5
    assert euclidean_diversity([0, 0], []) == D_MAX == 20.0
    with pytest.raises(DimensionMismatch):
        euclidean_diversity([0, 0], [[1, 2, 3]])


@settings(max_examples=80, deadline=None)
@given(c=arrays(float, 3, elements=finite), A=arrays(float, (5, 3), elements=finite),
       perm=st.permutations(range(5)))
def test_euclidean_properties(c, A, perm):
    d = euclidean_diversity(c, A)
    assert d >= 0
    assert (d == 0) == bool(np.all(A == c))
    assert math.isclose(euclidean_diversity(c, A[list(perm)]), d, rel_tol=1e-12, abs_tol=1e-12)
    # adding a copy of the candidate can only pull the mean distance down
    assert euclidean_diversity(c, np.vstack([A, c])) <= d + 1e-12


def test_pca_collinear():
    t = np.linspace(-2, 3, 9)
    X = np.stack([t, 2 * t], axis=1)
    m = fit_pca(X)
    assert m.n_components == 1
    assert math.isclose(m.explained_variance_ratio[0], 1.0)
    assert math.isclose(abs(m.components[0] @ np.array([1, 2]) / math.sqrt(5)), 1.0)


def test_pca_matches_eigh(rng):
    X = rng.normal(size=(40, 5)) @ rng.normal(size=(5, 5))
    m = fit_pca(X)
    ref, vals = oracles.eigh_projection(X, m.n_components)
    P = m.transform(X)
    np.testing.assert_allclose(oracles.align_signs(P, ref), ref, atol=1e-6)
    np.testing.assert_allclose(m.explained_variance, vals, rtol=1e-8)


def test_pca_errors_and_caps(rng):
    with pytest.raises(InsufficientData):
        fit_pca(np.ones((1, 3)))
    m = fit_pca(rng.normal(size=(4, 30)))
    assert m.n_components <= 3
    m = fit_pca(rng.normal(size=(200, 30)))
    assert m.n_components <= 10


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(3, 30), d=st.integers(1, 8))
def test_pca_invariants(seed, n, d):
    X = np.random.default_rng(seed).normal(size=(n, d))
    m = fit_pca(X)
    G = m.components @ m.components.T
    np.testing.assert_allclose(G, np.eye(m.n_components), atol=1e-8)
    assert np.all(np.diff(m.explained_variance) <= 1e-12)


def test_full_rank_projection_preserves_distances(rng):
    X = rng.normal(size=(12, 4))
    P = fit_pca(X, n_components=4).transform(X)
    from scipy.spatial.distance import pdist

    np.testing.assert_allclose(pdist(P), pdist(X), rtol=1e-10)


def test_kmeans_examples():
    X = np.array([[0, 0], [0, 1], [10, 0], [10, 1]], float)
    m = kmeans(X, 2, seed=0)
    cents = sorted(map(tuple, np.round(m.centroids, 12)))
    assert cents == [(0.0, 0.5), (10.0, 0.5)]
    np.testing.assert_allclose(kmeans(X, 1).centroids[0], X.mean(axis=0))
    with pytest.raises(InvalidK):
        kmeans(X, 5)
    with pytest.raises(InvalidK):
        kmeans(X, 0)


def test_kmeans_inertia_trace(rng):
    X = rng.normal(size=(120, 3))
    m = kmeans(X, 4, seed=3)
    assert np.all(np.diff(m.inertia_history) <= 1e-9)
    # independent recomputation of the final inertia and nearest-centroid labels
    d2 = ((X[:, None, :] - m.centroids[None]) ** 2).sum(axis=2)
    assert np.array_equal(m.labels, d2.argmin(axis=1))
    assert math.isclose(m.inertia, d2.min(axis=1).sum(), rel_tol=1e-10)


def test_kmeans_is_deterministic(rng):
    X = rng.normal(size=(50, 2))
    a, b = kmeans(X, 3, seed=11), kmeans(X, 3, seed=11)
    assert np.array_equal(a.centroids, b.centroids) and np.array_equal(a.labels, b.labels)


def test_pca_diversity_examples(rng):
    assert pca_cluster_diversity([0.0, 0.0], []) == 20.0
    # small archives use the Euclidean fallback
    A = rng.normal(size=(3, 4))
    c = rng.normal(size=4)
    assert pca_cluster_diversity(c, A) == euclidean_diversity(c, A)
    # four copies of one point: a single effective centroid at the projected origin
    p = np.array([1.0, 2.0, 3.0])
    c = np.array([2.0, 0.0, 3.5])
    scorer = ArchiveDiversity(np.tile(p, (4, 1)), "pca")
    d = float(np.linalg.norm(scorer.pca.transform(c)))
    assert math.isclose(pca_cluster_diversity(c, np.tile(p, (4, 1))), d, rel_tol=1e-12)


def test_pca_diversity_zero_at_centroid():
    A = np.array([[0, 0], [0, 0.1], [5, 5], [5, 5.1], [9, 0]], float)
    scorer = ArchiveDiversity(A, "pca", seed=0)
    # k = min(5, 5) = 5: every archive point is its own centroid
    assert scorer.clusters.k == 5
    for a in A:
        assert pca_cluster_diversity(a, A) == pytest.approx(0.0, abs=1e-12)


def test_scores_are_clamped():
    far = ArchiveDiversity(np.zeros((2, 2)), "euclidean")
    assert far.scores([[100.0, 0.0]])[0] == D_MAX
    assert ArchiveDiversity([], "pca", width=2).scores([[1.0, 1.0]])[0] == D_MAX
