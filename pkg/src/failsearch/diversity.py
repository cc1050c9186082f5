"""Input-diversity objective plus the PCA and K-means primitives behind it."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InsufficientData, InvalidK

D_MAX = 20.0
MAX_COMPONENTS = 10
SEARCH_K = 5
MIN_ARCHIVE_FOR_PCA = 4


def _archive_matrix(archive, width: int) -> np.ndarray:
    A = np.asarray(archive, dtype=float)
    if A.size == 0:
        return np.zeros((0, width))
    A = np.atleast_2d(A)
    if A.shape[1] != width:
        raise DimensionMismatch(f"archive width {A.shape[1]} != candidate width {width}")
    return A


def _row_norms(D: np.ndarray) -> np.ndarray:
    # rescaled so tiny (or huge) differences do not under/overflow when squared
    scale = np.abs(D).max(axis=-1, keepdims=True)
    safe = np.where(scale > 0, scale, 1.0)
    return (safe * np.sqrt(((D / safe) ** 2).sum(axis=-1, keepdims=True)))[..., 0]


def euclidean_diversity(candidate, archive) -> float:
    """Mean L2 distance from ``candidate`` to every archive member (``D_MAX`` if empty)."""
    c = np.asarray(candidate, dtype=float)
    A = _archive_matrix(archive, c.shape[-1])
    if len(A) == 0:
        return D_MAX
    return float(_row_norms(A - c).mean())


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (k, d), orthonormal rows
    explained_variance: np.ndarray
    explained_variance_ratio: np.ndarray

    @property
    def n_components(self) -> int:
        return len(self.components)

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != len(self.mean):
            raise DimensionMismatch(f"width {X.shape[-1]} != fitted width {len(self.mean)}")
        return (X - self.mean) @ self.components.T


def fit_pca(points, variance_threshold: float = 0.95, n_components: int | None = None,
            max_components: int = MAX_COMPONENTS) -> PcaModel:
    """Principal components of ``points`` (rows).

    Keeps the fewest components whose cumulative explained-variance fraction
    reaches ``variance_threshold``, capped at ``min(max_components, dims, n - 1)``.
    ``n_components`` overrides the threshold rule (the cap still applies).
    Component signs are fixed so each component's largest-magnitude entry is positive.
    """
    X = np.atleast_2d(np.asarray(points, dtype=float))
    n, d = X.shape
    if n < 2:
        raise InsufficientData("PCA needs at least 2 points")
    mean = X.mean(axis=0)
    _, s, vt = np.linalg.svd(X - mean, full_matrices=False)
    var = s ** 2 / (n - 1)
    cap = max(1, min(max_components, d, n - 1))
    total = var.sum()
    if n_components is not None:
        k = min(n_components, cap)
    elif total <= 0:
        k = 1
    else:
        cum = np.cumsum(var) / total
        k = int(np.searchsorted(cum, variance_threshold - 1e-12) + 1)
        k = min(k, cap)
    comps = vt[:k].copy()
    flip = np.sign(comps[np.arange(k), np.argmax(np.abs(comps), axis=1)])
    comps *= np.where(flip == 0, 1.0, flip)[:, None]
    ratio = var[:k] / total if total > 0 else np.zeros(k)
    return PcaModel(mean, comps, var[:k], ratio)


@dataclass(frozen=True)
class ClusterModel:
    centroids: np.ndarray
    labels: np.ndarray
    inertia: float
    inertia_history: tuple
    n_iter: int

    @property
    def k(self) -> int:
        return len(self.centroids)

    def predict(self, X) -> np.ndarray:
        return _assign(np.atleast_2d(np.asarray(X, dtype=float)), self.centroids)[0]


def _sq_dists(X, C):
    return ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)


def _assign(X, C):
    d2 = _sq_dists(X, C)
    labels = np.argmin(d2, axis=1)
    return labels, float(d2[np.arange(len(X)), labels].sum())


def farthest_point_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Seeded random first center, then repeatedly the point farthest from all chosen centers."""
    idx = [int(rng.integers(len(X)))]
    mind = ((X - X[idx[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        nxt = int(np.argmax(mind))
        idx.append(nxt)
        mind = np.minimum(mind, ((X - X[nxt]) ** 2).sum(axis=1))
    return X[idx].copy()


def kmeans(points, k: int, seed=0, max_iter: int = 300) -> ClusterModel:
    """Lloyd's algorithm from a farthest-point start.

    Stops when assignments stop changing or after ``max_iter`` iterations.
    ``inertia_history[i]`` is the within-cluster sum of squares after the
    i-th assignment step. Empty clusters keep their previous centroid.
    """
    X = np.atleast_2d(np.asarray(points, dtype=float))
    if not 1 <= k <= len(X):
        raise InvalidK(f"k={k} must be in [1, {len(X)}]")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    C = farthest_point_init(X, k, rng)
    labels, inertia = _assign(X, C)
    history = [inertia]
    it = 0
    for it in range(1, max_iter + 1):
        for j in range(k):
            members = labels == j
            if members.any():
                C[j] = X[members].mean(axis=0)
        new_labels, inertia = _assign(X, C)
        history.append(inertia)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return ClusterModel(C, labels, inertia, tuple(history), it)


def pca_cluster_diversity(candidate, archive, seed=0) -> float:
    """Distance from the projected candidate to the nearest archive cluster centroid.

    Archives with fewer than 4 members fall back to :func:`euclidean_diversity`.
    """
    c = np.asarray(candidate, dtype=float)
    A = _archive_matrix(archive, c.shape[-1])
    if len(A) < MIN_ARCHIVE_FOR_PCA:
        return euclidean_diversity(c, A)
    return float(ArchiveDiversity(A, "pca", seed).raw_scores(c[None, :])[0])


class ArchiveDiversity:
    """Diversity scorer against a frozen archive, fitted once and applied to batches."""

    def __init__(self, archive, metric: str = "euclidean", seed=0, width: int | None = None):
        if metric not in ("euclidean", "pca"):
            raise ValueError(f"unknown diversity metric {metric!r}")
        A = np.asarray(archive, dtype=float)
        if A.size == 0:
            A = np.zeros((0, width or 0))
        self.archive = np.atleast_2d(A)
        self.metric = metric
        self.pca = None
        self.clusters = None
        if metric == "pca" and len(self.archive) >= MIN_ARCHIVE_FOR_PCA:
            self.pca = fit_pca(self.archive, 0.95)
            projected = self.pca.transform(self.archive)
            self.clusters = kmeans(projected, min(SEARCH_K, len(self.archive)), seed)

    def raw_scores(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if len(self.archive) == 0:
            return np.full(len(X), D_MAX)
        if X.shape[1] != self.archive.shape[1]:
            raise DimensionMismatch(f"width {X.shape[1]} != archive width {self.archive.shape[1]}")
        if self.clusters is None:
            return _row_norms(X[:, None, :] - self.archive[None, :, :]).mean(axis=1)
        P = self.pca.transform(X)
        return np.sqrt(_sq_dists(P, self.clusters.centroids).min(axis=1))

    def scores(self, X) -> np.ndarray:
        """Scores clamped to ``[0, D_MAX]`` for use as an objective."""
        return np.clip(self.raw_scores(X), 0.0, D_MAX)
