"""Post-execution evaluation: failure clustering, entropy, time-to-failure, statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import mannwhitneyu
from sklearn.metrics import silhouette_score

from .diversity import fit_pca, kmeans
from .errors import EmptyInput, SampleTooSmall
from .scenario import FeatureSchema, encode_batch

K_MAX = 10
IMPROVEMENT = 1.2
MIN_WILCOXON = 5


@dataclass(frozen=True)
class ClusteringResult:
    k: int
    labels: np.ndarray
    silhouettes: dict = field(default_factory=dict)

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k) if len(self.labels) else np.zeros(0, int)

    @property
    def populated(self) -> int:
        return int(np.count_nonzero(self.counts))


def flatten_traces(records) -> np.ndarray:
    """One zero-padded row per trajectory; 2-D samples are interleaved ``x0, y0, x1, ...``."""
    rows = [np.asarray(getattr(r, "trajectory", r), dtype=float).reshape(-1) for r in records]
    if not rows:
        raise EmptyInput("no trajectories to flatten")
    width = max(len(r) for r in rows)
    out = np.zeros((len(rows), width))
    for i, r in enumerate(rows):
        out[i, : len(r)] = r
    return out


def _silhouette(points, labels) -> float:
    n_labels = len(np.unique(labels))
    if n_labels < 2 or n_labels > len(points) - 1:
        return -1.0
    return float(silhouette_score(points, labels))


def choose_k_by_silhouette(points, k_max: int = K_MAX, seed=0) -> ClusteringResult:
    """K-means with K chosen by the 20%-improvement silhouette rule.

    Starts from K=2 and moves to K+1 only while silhouette(K+1) >= 1.2 *
    silhouette(K). Fewer than 3 points, or no two distinct rows, gives K=1.
    """
    X = np.atleast_2d(np.asarray(points, dtype=float))
    n = len(X)
    if n < 3 or len(np.unique(X, axis=0)) < 2:
        return ClusteringResult(1, np.zeros(n, dtype=int))
    upper = min(k_max, n - 1)
    best = kmeans(X, 2, seed)
    sil = {2: _silhouette(X, best.labels)}
    k = 2
    for cand in range(3, upper + 1):
        model = kmeans(X, cand, seed)
        sil[cand] = _silhouette(X, model.labels)
        if sil[cand] >= IMPROVEMENT * sil[k]:
            best, k = model, cand
        else:
            break
    return ClusteringResult(k, best.labels.astype(int), sil)


def cluster_rows(X, seed=0, k_max: int = K_MAX) -> ClusteringResult:
    """PCA (95% variance) then silhouette-selected K-means, independent of row order."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if len(X) == 0:
        return ClusteringResult(0, np.zeros(0, dtype=int))
    if len(X) == 1:
        return ClusteringResult(1, np.zeros(1, dtype=int))
    order = np.lexsort(X.T[::-1])
    Xs = X[order]
    projected = fit_pca(Xs, 0.95).transform(Xs)
    res = choose_k_by_silhouette(projected, k_max, seed)
    labels = np.empty(len(X), dtype=int)
    labels[order] = res.labels
    return ClusteringResult(res.k, labels, res.silhouettes)


def cluster_failures(records, seed=0, k_max: int = K_MAX) -> ClusteringResult:
    failing = [r for r in records if r.failed]
    if not failing:
        return ClusteringResult(0, np.zeros(0, dtype=int))
    return cluster_rows(flatten_traces(failing), seed, k_max)


def unique_failures(records, seed=0, k_max: int = K_MAX) -> int:
    """Number of populated clusters among the failing records' output traces."""
    return cluster_failures(records, seed, k_max).populated


def entropy_from_counts(counts) -> float:
    counts = np.asarray([c for c in counts if c > 0], dtype=float)
    if counts.size == 0:
        raise EmptyInput("no cluster counts")
    if counts.size == 1:
        return 0.0
    p = counts / counts.sum()
    return float(-(p * np.log(p)).sum() / math.log(counts.size) * 100.0)


def entropy_percent(labels) -> float:
    """Shannon entropy of the cluster-size distribution, normalized by ln K, times 100."""
    labels = list(labels)
    if not labels:
        raise EmptyInput("no labels")
    _, counts = np.unique(np.asarray(labels), return_counts=True)
    return entropy_from_counts(counts)


def output_diversity_metrics(records, seed=0) -> dict:
    res = cluster_failures(records, seed)
    entropy = entropy_percent(res.labels) if len(res.labels) else 0.0
    return {"unique_failures": res.populated, "output_entropy": entropy}


def input_diversity_metrics(records, schema: FeatureSchema, seed=0) -> dict:
    """Cluster the failing configs (encoded) rather than their traces."""
    failing = [r.config for r in records if r.failed]
    if not failing:
        return {"unique_input_clusters": 0, "input_entropy": 0.0}
    res = cluster_rows(encode_batch(failing, schema), seed)
    return {"unique_input_clusters": res.populated, "input_entropy": entropy_percent(res.labels)}


@dataclass(frozen=True)
class TimeToFailure:
    evaluations: int
    wall_clock: float


def time_to_first_failure(records) -> TimeToFailure | None:
    """Counters of the first failing record, or ``None`` when nothing failed."""
    for r in records:
        if r.failed:
            return TimeToFailure(r.evaluations, r.wall_clock)
    return None


def vargha_delaney_a12(a, b) -> float:
    """P(X > Y) + 0.5 P(X = Y) for X drawn from ``a`` and Y from ``b``."""
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    if a.size == 0 or b.size == 0:
        raise EmptyInput("both samples must be non-empty")
    gt = (a[:, None] > b[None, :]).sum()
    eq = (a[:, None] == b[None, :]).sum()
    return float((gt + 0.5 * eq) / (a.size * b.size))


def wilcoxon_rank_sum(a, b) -> float:
    """Two-sided rank-sum p-value (normal approximation, tie and continuity corrected)."""
    a = np.asarray(a, dtype=float).reshape(-1)
    b = np.asarray(b, dtype=float).reshape(-1)
    if a.size < MIN_WILCOXON or b.size < MIN_WILCOXON:
        raise SampleTooSmall(f"need at least {MIN_WILCOXON} observations per sample")
    if np.unique(np.concatenate([a, b])).size == 1:
        return 1.0
    return float(mannwhitneyu(a, b, alternative="two-sided", use_continuity=True,
                              method="asymptotic").pvalue)


def run_metrics(records, schema: FeatureSchema, seed=0) -> dict:
    """All per-campaign-cell metrics for one ordered list of executed scenarios."""
    out = {"total_failures": int(sum(r.failed for r in records))}
    out.update(output_diversity_metrics(records, seed))
    out.update(input_diversity_metrics(records, schema, seed))
    ttf = time_to_first_failure(records)
    out["ttf_evaluations"] = math.nan if ttf is None else float(ttf.evaluations)
    out["ttf_seconds"] = math.nan if ttf is None else float(ttf.wall_clock)
    return out


def median_iqr(values) -> tuple[float, float]:
    v = np.asarray([x for x in values if not math.isnan(x)], dtype=float)
    if v.size == 0:
        return math.nan, math.nan
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    return float(med), float(q3 - q1)
