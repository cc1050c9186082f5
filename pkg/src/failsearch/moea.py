"""Evolutionary machinery: dominance sorting, survival, selection and variation.

All objectives are minimized. Operators take an explicit ``numpy`` Generator
so a run is reproducible from its seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scenario import FeatureSchema, ScenarioConfig, validate_repair

ETA_MUTATION = 20.0
MUTATION_BREADTH = 0.25


@dataclass(eq=False)
class Individual:
    config: ScenarioConfig
    objectives: np.ndarray | None = None
    rank: int = -1
    survival_key: float = 0.0
    saliency: np.ndarray | None = None
    encoded: np.ndarray | None = None
    probability: float | None = None
    diversity: float | None = None
    generation: int = 0

    def __repr__(self):
        obj = None if self.objectives is None else tuple(np.round(self.objectives, 4))
        return f"Individual(objectives={obj}, rank={self.rank}, key={self.survival_key:.4g})"


def _objective_matrix(items) -> np.ndarray:
    if isinstance(items, np.ndarray):
        return np.atleast_2d(items).astype(float)
    return np.array([ind.objectives for ind in items], dtype=float).reshape(len(items), -1)


def dominates(a, b) -> bool:
    a, b = np.asarray(a), np.asarray(b)
    return bool(np.all(a <= b) and np.any(a < b))


# sorting ----------------------------------------------------------------------


def nondominated_ranks(F) -> list[np.ndarray]:
    """Front index arrays (into the rows of ``F``) in order of dominance depth."""
    F = np.asarray(F, dtype=float)
    n = len(F)
    if n == 0:
        return []
    le = np.all(F[:, None, :] <= F[None, :, :], axis=2)
    lt = np.any(F[:, None, :] < F[None, :, :], axis=2)
    dom = le & lt  # dom[i, j]: i dominates j
    count = dom.sum(axis=0)
    fronts = []
    current = np.flatnonzero(count == 0)
    while current.size:
        fronts.append(current)
        count = count - dom[current].sum(axis=0)
        count[current] = -1
        current = np.flatnonzero(count == 0)
    return fronts


def fast_nondominated_sort(pop: list[Individual]) -> list[list[Individual]]:
    """Partition ``pop`` into Pareto fronts and set each individual's ``rank``."""
    fronts = []
    for r, idx in enumerate(nondominated_ranks(_objective_matrix(pop))):
        front = [pop[i] for i in idx]
        for ind in front:
            ind.rank = r
        fronts.append(front)
    return fronts


def crowding_distance(front) -> np.ndarray:
    """Deb's crowding distance; boundary points per objective get ``inf``."""
    F = _objective_matrix(front)
    n, m = F.shape
    dist = np.zeros(n)
    if n <= 2:
        dist[:] = np.inf
        return dist
    for j in range(m):
        order = np.argsort(F[:, j], kind="stable")
        col = F[order, j]
        span = col[-1] - col[0]
        dist[order[0]] = dist[order[-1]] = np.inf
        if span > 0:
            dist[order[1:-1]] += (col[2:] - col[:-2]) / span
    return dist


# AGE-MOEA survival ------------------------------------------------------------


def _point_line_distance(P: np.ndarray, direction: np.ndarray) -> np.ndarray:
    """Distance of each row of ``P`` to the line through the origin along ``direction``."""
    t = P @ direction / (direction @ direction)
    return np.linalg.norm(P - t[:, None] * direction[None, :], axis=1)


def _corner_solutions(front: np.ndarray) -> np.ndarray:
    m, n = front.shape
    if m <= n:
        return np.arange(m)
    W = 1e-6 + np.eye(n)
    chosen = np.zeros(m, dtype=bool)
    idx = np.zeros(n, dtype=int)
    for i in range(n):
        d = _point_line_distance(front, W[i])
        d[chosen] = np.inf
        idx[i] = int(np.argmin(d))
        chosen[idx[i]] = True
    return idx


def _normalization(front: np.ndarray, extreme: np.ndarray) -> np.ndarray:
    n = front.shape[1]
    fallback = front.max(axis=0)
    if len(np.unique(front[extreme], axis=0)) != len(extreme):
        norm = fallback
    else:
        try:
            plane = np.linalg.solve(front[extreme], np.ones(n))
        except np.linalg.LinAlgError:
            plane = None
        if plane is None or not np.all(np.isfinite(plane)) or np.any(plane <= 0):
            norm = fallback
        else:
            norm = 1.0 / plane
    norm = np.where(np.isfinite(norm) & (norm > 0), norm, 1.0)
    return norm


def _front_geometry(front: np.ndarray, extreme: np.ndarray) -> float:
    """Exponent p of the L_p front shape, from the point nearest the (1,..,1) diagonal."""
    n = front.shape[1]
    d = _point_line_distance(front, np.ones(n))
    d[extreme] = np.inf
    if not np.isfinite(d).any():
        return 1.0
    mean = float(front[int(np.argmin(d))].mean())
    if mean <= 0:
        return 1.0
    if mean == 1:
        return 20.0
    p = math.log(n) / math.log(1.0 / mean)
    return 1.0 if p <= 0.1 else min(p, 20.0)


def _minkowski(X: np.ndarray, p: float) -> np.ndarray:
    return (np.abs(X) ** p).sum(axis=-1) ** (1.0 / p)


def survival_scores(front: np.ndarray):
    """AGE-MOEA scores for the first front.

    Returns ``(scores, p, ideal, normalization)``. Extreme points score ``inf``;
    the rest are picked greedily, each scored by the sum of its two smallest
    L_p distances to already-picked points divided by its own L_p norm.
    """
    front = np.asarray(front, dtype=float)
    m, n = front.shape
    ideal = front.min(axis=0)
    shifted = front - ideal
    scores = np.zeros(m)
    if m < n:
        scores[:] = np.inf
        norm = shifted.max(axis=0)
        return scores, 1.0, ideal, np.where(norm > 0, norm, 1.0)
    extreme = _corner_solutions(shifted)
    norm = _normalization(shifted, extreme)
    normed = shifted / norm
    scores[extreme] = np.inf
    p = _front_geometry(normed, extreme)
    proximity = np.maximum(_minkowski(normed, p), 1e-12)
    dist = _minkowski(normed[:, None, :] - normed[None, :, :], p) / proximity[:, None]

    selected = np.zeros(m, dtype=bool)
    selected[np.unique(extreme)] = True
    remaining = np.flatnonzero(~selected)
    # two smallest distances from each point to the selected set
    sel_idx = np.flatnonzero(selected)
    near = np.sort(dist[:, sel_idx], axis=1)
    best1 = near[:, 0]
    best2 = near[:, 1] if near.shape[1] > 1 else np.full(m, np.nan)
    while remaining.size:
        if np.isnan(best2[remaining]).all():
            vals = best1[remaining]
        else:
            vals = best1[remaining] + best2[remaining]
        k = int(np.argmax(vals))
        pick = remaining[k]
        scores[pick] = vals[k]
        remaining = np.delete(remaining, k)
        d_new = dist[:, pick]
        second = np.where(np.isnan(best2), np.maximum(best1, d_new),
                          np.minimum(best2, np.maximum(best1, d_new)))
        best1, best2 = np.minimum(best1, d_new), second
    return scores, p, ideal, norm


def age_moea_survival(fronts: list[list[Individual]], target_size: int) -> list[Individual]:
    """Pick ``target_size`` survivors front by front, AGE-MOEA style.

    Every individual in the first front gets its survival score; later fronts
    are scored by inverse proximity to the ideal point under the first front's
    normalization and geometry. The splitting front is truncated by score.
    """
    if not fronts:
        return []
    F0 = _objective_matrix(fronts[0])
    s0, p, ideal, norm = survival_scores(F0)
    for ind, s in zip(fronts[0], s0):
        ind.survival_key = float(s)
    survivors: list[Individual] = []
    for i, front in enumerate(fronts):
        if i > 0:
            F = (_objective_matrix(front) - ideal) / norm
            prox = _minkowski(F, p)
            with np.errstate(divide="ignore"):
                keys = np.where(prox > 0, 1.0 / np.maximum(prox, 1e-300), np.inf)
            for ind, k in zip(front, keys):
                ind.survival_key = float(k)
        room = target_size - len(survivors)
        if room <= 0:
            break
        if len(front) <= room:
            survivors.extend(front)
        else:
            keys = np.array([ind.survival_key for ind in front])
            order = np.argsort(-keys, kind="stable")
            survivors.extend(front[j] for j in order[:room])
    return survivors


def nsga2_survival(fronts: list[list[Individual]], target_size: int) -> list[Individual]:
    survivors: list[Individual] = []
    for front in fronts:
        room = target_size - len(survivors)
        if room <= 0:
            break
        cd = crowding_distance(front)
        for ind, d in zip(front, cd):
            ind.survival_key = float(d)
        if len(front) <= room:
            survivors.extend(front)
        else:
            order = np.argsort(-cd, kind="stable")
            survivors.extend(front[j] for j in order[:room])
    return survivors


def assign_rank_and_keys(pop: list[Individual], algorithm: str) -> list[list[Individual]]:
    """Sort ``pop`` and set rank/survival keys without discarding anyone."""
    fronts = fast_nondominated_sort(pop)
    survive = age_moea_survival if algorithm == "agemoea" else nsga2_survival
    survive(fronts, len(pop))
    return fronts


def elitism(combined: list[Individual], size: int, algorithm: str = "nsga2") -> list[Individual]:
    """Reduce parents+offspring to ``size`` survivors (rank first, then survival key)."""
    if algorithm not in ("nsga2", "agemoea"):
        raise ValueError(f"unknown algorithm {algorithm!r}")
    fronts = fast_nondominated_sort(combined)
    if algorithm == "nsga2":
        return nsga2_survival(fronts, size)
    return age_moea_survival(fronts, size)


# selection and variation --------------------------------------------------------


def tournament_select(pop: list[Individual], rng: np.random.Generator) -> Individual:
    """Binary tournament: lower rank, then higher survival key, then a coin flip."""
    a = pop[int(rng.integers(len(pop)))]
    b = pop[int(rng.integers(len(pop)))]
    if a.rank != b.rank:
        return a if a.rank < b.rank else b
    if a.survival_key != b.survival_key:
        return a if a.survival_key > b.survival_key else b
    return a if rng.random() < 0.5 else b


def single_point_crossover(p1: ScenarioConfig, p2: ScenarioConfig, schema: FeatureSchema,
                           rng: np.random.Generator, cut: int | None = None):
    """Swap the schema-ordered feature tails of two parents at a random cut."""
    names = schema.names
    if len(names) < 2:
        return p1, p2
    if cut is None:
        cut = int(rng.integers(1, len(names)))
    head, tail = names[:cut], names[cut:]
    c1 = {**{n: p1[n] for n in head}, **{n: p2[n] for n in tail}}
    c2 = {**{n: p2[n] for n in head}, **{n: p1[n] for n in tail}}
    return validate_repair(c1, schema, rng), validate_repair(c2, schema, rng)


def polynomial_mutation(y: float, low: float, high: float, rng: np.random.Generator,
                        eta: float = ETA_MUTATION) -> float:
    """Deb's bounded polynomial mutation of a single value."""
    span = high - low
    d1, d2 = (y - low) / span, (high - y) / span
    power = 1.0 / (eta + 1.0)
    r = rng.random()
    if r <= 0.5:
        val = 2.0 * r + (1.0 - 2.0 * r) * (1.0 - d1) ** (eta + 1.0)
        dq = val ** power - 1.0
    else:
        val = 2.0 * (1.0 - r) + 2.0 * (r - 0.5) * (1.0 - d2) ** (eta + 1.0)
        dq = 1.0 - val ** power
    return min(max(y + dq * span, low), high)


def _forbidden(schema: FeatureSchema, config, list_name: str) -> set:
    return {config[c.value_of] for c in schema.constraints if c.from_list == list_name}


def _mutate_feature(f, value, config, schema, rng, eta):
    if f.kind in ("real", "integer"):
        comps = (value,) if f.size == 1 else value
        new = [polynomial_mutation(float(c), lo, hi, rng, eta) for c, lo, hi in zip(comps, f._lo, f._hi)]
        if f.kind == "integer":
            new = [int(round(c)) for c in new]
        return new[0] if f.size == 1 else tuple(new)
    if f.kind == "binary":
        return not value
    if f.kind == "categorical":
        other = int(rng.integers(f.n_categories - 1))
        return other if other < value else other + 1
    items = list(value)
    if f.encoding == "membership":
        blocked = set(items) | _forbidden(schema, config, f.name)
        absent = [e for e in range(f.domain) if e not in blocked]
    else:
        absent = [True]  # a fresh (command, value) pair is always available
    ops = []
    if items:
        ops.append("remove")
    if absent and len(items) < f.max_length:
        ops.append("add")
    if items and absent:
        ops.append("modify")
    if not ops:
        return value
    op = ops[int(rng.integers(len(ops)))]
    if f.encoding == "membership":
        if op == "remove":
            items.pop(int(rng.integers(len(items))))
        elif op == "add":
            items.append(absent[int(rng.integers(len(absent)))])
        else:
            items[int(rng.integers(len(items)))] = absent[int(rng.integers(len(absent)))]
        return tuple(sorted(items))
    if op == "remove":
        items.pop(int(rng.integers(len(items))))
    elif op == "add":
        pair = (int(rng.integers(f.commands)), float(rng.uniform(f.low, f.high)))
        items.insert(int(rng.integers(len(items) + 1)), pair)
    else:
        j = int(rng.integers(len(items)))
        cmd, val = items[j]
        if rng.random() < 0.5:
            cmd = int(rng.integers(f.commands))
        else:
            val = polynomial_mutation(val, f.low, f.high, rng, eta)
        items[j] = (cmd, val)
    return tuple(items)


def mutate(config: ScenarioConfig, weights, schema: FeatureSchema, rng: np.random.Generator,
           breadth: float = MUTATION_BREADTH, eta: float = ETA_MUTATION) -> ScenarioConfig:
    """Saliency-guided mutation.

    Picks ``ceil(breadth * n_features)`` distinct features (at least one) with
    probability proportional to ``weights`` and perturbs each by its kind; the
    result is repaired.
    """
    n = len(schema)
    w = np.asarray(weights, dtype=float) if weights is not None else np.full(n, 1.0 / n)
    if w.shape != (n,):
        raise ValueError(f"expected {n} feature weights, got shape {w.shape}")
    # floor keeps zero-saliency features reachable when sampling without replacement
    w = np.maximum(w, 0.0) + 1e-12
    w = w / w.sum()
    count = min(n, max(1, math.ceil(breadth * n)))
    picked = rng.choice(n, size=count, replace=False, p=w)
    values = dict(config)
    for j in sorted(picked.tolist()):
        f = schema.features[j]
        values[f.name] = _mutate_feature(f, values[f.name], values, schema, rng, eta)
    return validate_repair(values, schema, rng)
