"""Restart-based test generation: multi-objective search and the single-objective GA baseline.

Both objectives are minimized internally::

    f1 = 1 - s(e)                  (failure likelihood)
    f2 = 20 - clamp(div(e), 0, 20) (input diversity w.r.t. the archive)

so the hypervolume reference point ``(1.2, 20.2)`` upper-bounds every feasible point.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import moea
from .diversity import D_MAX, ArchiveDiversity
from .errors import DimensionMismatch, EmptySeedSet, ValidationError
from .moea import Individual
from .scenario import FeatureSchema, ScenarioConfig, config_from_json, config_to_json, encode_batch
from .surrogate import MlpModel, aggregate_saliency, input_gradient, predict

REFERENCE_POINT = (1.2, 20.2)
ALGORITHMS = ("nsga2", "agemoea")
DIVERSITY_METRICS = ("euclidean", "pca")
STRATEGIES = ("knee", "max_o1")


@dataclass(frozen=True)
class SearchConfig:
    test_runs: int = 10
    generations: int = 50
    population_size: int = 50
    crossover_rate: float = 0.75
    tol: float = 5e-6
    n_last: int = 10
    reference_point: tuple = REFERENCE_POINT
    algorithm: str = "agemoea"
    diversity: str = "euclidean"
    strategy: str = "knee"
    seed: int = 0
    mutation_breadth: float = moea.MUTATION_BREADTH

    def __post_init__(self):
        object.__setattr__(self, "reference_point", tuple(float(r) for r in self.reference_point))
        problems = []
        for name in ("test_runs", "generations", "population_size", "n_last"):
            if int(getattr(self, name)) < 1:
                problems.append(f"{name} must be >= 1")
        if not 0.0 <= self.crossover_rate <= 1.0:
            problems.append("crossover_rate must be in [0, 1]")
        if not self.tol > 0:
            problems.append("tol must be > 0")
        if len(self.reference_point) != 2 or not (self.reference_point[0] > 1.0 and self.reference_point[1] > D_MAX):
            problems.append("reference_point must exceed (1, 20) componentwise")
        if self.algorithm not in ALGORITHMS:
            problems.append(f"algorithm must be one of {ALGORITHMS}")
        if self.diversity not in DIVERSITY_METRICS:
            problems.append(f"diversity must be one of {DIVERSITY_METRICS}")
        if self.strategy not in STRATEGIES:
            problems.append(f"strategy must be one of {STRATEGIES}")
        if problems:
            raise ValidationError("; ".join(problems))


@dataclass(frozen=True)
class ArchiveEntry:
    config: ScenarioConfig
    probability: float
    diversity: float
    run: int
    generation: int
    evaluations: int

    def to_json(self, schema: FeatureSchema) -> dict:
        return {
            "config": config_to_json(self.config, schema),
            "probability": self.probability,
            "diversity": self.diversity,
            "run": self.run,
            "generation": self.generation,
            "evaluations": self.evaluations,
        }


@dataclass
class SearchLog:
    rows: list = field(default_factory=list)  # (run, generation, hypervolume, evaluations, archive_size)
    selection_seconds: list = field(default_factory=list)

    def hypervolumes(self, run: int) -> list[float]:
        return [r[2] for r in self.rows if r[0] == run]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["run", "generation", "hypervolume", "evaluations", "archive_size"])
        for run, gen, hv, ev, size in self.rows:
            w.writerow([run, gen, repr(float(hv)), ev, size])
        return buf.getvalue()


@dataclass
class SearchResult:
    archive: list
    log: SearchLog

    @property
    def configs(self) -> list[ScenarioConfig]:
        return [e.config for e in self.archive]


# small building blocks ----------------------------------------------------------


def objective_transform(s_value, div_value):
    """Map (failure probability, diversity) to the minimized pair (f1, f2)."""
    f1 = 1.0 - np.asarray(s_value, dtype=float)
    f2 = D_MAX - np.clip(np.asarray(div_value, dtype=float), 0.0, D_MAX)
    if f1.ndim == 0:
        return float(f1), float(f2)
    return f1, f2


def hypervolume_2d(front, ref=REFERENCE_POINT) -> float:
    """Area dominated by ``front`` (minimization) inside the box bounded by ``ref``.

    Points not strictly better than ``ref`` in both objectives contribute nothing.
    """
    P = np.asarray(front, dtype=float).reshape(-1, 2)
    r1, r2 = float(ref[0]), float(ref[1])
    P = P[(P[:, 0] < r1) & (P[:, 1] < r2)]
    if len(P) == 0:
        return 0.0
    P = P[np.lexsort((P[:, 1], P[:, 0]))]
    area, ceiling = 0.0, r2
    for f1, f2 in P:
        if f2 < ceiling:
            area += (r1 - f1) * (ceiling - f2)
            ceiling = f2
    return area


def detect_stagnation(hv_history, n_last: int, tol: float) -> bool:
    if len(hv_history) < n_last + 1:
        return False
    return abs(hv_history[-1] - hv_history[-1 - n_last]) < tol


def _objectives_of(front) -> np.ndarray:
    if isinstance(front, np.ndarray):
        return front.reshape(-1, 2).astype(float)
    return np.array([ind.objectives if isinstance(ind, Individual) else ind for ind in front],
                    dtype=float).reshape(-1, 2)


def _best_f1_index(F: np.ndarray) -> int:
    return int(np.lexsort((np.arange(len(F)), F[:, 1], F[:, 0]))[0])


def knee_index(front) -> int:
    """Index of the knee: max perpendicular distance to the line joining the extremes.

    Objectives are min-max normalized over the front first. Fronts of two or
    fewer points, or with a flat objective, yield the best-f1 point.
    """
    F = _objectives_of(front)
    if len(F) <= 2:
        return _best_f1_index(F)
    lo, hi = F.min(axis=0), F.max(axis=0)
    span = hi - lo
    if np.any(span <= 0):
        return _best_f1_index(F)
    N = (F - lo) / span
    a = N[_best_f1_index(N)]
    b = N[int(np.lexsort((np.arange(len(N)), N[:, 0], N[:, 1]))[0])]
    direction = b - a
    length = float(np.hypot(*direction))
    if length == 0:
        return _best_f1_index(F)
    rel = N - a
    dist = np.abs(rel[:, 0] * direction[1] - rel[:, 1] * direction[0]) / length
    best = dist.max()
    ties = np.flatnonzero(np.isclose(dist, best, rtol=0.0, atol=1e-12))
    return int(ties[_best_f1_index(F[ties])])


def knee_point(front):
    return front[knee_index(front)]


def select_representative(front, strategy: str = "knee"):
    """Pick one member of a non-dominated front: the knee or the max-O1 extreme."""
    if strategy == "knee":
        return knee_point(front)
    if strategy == "max_o1":
        return front[_best_f1_index(_objectives_of(front))]
    raise ValueError(f"unknown strategy {strategy!r}")


def random_streams(seed: int, n: int = 3) -> list[np.random.Generator]:
    """Independent named sub-streams (init, variation, clustering) from one seed."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(int(seed)).spawn(n)]


# search engine ------------------------------------------------------------------


class _Evaluator:
    def __init__(self, model: MlpModel, schema: FeatureSchema):
        if model.input_width != schema.width:
            raise DimensionMismatch(f"model input width {model.input_width} != schema width {schema.width}")
        self.model = model
        self.schema = schema
        self.blocks = schema.blocks()
        self.evaluations = 0

    def encode(self, configs) -> np.ndarray:
        return encode_batch(configs, self.schema, check=False)

    def probabilities(self, X: np.ndarray) -> np.ndarray:
        self.evaluations += len(X)
        return predict(self.model, X)

    def saliency(self, configs) -> np.ndarray:
        return aggregate_saliency(input_gradient(self.model, self.encode(configs)), self.blocks)


def _check_inputs(model, schema, seeds):
    if not seeds:
        raise EmptySeedSet("no failing seed scenarios to initialize the population")
    if model.input_width != schema.width:
        raise DimensionMismatch(f"model input width {model.input_width} != schema width {schema.width}")
    for c in seeds:
        schema.check(c)


def _initial_configs(seeds, schema, size, rng):
    uniform = np.full(len(schema), 1.0 / len(schema))
    picks = rng.integers(len(seeds), size=size)
    return [moea.mutate(seeds[int(i)], uniform, schema, rng) for i in picks]


def _breed(pop, size, cfg, schema, evaluator, rng, select):
    """Tournament, crossover with probability CR, then saliency-guided mutation of both children."""
    children = []
    while len(children) < size:
        p1, p2 = select(pop, rng), select(pop, rng)
        if rng.random() < cfg.crossover_rate:
            o1, o2 = moea.single_point_crossover(p1.config, p2.config, schema, rng)
        else:
            o1, o2 = p1.config, p2.config
        children.extend((o1, o2))
    children = children[:size]
    weights = evaluator.saliency(children)
    return [moea.mutate(c, w, schema, rng, cfg.mutation_breadth) for c, w in zip(children, weights)]


def _front0_hv(pop, ref) -> float:
    return hypervolume_2d([ind.objectives for ind in pop if ind.rank == 0], ref)


def run_search(cfg: SearchConfig, model: MlpModel, schema: FeatureSchema, seeds) -> SearchResult:
    """Restart-based multi-objective test generation.

    Each of ``cfg.test_runs`` runs re-seeds a population from the failing
    ``seeds`` (each sample mutated once), evolves it against the archive as it
    stood at run start, and appends one representative of the final first
    front when the front-0 hypervolume stagnates or the generation budget ends.
    """
    seeds = list(seeds)
    _check_inputs(model, schema, seeds)
    init_rng, var_rng, cluster_rng = random_streams(cfg.seed)
    ev = _Evaluator(model, schema)
    archive: list[ArchiveEntry] = []
    archive_rows: list[np.ndarray] = []
    log = SearchLog()
    start = time.perf_counter()

    def evaluate(configs, div, generation):
        X = ev.encode(configs)
        probs = ev.probabilities(X)
        divs = div.scores(X)
        f1, f2 = objective_transform(probs, divs)
        return [Individual(c, np.array([a, b]), encoded=x, probability=float(p), diversity=float(d),
                           generation=generation)
                for c, x, p, d, a, b in zip(configs, X, probs, divs, f1, f2)]

    for run in range(cfg.test_runs):
        div = ArchiveDiversity(np.array(archive_rows), cfg.diversity,
                               seed=int(cluster_rng.integers(2**31)), width=schema.width)
        pop = evaluate(_initial_configs(seeds, schema, cfg.population_size, init_rng), div, 0)
        moea.assign_rank_and_keys(pop, cfg.algorithm)
        hv = [_front0_hv(pop, cfg.reference_point)]
        log.rows.append((run, 0, hv[-1], ev.evaluations, len(archive)))
        gen = 0
        while gen < cfg.generations:
            gen += 1
            kids = evaluate(_breed(pop, cfg.population_size, cfg, schema, ev, var_rng,
                                   moea.tournament_select), div, gen)
            pop = moea.elitism(pop + kids, cfg.population_size, cfg.algorithm)
            hv.append(_front0_hv(pop, cfg.reference_point))
            log.rows.append((run, gen, hv[-1], ev.evaluations, len(archive)))
            if detect_stagnation(hv, cfg.n_last, cfg.tol):
                break
        front = [ind for ind in pop if ind.rank == 0]
        best = select_representative(front, cfg.strategy)
        archive.append(ArchiveEntry(best.config, best.probability, best.diversity, run,
                                    best.generation, ev.evaluations))
        archive_rows.append(best.encoded)
        log.selection_seconds.append(time.perf_counter() - start)
    return SearchResult(archive, log)


def _fitness_select(pop, rng):
    a = pop[int(rng.integers(len(pop)))]
    b = pop[int(rng.integers(len(pop)))]
    if a.probability != b.probability:
        return a if a.probability > b.probability else b
    return a if rng.random() < 0.5 else b


def run_baseline_ga(cfg: SearchConfig, model: MlpModel, schema: FeatureSchema, seeds) -> SearchResult:
    """Single-objective GA maximizing predicted failure probability.

    Same seeding, variation operators, restarts and budget as :func:`run_search`;
    survival keeps the ``PS`` fittest. Stagnation is tested on the one-objective
    hypervolume ``1.2 - min f1`` (a shift of the best fitness), which is what
    the log's hypervolume column holds.
    """
    seeds = list(seeds)
    _check_inputs(model, schema, seeds)
    init_rng, var_rng, _ = random_streams(cfg.seed)
    ev = _Evaluator(model, schema)
    archive: list[ArchiveEntry] = []
    log = SearchLog()
    start = time.perf_counter()
    ref1 = cfg.reference_point[0]

    def evaluate(configs, generation):
        X = ev.encode(configs)
        probs = ev.probabilities(X)
        return [Individual(c, np.array([1.0 - p]), encoded=x, probability=float(p), generation=generation)
                for c, x, p in zip(configs, X, probs)]

    def survive(pop):
        order = sorted(range(len(pop)), key=lambda i: -pop[i].probability)
        return [pop[i] for i in order[:cfg.population_size]]

    for run in range(cfg.test_runs):
        pop = survive(evaluate(_initial_configs(seeds, schema, cfg.population_size, init_rng), 0))
        hv = [ref1 - (1.0 - pop[0].probability)]
        log.rows.append((run, 0, hv[-1], ev.evaluations, len(archive)))
        gen = 0
        while gen < cfg.generations:
            gen += 1
            kids = evaluate(_breed(pop, cfg.population_size, cfg, schema, ev, var_rng, _fitness_select), gen)
            pop = survive(pop + kids)
            hv.append(ref1 - (1.0 - pop[0].probability))
            log.rows.append((run, gen, hv[-1], ev.evaluations, len(archive)))
            if detect_stagnation(hv, cfg.n_last, cfg.tol):
                break
        best = pop[0]
        archive.append(ArchiveEntry(best.config, best.probability, math.nan, run, best.generation,
                                    ev.evaluations))
        log.selection_seconds.append(time.perf_counter() - start)
    return SearchResult(archive, log)


# IO -----------------------------------------------------------------------------


def archive_to_jsonl(archive, schema: FeatureSchema) -> str:
    lines = []
    for e in archive:
        doc = e.to_json(schema)
        if isinstance(doc["diversity"], float) and math.isnan(doc["diversity"]):
            doc["diversity"] = None
        lines.append(json.dumps(doc))
    return "".join(line + "\n" for line in lines)


def archive_from_jsonl(text: str, schema: FeatureSchema) -> list[ArchiveEntry]:
    out = []
    for line in text.splitlines():
        if not line.strip():
            continue
        doc = json.loads(line)
        div = doc.get("diversity")
        out.append(ArchiveEntry(config_from_json(doc["config"], schema), float(doc["probability"]),
                                math.nan if div is None else float(div), int(doc["run"]),
                                int(doc["generation"]), int(doc["evaluations"])))
    return out


def config_as_dict(cfg: SearchConfig) -> dict:
    d = asdict(cfg)
    d["reference_point"] = list(cfg.reference_point)
    return d
