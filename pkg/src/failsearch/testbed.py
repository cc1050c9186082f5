"""Synthetic environments with analytic agents and ground-truth failure oracles.

``ToyParkingEnv``
    Twenty slots in two facing rows (lanes 0-9 on top, 10-19 below). The
    agent drives at unit speed; each step its heading turns toward the goal
    slot by at most ``turn_rate`` radians. A run fails on coming within
    ``collision_radius`` of an occupied slot center, or on not getting within
    ``goal_tolerance`` of the goal within ``max_steps``. Typical failures are
    clipping a slot next to the goal on a shallow approach, swinging into the
    opposite row during a U-turn, and orbiting a goal that sits inside the
    turning circle.

``RidgeWalkerEnv``
    A scalar height relaxes from its standing value toward a target that
    drops only when the config lies in one of two concentric ellipsoidal
    shells. With ``q(c) = sqrt(sum((c_i / axes_i)^2))`` the failure set is
    exactly ``inner[0] <= q < inner[1]`` or ``outer[0] <= q < outer[1]``; the
    two shells fall at different speeds, so they give two trace shapes.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .scenario import (FeatureSchema, ScenarioConfig, encode_batch, parking_schema,
                       sample_config, walker_schema)


@dataclass(frozen=True)
class ExecutionRecord:
    config: ScenarioConfig
    failed: bool
    trajectory: np.ndarray
    evaluations: int = 0
    wall_clock: float = 0.0
    reason: str | None = None
    min_obstacle_distance: float = math.inf


# parking --------------------------------------------------------------------------


@dataclass(frozen=True)
class ToyParkingEnv:
    lanes: int = 20
    slot_spacing: float = 3.0
    row_offset: float = 8.0
    collision_radius: float = 1.2
    goal_tolerance: float = 0.8
    turn_rate: float = 0.25
    speed: float = 1.0
    max_steps: int = 60
    schema: FeatureSchema = field(default_factory=parking_schema, compare=False)

    def __post_init__(self):
        if self.collision_radius <= 0:
            raise ValueError("collision radius must be positive")
        if self.lanes % 2:
            raise ValueError("lanes are split into two equal rows")

    @property
    def name(self) -> str:
        return "parking"

    def slot_centers(self) -> np.ndarray:
        per_row = self.lanes // 2
        xs = (np.arange(per_row) - (per_row - 1) / 2) * self.slot_spacing
        top = np.stack([xs, np.full(per_row, self.row_offset)], axis=1)
        bottom = np.stack([xs, np.full(per_row, -self.row_offset)], axis=1)
        return np.concatenate([top, bottom])


def _wrap(a):
    return (a + math.pi) % (2 * math.pi) - math.pi


def simulate_parking(env: ToyParkingEnv, config: ScenarioConfig) -> ExecutionRecord:
    env.schema.check(config)
    centers = env.slot_centers()
    goal = centers[config["goal_lane_idx"]]
    obstacles = centers[list(config["parked_vehicles_lane_indices"])]
    x, y = config["position_ego"]
    theta = config["heading_ego"]
    traj = [(x, y)]
    min_obs = math.inf
    failed, reason = True, "timeout"

    def obstacle_distance(px, py):
        if len(obstacles) == 0:
            return math.inf
        return float(np.min(np.hypot(obstacles[:, 0] - px, obstacles[:, 1] - py)))

    min_obs = obstacle_distance(x, y)
    if min_obs < env.collision_radius:
        return ExecutionRecord(config, True, np.array(traj), reason="collision", min_obstacle_distance=min_obs)
    for _ in range(env.max_steps):
        bearing = math.atan2(goal[1] - y, goal[0] - x)
        theta += max(-env.turn_rate, min(env.turn_rate, _wrap(bearing - theta)))
        x += env.speed * math.cos(theta)
        y += env.speed * math.sin(theta)
        traj.append((x, y))
        d = obstacle_distance(x, y)
        min_obs = min(min_obs, d)
        if d < env.collision_radius:
            reason = "collision"
            break
        if math.hypot(goal[0] - x, goal[1] - y) <= env.goal_tolerance:
            failed, reason = False, None
            break
    return ExecutionRecord(config, failed, np.array(traj), reason=reason, min_obstacle_distance=min_obs)


# walker ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RidgeWalkerEnv:
    d: int = 4
    axes: tuple = (1.0, 0.9, 0.8, 1.0)
    inner: tuple = (0.30, 0.50)
    outer: tuple = (0.75, 0.95)
    standing_height: float = 1.2
    fall_threshold: float = 0.8
    inner_rate: float = 0.35
    outer_rate: float = 0.12
    fallen_height: float = 0.2
    wobble: float = 0.04
    max_steps: int = 40

    def __post_init__(self):
        if self.fall_threshold <= 0:
            raise ValueError("fall threshold must be positive")
        if len(self.axes) != self.d:
            raise ValueError("need one ellipsoid axis per dimension")

    @property
    def name(self) -> str:
        return "walker"

    @property
    def schema(self) -> FeatureSchema:
        return walker_schema(self.d)

    def radius(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.sqrt(((X / np.asarray(self.axes)) ** 2).sum(axis=1))

    def in_failure_region(self, X) -> np.ndarray:
        q = self.radius(X)
        return ((self.inner[0] <= q) & (q < self.inner[1])) | ((self.outer[0] <= q) & (q < self.outer[1]))

    def failure_volume_fraction(self) -> float:
        """Exact failure rate under uniform sampling of ``[-1, 1]^d`` (shells lie inside the box)."""
        unit_ball = math.pi ** (self.d / 2) / math.gamma(self.d / 2 + 1)
        scale = unit_ball * float(np.prod(self.axes))
        vol = sum(hi ** self.d - lo ** self.d for lo, hi in (self.inner, self.outer))
        return scale * vol / 2.0 ** self.d


def _walker_vector(config) -> np.ndarray:
    return np.concatenate([np.atleast_1d(config["qpos"]), np.atleast_1d(config["qvel"])]).astype(float)


def walker_heights(env: RidgeWalkerEnv, X) -> np.ndarray:
    """Height traces, shape ``(n, max_steps + 1)``, for a batch of config vectors."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    q = env.radius(X)
    in_inner = (env.inner[0] <= q) & (q < env.inner[1])
    in_outer = (env.outer[0] <= q) & (q < env.outer[1])
    target = np.where(in_inner | in_outer, env.fallen_height, env.standing_height)
    rate = np.where(in_inner, env.inner_rate, env.outer_rate)
    phase = X @ np.linspace(1.0, 2.0, X.shape[1])
    h = np.full(len(X), env.standing_height)
    out = [h]
    for t in range(1, env.max_steps + 1):
        h = h + rate * (target - h)
        out.append(h + env.wobble * np.sin(0.5 * t + phase) * (target == env.standing_height))
    return np.stack(out, axis=1)


def simulate_walker(env: RidgeWalkerEnv, config: ScenarioConfig) -> ExecutionRecord:
    env.schema.check(config)
    heights = walker_heights(env, _walker_vector(config)[None, :])[0]
    below = np.flatnonzero(heights < env.fall_threshold)
    if below.size:
        return ExecutionRecord(config, True, heights[: below[0] + 1], reason="fall")
    return ExecutionRecord(config, False, heights)


# environment-agnostic helpers -------------------------------------------------------------


def make_env(name: str):
    if name == "parking":
        return ToyParkingEnv()
    if name == "walker":
        return RidgeWalkerEnv()
    raise ValueError(f"unknown environment {name!r}")


def simulate(env, config) -> ExecutionRecord:
    if isinstance(env, ToyParkingEnv):
        return simulate_parking(env, config)
    if isinstance(env, RidgeWalkerEnv):
        return simulate_walker(env, config)
    raise TypeError(f"unsupported environment {type(env).__name__}")


@dataclass
class TrainingLog:
    configs: list
    labels: np.ndarray

    @property
    def failing(self) -> list:
        return [c for c, y in zip(self.configs, self.labels) if y == 1]

    def encoded(self, schema: FeatureSchema) -> np.ndarray:
        return encode_batch(self.configs, schema, check=False)


def generate_training_log(env, n: int, seed) -> TrainingLog:
    """Uniformly sampled configs labelled by executing them (1 = failed)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    configs = [sample_config(env.schema, rng) for _ in range(n)]
    labels = np.array([int(simulate(env, c).failed) for c in configs])
    return TrainingLog(configs, labels)


def execute_archive(env, configs, evaluations=None, wall_clock=None) -> list[ExecutionRecord]:
    """Run archived scenarios in order, stamping each record with the search counters."""
    out = []
    for i, c in enumerate(configs):
        rec = simulate(env, c)
        ev = evaluations[i] if evaluations is not None else i + 1
        wc = wall_clock[i] if wall_clock is not None else 0.0
        out.append(ExecutionRecord(rec.config, rec.failed, rec.trajectory, int(ev), float(wc),
                                   rec.reason, rec.min_obstacle_distance))
    return out


def now() -> float:
    return time.perf_counter()


# campaigns ------------------------------------------------------------------------

METRICS = ("total_failures", "unique_failures", "output_entropy", "unique_input_clusters",
           "input_entropy", "ttf_evaluations", "ttf_seconds")


@dataclass(frozen=True)
class CampaignPlan:
    """Approaches x seeds grid on one environment at a shared budget.

    Approaches are ``"baseline"`` or ``"<algorithm>-<diversity>-<strategy>"``,
    e.g. ``"agemoea-euclidean-knee"``.
    """

    env: str = "parking"
    approaches: tuple = ("agemoea-euclidean-knee", "baseline")
    seeds: tuple = tuple(range(20))
    test_runs: int = 10
    generations: int = 50
    population_size: int = 50
    crossover_rate: float = 0.75
    tol: float = 5e-6
    n_last: int = 10
    training_samples: int = 3000
    train_epochs: int = 60

    def __post_init__(self):
        from .errors import ValidationError

        object.__setattr__(self, "approaches", tuple(self.approaches))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if len(self.approaches) < 2:
            raise ValidationError("approaches: a campaign compares at least 2 approaches")
        if len(self.seeds) < 2:
            raise ValidationError("seeds: a campaign needs at least 2 seeds")
        if len(set(self.approaches)) != len(self.approaches):
            raise ValidationError("approaches: duplicate names")
        for a in self.approaches:
            parse_approach(a)
        make_env(self.env)

    @classmethod
    def from_json(cls, doc) -> "CampaignPlan":
        from .errors import ValidationError

        if not isinstance(doc, dict):
            raise ValidationError("plan: expected a JSON object")
        known = set(cls.__dataclass_fields__)
        budget = doc.get("budget", {})
        if not isinstance(budget, dict):
            raise ValidationError("budget: expected a JSON object")
        merged = {k: v for k, v in doc.items() if k != "budget"}
        merged.update(budget)
        for key in merged:
            if key not in known:
                raise ValidationError(f"{key}: unknown plan field")
        for key in ("approaches", "seeds"):
            if key in merged and not isinstance(merged[key], list):
                raise ValidationError(f"{key}: expected a list")
        for key in ("test_runs", "generations", "population_size", "n_last", "training_samples",
                    "train_epochs"):
            if key in merged and (not isinstance(merged[key], int) or merged[key] < 1):
                raise ValidationError(f"{key}: expected a positive integer")
        try:
            return cls(**merged)
        except ValueError as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ValidationError(f"env: {exc}") from exc


def parse_approach(name: str):
    """``"baseline"`` -> None; otherwise ``(algorithm, diversity, strategy)``."""
    from .errors import ValidationError
    from .search import ALGORITHMS, DIVERSITY_METRICS, STRATEGIES

    if name == "baseline":
        return None
    parts = name.split("-")
    if (len(parts) != 3 or parts[0] not in ALGORITHMS or parts[1] not in DIVERSITY_METRICS
            or parts[2] not in STRATEGIES):
        raise ValidationError(f"approaches: cannot parse {name!r}; expected 'baseline' or "
                              f"'<{'|'.join(ALGORITHMS)}>-<{'|'.join(DIVERSITY_METRICS)}>-"
                              f"<{'|'.join(STRATEGIES)}>'")
    return tuple(parts)


@dataclass
class CampaignReport:
    rows: list  # dicts: approach, seed, + METRICS
    summary: dict
    comparisons: dict

    def to_json(self) -> dict:
        return {"summary": self.summary, "comparisons": self.comparisons}

    def to_csv(self) -> str:
        import csv
        import io

        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["approach", "seed", *METRICS])
        for r in self.rows:
            w.writerow([r["approach"], r["seed"], *(repr(float(r[m])) for m in METRICS)])
        return buf.getvalue()

    def metric(self, approach: str, name: str) -> list:
        return [r[name] for r in self.rows if r["approach"] == approach]


def train_surrogate_for(env, seed: int, n: int, epochs: int):
    """Fresh training log and surrogate for one campaign seed."""
    from .surrogate import TrainConfig, train

    log = generate_training_log(env, n, np.random.SeedSequence([int(seed), 1]).generate_state(1)[0])
    model = train(log.encoded(env.schema), log.labels, TrainConfig(epochs=epochs, seed=int(seed)))
    return log, model


def run_cell(env, approach: str, seed: int, plan: CampaignPlan, model, seeds_configs) -> dict:
    from . import analysis
    from .search import SearchConfig, run_baseline_ga, run_search

    parsed = parse_approach(approach)
    common = dict(test_runs=plan.test_runs, generations=plan.generations,
                  population_size=plan.population_size, crossover_rate=plan.crossover_rate,
                  tol=plan.tol, n_last=plan.n_last, seed=int(seed))
    if parsed is None:
        result = run_baseline_ga(SearchConfig(**common), model, env.schema, seeds_configs)
    else:
        algorithm, diversity, strategy = parsed
        cfg = SearchConfig(algorithm=algorithm, diversity=diversity, strategy=strategy, **common)
        result = run_search(cfg, model, env.schema, seeds_configs)
    records = execute_archive(env, result.configs, [e.evaluations for e in result.archive],
                              result.log.selection_seconds)
    row = {"approach": approach, "seed": int(seed)}
    row.update(analysis.run_metrics(records, env.schema, seed=int(seed)))
    return row


def summarize(rows, approaches) -> tuple[dict, dict]:
    from . import analysis

    summary = {}
    for m in METRICS:
        summary[m] = {}
        for a in approaches:
            med, iqr = analysis.median_iqr([r[m] for r in rows if r["approach"] == a])
            summary[m][a] = {"median": med, "iqr": iqr}
    comparisons = {}
    for m in METRICS:
        comparisons[m] = {}
        for i, a in enumerate(approaches):
            for b in approaches[i + 1:]:
                xa = [r[m] for r in rows if r["approach"] == a and not math.isnan(r[m])]
                xb = [r[m] for r in rows if r["approach"] == b and not math.isnan(r[m])]
                entry = {"p_value": None, "a12": None}
                if xa and xb:
                    entry["a12"] = analysis.vargha_delaney_a12(xa, xb)
                if len(xa) >= analysis.MIN_WILCOXON and len(xb) >= analysis.MIN_WILCOXON:
                    entry["p_value"] = analysis.wilcoxon_rank_sum(xa, xb)
                comparisons[m][f"{a} vs {b}"] = entry
    return summary, comparisons


def run_campaign(plan: CampaignPlan) -> CampaignReport:
    """Train, search, execute and measure every (approach, seed) cell.

    All approaches of one seed share that seed's training log and surrogate, so
    comparisons are paired at equal budget.
    """
    env = make_env(plan.env)
    rows = []
    for seed in plan.seeds:
        log, model = train_surrogate_for(env, seed, plan.training_samples, plan.train_epochs)
        failing = log.failing
        for approach in plan.approaches:
            rows.append(run_cell(env, approach, seed, plan, model, failing))
    summary, comparisons = summarize(rows, list(plan.approaches))
    return CampaignReport(rows, summary, comparisons)
