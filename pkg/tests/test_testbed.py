import csv
import io
import math

import numpy as np
import pytest

from failsearch import analysis
from failsearch.errors import InvalidConfig, ValidationError
from failsearch.scenario import ScenarioConfig, config_from_json, sample_config
from failsearch.testbed import (CampaignPlan, RidgeWalkerEnv, ToyParkingEnv, execute_archive,
                                generate_training_log, make_env, parse_approach, run_campaign,
                                simulate, simulate_parking, simulate_walker, walker_heights)

from conftest import fig1a_doc


def parking(goal, heading, parked=(), pos=(0.0, 0.0)):
    return ScenarioConfig(goal_lane_idx=goal, heading_ego=heading,
                          parked_vehicles_lane_indices=tuple(sorted(parked)), position_ego=pos)


def slot_x(env, lane):
    return float(env.slot_centers()[lane][0])


def test_slot_geometry():
    env = ToyParkingEnv()
    c = env.slot_centers()
    assert c.shape == (20, 2) and len({tuple(p) for p in c}) == 20


def test_aligned_empty_lot_succeeds():
    env = ToyParkingEnv()
    r = simulate_parking(env, parking(4, math.pi / 2, pos=(slot_x(env, 4), 0.0)))
    assert not r.failed and r.reason is None


def test_obstacle_on_straight_path_collides():
    env = ToyParkingEnv(turn_rate=0.0)
    # drives straight up into occupied slot 5 while aiming at slot 4
    r = simulate_parking(env, parking(4, math.pi / 2, parked=(5,), pos=(slot_x(env, 5), 0.0)))
    assert r.failed and r.reason == "collision"
    assert r.min_obstacle_distance < env.collision_radius


@pytest.mark.parametrize("eps,expected", [(1e-3, False), (-1e-3, True)])
def test_obstacle_offset_from_path(eps, expected):
    # neighbour slot sits exactly radius + eps from the straight approach to the goal
    env = ToyParkingEnv(slot_spacing=1.2 + eps)
    cfg = parking(4, math.pi / 2, parked=(3,), pos=(slot_x(env, 4), 0.0))
    r = simulate_parking(env, cfg)
    obstacle = env.slot_centers()[3]
    oracle = np.min(np.hypot(r.trajectory[:, 0] - obstacle[0], r.trajectory[:, 1] - obstacle[1]))
    assert math.isclose(oracle, r.min_obstacle_distance, rel_tol=1e-12)
    assert r.failed is expected


def test_fig1a_config_is_executable():
    env = ToyParkingEnv()
    r = simulate_parking(env, config_from_json(fig1a_doc(), env.schema))
    assert r.trajectory.shape[1] == 2


def test_parking_invariants():
    env = ToyParkingEnv()
    rng = np.random.default_rng(0)
    reasons = set()
    for _ in range(300):
        c = sample_config(env.schema, rng)
        a, b = simulate_parking(env, c), simulate_parking(env, c)
        assert a.failed == b.failed and np.array_equal(a.trajectory, b.trajectory)
        assert len(a.trajectory) - 1 <= env.max_steps
        if a.reason == "collision":
            assert a.min_obstacle_distance < env.collision_radius
        assert a.failed == (a.reason is not None)
        reasons.add(a.reason)
    assert {"collision", "timeout", None} <= reasons


def test_parking_rejects_invalid():
    env = ToyParkingEnv()
    with pytest.raises(InvalidConfig):
        simulate_parking(env, parking(3, 0.0, parked=(3,)))
    with pytest.raises(ValueError):
        ToyParkingEnv(collision_radius=0.0)


def walker(v):
    v = tuple(float(x) for x in v)
    return ScenarioConfig(qpos=v[:2], qvel=v[2:])


def test_walker_examples():
    env = RidgeWalkerEnv()
    assert not simulate_walker(env, walker([0, 0, 0, 0])).failed
    inside = walker([0.4, 0, 0, 0])
    assert env.in_failure_region([0.4, 0, 0, 0])[0]
    r = simulate_walker(env, inside)
    assert r.failed and r.reason == "fall"
    assert r.trajectory[-1] < env.fall_threshold <= r.trajectory[:-1].min()


def test_walker_failure_volume_monte_carlo():
    env = RidgeWalkerEnv()
    X = np.random.default_rng(7).uniform(-1, 1, size=(100_000, env.d))
    heights = walker_heights(env, X)
    rate = (heights.min(axis=1) < env.fall_threshold).mean()
    frac = env.failure_volume_fraction()
    assert abs(rate - frac) <= 0.02 * frac
    # the simulated oracle and the documented region agree point by point
    assert np.array_equal(heights.min(axis=1) < env.fall_threshold, env.in_failure_region(X))


def test_walker_has_two_output_modes():
    env = RidgeWalkerEnv()
    rng = np.random.default_rng(3)
    recs = []
    for radius in [0.4] * 6 + [0.85] * 6:
        d = rng.normal(size=4)
        d /= np.linalg.norm(d / np.asarray(env.axes))
        recs.append(simulate_walker(env, walker(np.clip(radius * d, -1, 1))))
    assert all(r.failed for r in recs)
    assert analysis.unique_failures(recs) == 2


def test_training_log():
    env = RidgeWalkerEnv()
    with pytest.raises(ValueError):
        generate_training_log(env, 0, 1)
    log = generate_training_log(env, 4000, 11)
    assert all(bool(y) == simulate(env, c).failed for c, y in zip(log.configs[:200], log.labels))
    p = env.failure_volume_fraction()
    se = math.sqrt(p * (1 - p) / 4000)
    assert abs(log.labels.mean() - p) <= 3 * se
    assert len(log.failing) == int(log.labels.sum())
    again = generate_training_log(env, 50, 11)
    assert again.configs == log.configs[:50]


def test_execute_archive_stamps_counters():
    env = make_env("walker")
    cs = [walker([0.4, 0, 0, 0]), walker([0, 0, 0, 0])]
    recs = execute_archive(env, cs, [10, 20], [0.5, 0.9])
    assert [(r.evaluations, r.wall_clock, r.failed) for r in recs] == [(10, 0.5, True), (20, 0.9, False)]
    with pytest.raises(ValueError):
        make_env("humanoid")


def test_plan_validation():
    with pytest.raises(ValidationError):
        CampaignPlan(approaches=("baseline",))
    with pytest.raises(ValidationError):
        CampaignPlan(seeds=(1,))
    with pytest.raises(ValidationError) as info:
        CampaignPlan.from_json({"approaches": ["baseline", "agemoea-euclidean-knee"],
                                "budget": {"test_runs": 0}})
    assert "test_runs" in str(info.value)
    with pytest.raises(ValidationError) as info:
        CampaignPlan.from_json({"aproaches": []})
    assert "aproaches" in str(info.value)
    with pytest.raises(ValidationError):
        parse_approach("agemoea-cosine-knee")
    assert parse_approach("nsga2-pca-max_o1") == ("nsga2", "pca", "max_o1")


def test_small_campaign_bookkeeping():
    plan = CampaignPlan(env="walker", approaches=("nsga2-euclidean-knee", "baseline"), seeds=(0, 1, 2),
                        test_runs=3, generations=3, population_size=8, training_samples=400,
                        train_epochs=5)
    report = run_campaign(plan)
    assert len(report.rows) == 6
    rows = list(csv.DictReader(io.StringIO(report.to_csv())))
    assert len(rows) == 6
    for approach in plan.approaches:
        vals = [float(r["total_failures"]) for r in rows if r["approach"] == approach]
        assert report.summary["total_failures"][approach]["median"] == float(np.median(vals))
    cmp = report.comparisons["total_failures"]["nsga2-euclidean-knee vs baseline"]
    # three seeds are below the rank-sum minimum, so only the effect size is reported
    assert cmp["p_value"] is None and 0.0 <= cmp["a12"] <= 1.0
