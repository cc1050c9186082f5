import math

import numpy as np
import pytest

from failsearch import testbed
from failsearch.scenario import Feature, FeatureSchema

FIG1A = {
    "env_config": {
        "goal_lane_idx": 0,
        "heading_ego": 0.96,
        "parked_vehicles_lane_indices": [1, 3, 6, 8, 9, 10, 11, 12, 14, 18],
        "position_ego": [1.83, -4.96],
    }
}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def real_schema():
    return FeatureSchema((Feature("x", "real", low=0.0, high=10.0),))


@pytest.fixture
def mixed_schema():
    """One feature of every kind, for generic operator tests."""
    return FeatureSchema((
        Feature("speed", "real", low=0.0, high=10.0),
        Feature("lanes", "integer", low=1, high=4),
        Feature("night", "binary"),
        Feature("weather", "categorical", n_categories=4),
        Feature("pos", "real", low=(-1.0, 0.0), high=(1.0, 5.0), size=2),
        Feature("cars", "variable-list", domain=8, max_length=3),
        Feature("road", "variable-list", max_length=4, encoding="positional", commands=3,
                low=1.0, high=50.0),
    ))


@pytest.fixture(scope="session")
def parking_env():
    return testbed.ToyParkingEnv()


@pytest.fixture(scope="session")
def parking_surrogate(parking_env):
    """Small training log and surrogate shared by the search tests."""
    return testbed.train_surrogate_for(parking_env, seed=0, n=1500, epochs=20)


def fig1a_doc():
    return {"env_config": dict(FIG1A["env_config"])}


TAU = 2 * math.pi


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    # exposes the call-phase outcome to fixtures that report on teardown
    outcome = yield
    rep = outcome.get_result()
    setattr(item, "rep_" + rep.when, rep)
