"""Surrogate-assisted multi-objective search for diverse failure scenarios of control agents.

The pipeline: sample and execute scenarios (:mod:`testbed`), fit an MLP failure
classifier (:mod:`surrogate`), search for likely-failing and mutually diverse
scenarios (:mod:`search`, built on :mod:`moea` and :mod:`diversity`), then execute
the archive and measure failure diversity (:mod:`analysis`).
"""

from .analysis import (entropy_percent, run_metrics, unique_failures, vargha_delaney_a12,
                       wilcoxon_rank_sum)
from .diversity import euclidean_diversity, fit_pca, kmeans, pca_cluster_diversity
from .errors import FailSearchError, ValidationError
from .moea import crowding_distance, fast_nondominated_sort, mutate, survival_scores
from .scenario import (Feature, FeatureSchema, ScenarioConfig, encode, parking_schema,
                       validate_repair, walker_schema)
from .search import (SearchConfig, hypervolume_2d, knee_point, run_baseline_ga, run_search,
                     select_representative)
from .surrogate import MlpModel, TrainConfig, predict, saliency, train
from .testbed import CampaignPlan, RidgeWalkerEnv, ToyParkingEnv, run_campaign

__version__ = "0.1.0"
