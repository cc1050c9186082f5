# %% [markdown]
# Searching for diverse parking failures
#
# Generate a labelled training log on the toy parking lot, fit the surrogate,
# then let the multi-objective search pick likely-failing yet diverse
# scenarios.  Each archived scenario is executed to see whether it really fails.

# %%
import numpy as np

from failsearch import analysis, search, surrogate, testbed
from failsearch.scenario import config_to_json

env = testbed.ToyParkingEnv()
log = testbed.generate_training_log(env, 3000, seed=0)
print("training log:", len(log.configs), "scenarios,", int(log.labels.sum()), "failing")

# %%
model = surrogate.train(log.encoded(env.schema), log.labels, surrogate.TrainConfig(epochs=60))
print("train accuracy %.3f" % surrogate.accuracy(model, log.encoded(env.schema), log.labels))

# %% [markdown]
# Ten restarts, each archiving the knee of the final front.

# %%
cfg = search.SearchConfig(test_runs=10, seed=0)
result = search.run_search(cfg, model, env.schema, log.failing)
for e in result.archive[:3]:
    print(round(e.probability, 3), round(e.diversity, 2), config_to_json(e.config, env.schema))

# %%
records = testbed.execute_archive(env, [e.config for e in result.archive],
                                  [e.evaluations for e in result.archive])
print("reasons:", [r.reason for r in records])
print(analysis.run_metrics(records, env.schema))

# %% [markdown]
# Front-0 hypervolume per generation of the first restart.

# %%
hv = [row[2] for row in result.log.rows if row[0] == 0]
print(np.round(hv, 3))
