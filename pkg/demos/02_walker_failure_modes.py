# %% [markdown]
# Counting failure modes on the ridge walker
#
# The walker falls whenever its start state lies in one of two ellipsoidal
# shells.  Inner-shell falls come quickly, outer-shell falls late, so
# clustering the height traces should find two behaviours.

# %%
import numpy as np

from failsearch import analysis, testbed

env = testbed.RidgeWalkerEnv()
print("analytic failure fraction %.4f" % env.failure_volume_fraction())

X = np.random.default_rng(0).uniform(-1, 1, size=(20000, env.d))
print("Monte Carlo estimate      %.4f" % env.in_failure_region(X).mean())

# %%
log = testbed.generate_training_log(env, 400, seed=1)
failing = [testbed.simulate(env, c) for c in log.failing]
res = analysis.cluster_failures(failing)
print("K* =", res.k, "sizes", res.counts.tolist())
print("output entropy %.1f" % analysis.entropy_from_counts(res.counts))

# %%
for k in range(res.k):
    lengths = [len(r.trajectory) for r, lab in zip(failing, res.labels) if lab == k]
    print("cluster", k, "median trace length", np.median(lengths))
