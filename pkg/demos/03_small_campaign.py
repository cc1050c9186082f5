# %% [markdown]
# Comparing approaches at equal budget
#
# A reduced campaign on the toy parking lot: knee selection, max-O1 selection
# and the single-objective GA each run on the same per-seed surrogate.  The
# full-size run lives in the acceptance suite; this one takes about a minute.

# %%
import numpy as np

from failsearch import testbed

plan = testbed.CampaignPlan(approaches=("agemoea-euclidean-knee", "agemoea-euclidean-max_o1", "baseline"),
                            seeds=tuple(range(4)), test_runs=6, generations=25, population_size=30)
report = testbed.run_campaign(plan)

# %%
# a nan TTF median means some seed never produced a real failure
for metric in ("unique_failures", "output_entropy", "input_entropy", "ttf_evaluations"):
    print(metric)
    for a in plan.approaches:
        print("  %-28s median %.1f" % (a, np.median(report.metric(a, metric))))

# %%
print(report.comparisons["input_entropy"])
