# %% [markdown]
# Why a utilization target can oscillate
#
# Every bidder values a slot at exactly 100. A welfare-driven price walks to
# 100 and stays there. A utilization-driven price sees either a full block
# (price too low) or an empty one (price too high) and never settles.

# %%
import numpy as np

from feelab.experiments import BUILTIN_SCENARIOS, classify_stability, run_scenario

# %%
for scenario in ("pointmass-instability", "pointmass-undersupply"):
    for mech in ("wdpp", "udpp", "twdpp"):
        cfg = BUILTIN_SCENARIOS[scenario].with_overrides(mechanism=mech)
        trace, _ = run_scenario(cfg)
        v = classify_stability(trace, cfg.window, cfg.effective_drift_tol, cfg.smoothing_block)
        print(f"{scenario:22s} {mech:6s} {type(v).__name__:12s} last prices {np.round(trace.q[-4:], 3)}")

# %% [markdown]
# In the oscillating runs the ratio of consecutive prices only ever takes
# two values: one step up by a factor 1 + alpha * delta after a full block,
# one step down by 1 - alpha after an empty one.

# %%
cfg = BUILTIN_SCENARIOS["pointmass-instability"]
trace, _ = run_scenario(cfg)
q = trace.q[-1000:]
print("distinct step ratios:", np.unique(np.round(q[1:] / q[:-1], 12)))
