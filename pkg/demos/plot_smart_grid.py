"""
A small smart grid: learners against random prosumers
======================================================

26 buildings (20 households, 5 offices, 1 school) share a hydro-fed energy
pool. We run the daily scenario with the multi-objective sum reward and
compare the learners to agents that act uniformly at random.
"""

import numpy as np

from qdsom import build_scenario, moving_average, run

steps = 3000
results = {algo: run(build_scenario("daily", "small", "multiobj-sum", algo, seed=0, steps=steps))
           for algo in ("random", "qsom", "qdsom")}

for algo, res in results.items():
    print(f"{algo:6s} score {res.score:.4f}  ({res.metadata['wall_time']:.1f} s)")

###############################################################################
# Smoothed global reward every 500 steps. The random baseline stays flat;
# the learners improve as their maps and Q-Tables settle.

print("\nstep  " + "  ".join(f"{a:>7s}" for a in results))
smooth = {a: moving_average(r.global_rewards, 200) for a, r in results.items()}
for t in range(499, steps, 500):
    print(f"{t + 1:4d}  " + "  ".join(f"{smooth[a][t]:7.4f}" for a in results))

###############################################################################
# Per-agent rewards are difference rewards: each agent's share of the
# society-level outcome. Offices and the school need far more energy than
# households, which shows up in their rewards.

last = results["qsom"].agent_rewards[-500:].mean(axis=0)
print(f"\nmean agent reward, last 500 steps: households {last[:20].mean():.3f}, "
      f"offices {last[20:25].mean():.3f}, school {last[25]:.3f}")
