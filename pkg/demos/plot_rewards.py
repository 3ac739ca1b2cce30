"""
Rewards on a hand-built grid step
=================================

Three buildings with the same hourly need. One eats well from the pool,
one eats a little, one only fills its battery.
"""

import numpy as np

from qdsom.grid_env import BuildingProfile, EnvConfig, env_step, init_env
from qdsom.rewards import RewardKind, agent_rewards, global_reward, hoover

profile = BuildingProfile.from_needs("Flat", np.full(24, 1000.0))
config = EnvConfig(roster=[(profile, 3)], scarcity_factor=0.5)  # pool = 1500 Wh

# columns: consume_grid, store, consume_battery, give, buy, sell (Wh)
joint = np.array([
    [1000.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [300.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, 600.0, 0.0, 0.0, 0.0, 0.0],
])
_, snap = env_step(config, init_env(config), joint)

print(f"pool {snap.pool:.0f} Wh, drawn {joint[:, :2].sum():.0f} Wh, over-consumption {snap.over_consumption:.0f} Wh")
print(f"comforts {snap.comfort}, Hoover index {hoover(snap.comfort):.3f}")

###############################################################################
# Per-agent rewards ask "how much better is the grid because I acted?".
# The saver gets a negative over-consumption reward (it pushed the grid
# over its budget) and the equity reward tells each agent whether removing
# it would make comforts more or less equal.

print("\nreward             " + "  ".join(f"agent {i}" for i in range(3)) + "   global")
for kind in RewardKind:
    r = agent_rewards(kind, snap, t=7000)
    print(f"{kind.value:17s}  " + "  ".join(f"{v:7.3f}" for v in r) + f"   {global_reward(kind, snap, 7000):6.3f}")
