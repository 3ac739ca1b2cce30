"""
One learner on a two-context toy task
=====================================

Observations cluster around (0.1, 0.1) or (0.9, 0.9), each with its own
best action: (0.9, 0.1) and (0.1, 0.9). The reward is ``1 - distance`` to
the right action, scaled to [0, 1]. The agent must discretize both spaces
on its own and tie each context to the right action prototype.
"""

import numpy as np

from qdsom import AgentHyper, AgentMind, decide, learn
from qdsom.harness import moving_average

centers = np.array([[0.1, 0.1], [0.9, 0.9]])
targets = np.array([[0.9, 0.1], [0.1, 0.9]])


def train(flavor, steps=6000):
    hyper = AgentHyper.defaults(flavor, state_shape=(2, 2), action_shape=(3, 3), noise_param=0.01)
    mind = AgentMind.create(hyper, np.random.default_rng(3), obs_dim=2, action_dim=2)
    env = np.random.default_rng(4)

    def context():
        k = env.integers(2)
        return k, np.clip(centers[k] + env.normal(0.0, 0.03, 2), 0.0, 1.0)

    k, obs = context()
    rewards = np.empty(steps)
    for t in range(steps):
        trace = decide(mind, obs)
        rewards[t] = 1.0 - np.linalg.norm(trace.action - targets[k]) / np.sqrt(2)
        k, nxt = context()
        learn(mind, trace, nxt, rewards[t])
        obs = nxt
    return mind, moving_average(rewards, 500)


for flavor in ("qsom", "qdsom"):
    mind, smooth = train(flavor)
    print(f"{flavor}: trailing mean reward " + " ".join(f"{smooth[t]:.3f}" for t in range(499, 6000, 1000)))
    print("  action prototypes:", np.round(mind.action_map.prototypes, 2).tolist())

###############################################################################
# The QDSOM agent ties each context to its target. The QSOM agent does not.
# Its Action-map uses a fixed gaussian neighborhood, so every update toward
# one target also drags the neighbors of the chosen neuron. The prototypes
# move as a block and end up bunched near a single target, so one context
# is always served badly. The elastic DSOM
# neighborhood shrinks when the perturbed action is close to the chosen
# prototype, so only that neuron moves.
