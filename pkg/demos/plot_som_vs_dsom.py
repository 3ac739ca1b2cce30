"""
SOM and DSOM under a moving data distribution
=============================================

Both maps learn a two-cluster distribution, then the clusters jump to the
other diagonal. We watch the distortion on whichever distribution is live.
"""

import numpy as np

from qdsom.topo_maps import DsomParams, MapGrid, SomParams, distortion, train_step


def mixture(rng, n, centers, sd=0.05):
    k = rng.integers(0, len(centers), n)
    return np.clip(np.asarray(centers)[k] + rng.normal(0.0, sd, (n, 2)), 0.0, 1.0)


before = [(0.25, 0.25), (0.75, 0.75)]
after = [(0.25, 0.75), (0.75, 0.25)]
probes = {"before": mixture(np.random.default_rng(1), 1000, before),
          "after": mixture(np.random.default_rng(2), 1000, after)}

###############################################################################
# Same initial grid for both maps, so only the update rule differs.

rng = np.random.default_rng(0)
start = MapGrid.random(12, 12, 2, rng)
stream = np.concatenate([mixture(rng, 5000, before), mixture(rng, 5000, after)])

maps = {"SOM ": (start.copy(), SomParams(0.5, 1.5)),
        "DSOM": (start.copy(), DsomParams(0.8, 1.0))}

print("step   " + "   ".join(f"{name} distortion" for name in maps))
for t, x in enumerate(stream):
    live = probes["before"] if t < 5000 else probes["after"]
    if t % 1000 == 0 or t == 5000:
        print(f"{t:5d}  " + "  ".join(f"{distortion(g, live):15.2e}" for g, _ in maps.values()))
    for grid, params in maps.values():
        train_step(grid, x, params)
print("10000  " + "  ".join(f"{distortion(g, probes['after']):15.2e}" for g, _ in maps.values()))

###############################################################################
# Neither map anneals its parameters, so both stay plastic and recover
# after the jump. The SOM packs its neurons tightly onto the live clusters
# and reaches the lower distortion, but right after the jump it covers the
# new clusters badly. The DSOM moves a neuron in proportion to how badly it
# fits, keeps some neurons spread over the whole square, and so loses far
# less when the data moves.
