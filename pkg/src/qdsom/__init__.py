"""Q-Learning with (Dynamic) Self-Organizing Maps for continuous multi-agent control.

Subpackages by concern:

- :mod:`qdsom.topo_maps`  SOM / DSOM lattices
- :mod:`qdsom.policy`     QSOM and QDSOM learners
- :mod:`qdsom.grid_env`   smart-grid prosumer environment
- :mod:`qdsom.rewards`    reward functions and the Hoover index
- :mod:`qdsom.harness`    scenarios, the run loop, scoring
- :mod:`qdsom.cli`        command-line front end
"""

from .errors import (
    ConfigurationError, ContractViolation, IngestionError, InvalidInputError, QdsomError,
)
from .harness import RunResult, ScenarioSpec, build_scenario, moving_average, run, score
from .policy import AgentHyper, AgentMind, Population, decide, learn
from .rewards import RewardKind, agent_reward, global_reward, hoover
from .topo_maps import DsomParams, MapGrid, SomParams

__version__ = "0.1.0"

__all__ = [
    "AgentHyper", "AgentMind", "ConfigurationError", "ContractViolation", "DsomParams",
    "IngestionError", "InvalidInputError", "MapGrid", "Population", "QdsomError", "RewardKind",
    "RunResult", "ScenarioSpec", "SomParams", "agent_reward", "build_scenario", "decide",
    "global_reward", "hoover", "learn", "moving_average", "run", "score",
]
