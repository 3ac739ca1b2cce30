"""Scenarios, the seeded decide/step/reward/learn loop, and scoring.

Random streams: every agent gets its own generator seeded with
``SeedSequence(master_seed, spawn_key=(agent_index, role))``. The spawn key
makes the streams independent of the number of agents, so adding agents
never changes the draws of existing ones.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Protocol

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigurationError, ContractViolation, InvalidInputError, QdsomError
from .grid_env import (
    ACTION_DIM, ACTION_FIELDS, OBS_DIM, EnvConfig, SmartGridEnv, StepSnapshot, bundled_profiles,
)
from .policy import FLAVORS, AgentHyper, Population
from .rewards import RewardKind, agent_rewards, global_reward
from .topo_maps import DsomParams, SomParams

log = logging.getLogger(__name__)

SIZES = {
    "small": {"Household": 20, "Office": 5, "School": 1},
    "medium": {"Household": 80, "Office": 19, "School": 1},
}
MODES = ("daily", "annual")
ALGORITHMS = FLAVORS + ("random",)

ROLE_AGENT = 0
ROLE_RANDOM = 1


def agent_rng(master_seed: int, agent: int, role: int = ROLE_AGENT) -> np.random.Generator:
    """Independent generator for one (agent, role) pair of a run."""
    if master_seed < 0:
        raise InvalidInputError(f"seeds must be nonnegative, got {master_seed}")
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(agent, role)))


# -- parameter overrides --------------------------------------------------------


def _shape(value) -> tuple[int, int]:
    if isinstance(value, str):
        parts = value.lower().split("x")
        if len(parts) != 2:
            raise ValueError(f"shape must look like 12x12, got {value!r}")
        return int(parts[0]), int(parts[1])
    rows, cols = value
    return int(rows), int(cols)


#: Overridable hyperparameters: name -> (AgentHyper field or map-param path, parser).
HYPER_PARAMS = {
    "q_learning_rate": float,
    "discount": float,
    "tau": float,
    "noise_method": str,
    "noise": float,
    "state_lr": float,
    "action_lr": float,
    "state_elasticity": float,
    "action_elasticity": float,
    "state_width": float,
    "action_width": float,
    "state_shape": _shape,
    "action_shape": _shape,
}
ENV_PARAMS = {"scarcity_factor": float, "buy_price": float, "sell_price": float}
PARAMETERS = {**HYPER_PARAMS, **ENV_PARAMS, "steps": int}


def parse_parameter(name: str, value):
    """Convert a raw (possibly string) override value to its documented type."""
    if name not in PARAMETERS:
        raise ConfigurationError(f"unknown parameter {name!r}; known: {', '.join(sorted(PARAMETERS))}")
    try:
        return PARAMETERS[name](value)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"bad value for {name}: {value!r} ({exc})") from None


def apply_hyper_overrides(hyper: AgentHyper, overrides: dict) -> AgentHyper:
    direct = {"q_learning_rate": "q_learning_rate", "discount": "discount", "tau": "boltzmann_tau",
              "noise_method": "noise_method", "noise": "noise_param",
              "state_shape": "state_shape", "action_shape": "action_shape"}
    changes = {}
    state_p, action_p = hyper.state_map_params, hyper.action_map_params
    for name, raw in overrides.items():
        value = parse_parameter(name, raw)
        if name in direct:
            changes[direct[name]] = value
        elif name in ("state_lr", "action_lr"):
            if name == "state_lr":
                state_p = replace(state_p, learning_rate=value)
            else:
                action_p = replace(action_p, learning_rate=value)
        elif name.endswith("_elasticity") or name.endswith("_width"):
            field_name = "elasticity" if name.endswith("_elasticity") else "neighborhood_width"
            wanted = DsomParams if field_name == "elasticity" else SomParams
            target = state_p if name.startswith("state") else action_p
            if not isinstance(target, wanted):
                raise ConfigurationError(f"{name} does not apply to {hyper.flavor} maps")
            target = replace(target, **{field_name: value})
            if name.startswith("state"):
                state_p = target
            else:
                action_p = target
    try:
        return replace(hyper, state_map_params=state_p, action_map_params=action_p, **changes)
    except InvalidInputError as exc:
        raise ConfigurationError(str(exc)) from None


# -- scenario -------------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioSpec:
    mode: str
    size: str
    reward: RewardKind
    algorithm: str
    steps: int
    seed: int
    hyper: AgentHyper
    env_config: EnvConfig = field(repr=False, compare=False)
    overrides: tuple = ()

    @property
    def n_agents(self) -> int:
        return self.env_config.n_agents

    def to_dict(self) -> dict:
        h = self.hyper
        return {
            "mode": self.mode,
            "size": self.size,
            "reward": self.reward.value,
            "algorithm": self.algorithm,
            "steps": self.steps,
            "seed": self.seed,
            "n_agents": self.n_agents,
            "overrides": dict(self.overrides),
            "hyper": {
                "q_learning_rate": h.q_learning_rate,
                "discount": h.discount,
                "boltzmann_tau": h.boltzmann_tau,
                "noise_method": h.noise_method,
                "noise_param": h.noise_param,
                "state_shape": list(h.state_shape),
                "action_shape": list(h.action_shape),
                "state_map": vars(h.state_map_params),
                "action_map": vars(h.action_map_params),
            },
            "env": {
                "scarcity_factor": self.env_config.scarcity_factor,
                "buy_price": self.env_config.buy_price,
                "sell_price": self.env_config.sell_price,
            },
        }


def build_scenario(
    mode: str,
    size: str,
    reward,
    algorithm: str,
    seed: int = 0,
    steps: int = 10_000,
    overrides: dict | None = None,
    env_config: EnvConfig | None = None,
) -> ScenarioSpec:
    """Assemble a scenario from its vocabulary tokens.

    ``overrides`` maps documented parameter names (:data:`PARAMETERS`) to
    values. ``env_config`` replaces the bundled roster entirely (its
    ``mode`` wins over ``mode``).
    """
    if mode not in MODES:
        raise ConfigurationError(f"unknown mode {mode!r}; expected one of {MODES}")
    if size not in SIZES:
        raise ConfigurationError(f"unknown size {size!r}; expected one of {tuple(SIZES)}")
    if algorithm not in ALGORITHMS:
        raise ConfigurationError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")
    try:
        kind = RewardKind.parse(reward)
    except InvalidInputError as exc:
        raise ConfigurationError(str(exc)) from None
    if seed < 0:
        raise ConfigurationError("seed must be nonnegative")

    overrides = dict(overrides or {})
    for name in overrides:
        parse_parameter(name, overrides[name])
    if "steps" in overrides:
        steps = parse_parameter("steps", overrides["steps"])
    if steps < 0:
        raise ConfigurationError("steps must be nonnegative")

    hyper = AgentHyper.defaults("qdsom" if algorithm == "qdsom" else "qsom")
    hyper = apply_hyper_overrides(hyper, {k: v for k, v in overrides.items() if k in HYPER_PARAMS})

    env_kwargs = {k: parse_parameter(k, v) for k, v in overrides.items() if k in ENV_PARAMS}
    if env_config is None:
        profiles = bundled_profiles(mode)
        roster = [(profiles[name], count) for name, count in SIZES[size].items()]
        env_config = EnvConfig(roster=roster, mode=mode, horizon=max(steps, 1), **env_kwargs)
    else:
        mode = env_config.mode
        if env_kwargs:
            env_config = EnvConfig(
                roster=env_config.roster, mode=env_config.mode, horizon=env_config.horizon,
                **{**{k: getattr(env_config, k) for k in ENV_PARAMS}, **env_kwargs},
            )

    return ScenarioSpec(
        mode=mode, size=size, reward=kind, algorithm=algorithm, steps=int(steps), seed=int(seed),
        hyper=hyper, env_config=env_config, overrides=tuple(sorted(overrides.items())),
    )


# -- the loop -------------------------------------------------------------------


class Task(Protocol):
    """What the loop needs from an environment plus reward definition."""

    n_agents: int

    def reset(self) -> np.ndarray: ...

    def step(self, params: np.ndarray, t: int) -> tuple[np.ndarray, np.ndarray, float]: ...


class Agents(Protocol):
    def decide(self, observations: np.ndarray): ...

    def learn(self, trace, next_observations: np.ndarray, rewards: np.ndarray) -> None: ...


class GridTask:
    """Smart grid plus one reward kind.

    With ``check_invariants`` every snapshot goes through
    :func:`check_snapshot` before rewards are computed.
    """

    def __init__(self, config: EnvConfig, reward, seed: int | None = None, check_invariants: bool = False):
        self.env = SmartGridEnv(config, seed)
        self.kind = RewardKind.parse(reward)
        self.check_invariants = check_invariants
        self.n_agents = config.n_agents

    def reset(self) -> np.ndarray:
        return self.env.reset()

    def step(self, params, t):
        obs, snap = self.env.step(params)
        if self.check_invariants:
            check_snapshot(self.env.config, snap, obs)
        return obs, agent_rewards(self.kind, snap, t), global_reward(self.kind, snap, t)


def check_snapshot(config: EnvConfig, snap: StepSnapshot, obs: np.ndarray | None = None, tol: float = 1e-9) -> None:
    """Raise :class:`ContractViolation` if a step broke an environment invariant."""
    cap = config.battery_capacity
    b0, b1 = snap.battery_before, snap.battery_after
    if np.any(b1 < -tol) or np.any(b1 > cap + tol):
        raise ContractViolation("battery level left [0, capacity]")
    a = {name: snap.action(name) for name in ACTION_FIELDS}
    inflow = a["store"] + config.solar_production
    outflow = a["consume_battery"] + a["give"] + a["sell"]
    imbalance = np.abs((b1 - b0) - (inflow - outflow - snap.waste))
    if np.any(imbalance > tol):
        raise ContractViolation(f"battery bookkeeping off by {imbalance.max():.3g} Wh")
    if snap.over_consumption < 0:
        raise ContractViolation("negative over-consumption")
    indicators = [snap.equity, snap.autonomy, snap.exclusion, snap.well_being]
    if not all(0.0 <= v <= 1.0 for v in indicators) or np.any((snap.comfort < 0) | (snap.comfort > 1)):
        raise ContractViolation("a normalized indicator left [0, 1]")
    if obs is not None and (obs.shape[1] != OBS_DIM or np.any(obs < 0) or np.any(obs > 1)):
        raise ContractViolation("observation outside [0, 1]^11")


@dataclass(frozen=True)
class RandomTrace:
    actions: np.ndarray


class RandomAgents:
    """Uniform-random action parameters; learns nothing."""

    def __init__(self, rngs: list[np.random.Generator], action_dim: int = ACTION_DIM):
        self.rngs = rngs
        self.action_dim = action_dim

    def decide(self, observations) -> RandomTrace:
        return RandomTrace(np.stack([rng.random(self.action_dim) for rng in self.rngs]))

    def learn(self, trace, next_observations, rewards) -> None:
        pass


def make_agents(spec: ScenarioSpec):
    n = spec.n_agents
    if spec.algorithm == "random":
        return RandomAgents([agent_rng(spec.seed, i, ROLE_RANDOM) for i in range(n)])
    return Population(spec.hyper, [agent_rng(spec.seed, i, ROLE_AGENT) for i in range(n)], OBS_DIM, ACTION_DIM)


class StepError(QdsomError):
    """An error raised inside the loop, tagged with the step it happened at."""

    def __init__(self, step: int, cause: Exception):
        self.step = step
        super().__init__(f"step {step}: {type(cause).__name__}: {cause}")


def run_loop(task: Task, agents: Agents, steps: int, callback=None) -> tuple[np.ndarray, np.ndarray]:
    """Run ``steps`` observe/decide/step/reward/learn cycles.

    Returns the global reward series (steps,) and per-agent rewards (steps, n).
    ``callback(t, trace, rewards, global_reward)`` is called after each learn.
    """
    global_series = np.zeros(steps)
    agent_series = np.zeros((steps, task.n_agents))
    obs = task.reset()
    for t in range(steps):
        try:
            trace = agents.decide(obs)
            next_obs, rewards, g = task.step(trace.actions, t)
            agents.learn(trace, next_obs, rewards)
        except QdsomError as exc:
            raise StepError(t, exc) from exc
        global_series[t] = g
        agent_series[t] = rewards
        if callback is not None:
            callback(t, trace, rewards, g)
        obs = next_obs
    return global_series, agent_series


@dataclass
class RunResult:
    global_rewards: np.ndarray
    agent_rewards: np.ndarray
    score: float
    metadata: dict


def run(spec: ScenarioSpec, check_invariants: bool = False) -> RunResult:
    """Execute a scenario. (spec, seed) fully determine every series."""
    task = GridTask(spec.env_config, spec.reward, spec.seed, check_invariants=check_invariants)
    agents = make_agents(spec)
    start = time.perf_counter()
    g, r = run_loop(task, agents, spec.steps)
    wall = time.perf_counter() - start
    warnings = []
    if spec.steps == 0:
        warnings.append("empty horizon: score defined as 0")
        log.warning("run with steps=0; score defined as 0")
        s = 0.0
    else:
        s = score_series(g)
    meta = {"spec": spec.to_dict(), "seed": spec.seed, "wall_time": wall, "warnings": warnings}
    return RunResult(global_rewards=g, agent_rewards=r, score=s, metadata=meta)


# -- post-processing -----------------------------------------------------------


def score_series(series) -> float:
    x = np.asarray(series, dtype=float)
    if x.size == 0:
        raise InvalidInputError("cannot score an empty series")
    return float(x.mean())


def score(result: RunResult) -> float:
    """Mean of the run's global reward series."""
    return score_series(result.global_rewards)


def moving_average(series, window: int) -> np.ndarray:
    """Trailing mean over the last ``min(window, i + 1)`` points."""
    if window < 1:
        raise InvalidInputError(f"window must be at least 1, got {window}")
    x = np.asarray(series, dtype=float)
    if x.size == 0:
        return x.copy()
    if window == 1:
        return x.copy()
    padded = np.concatenate([np.full(window - 1, np.nan), x])
    return np.nanmean(sliding_window_view(padded, window), axis=1)
