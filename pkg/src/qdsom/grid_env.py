"""Smart-grid prosumer environment.

Agents draw energy from a shared pool fed by a local hydropower plant,
keep solar production in a personal battery, and may buy from or sell to
the national grid. Each step is one hour.

Actions are 6 numbers per agent, in Wh once scaled by the agent's action
range, in the order of :data:`ACTION_FIELDS`. Observations are 11 numbers
in [0, 1]: 8 shared (:data:`SHARED_OBSERVATIONS`) followed by 3 local
(:data:`LOCAL_OBSERVATIONS`).

All functions are pure: :func:`env_step` returns a new :class:`EnvState`
together with a frozen :class:`StepSnapshot` that rewards and observations
are computed from.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, ContractViolation, IngestionError, InvalidInputError
from .rewards import hoover

ACTION_FIELDS = ("consume_grid", "store", "consume_battery", "give", "buy", "sell")
SHARED_OBSERVATIONS = (
    "hour", "pool", "equity", "waste", "autonomy", "exclusion", "well_being", "over_consumption",
)
LOCAL_OBSERVATIONS = ("battery", "comfort", "payoff")
OBS_DIM = len(SHARED_OBSERVATIONS) + len(LOCAL_OBSERVATIONS)
ACTION_DIM = len(ACTION_FIELDS)

PROFILE_NAMES = ("Household", "Office", "School")
MODE_LENGTHS = {"daily": 24, "annual": 8760}

# derived-field rules for profiles that do not override them
ACTION_RANGE_FACTOR = 1.1
BATTERY_FACTOR = 3.0
SOLAR_FACTOR = 0.2


@dataclass(frozen=True)
class BuildingProfile:
    name: str
    needs: np.ndarray = field(repr=False)
    action_range: float
    battery_capacity: float
    solar_production: float

    def __post_init__(self):
        needs = np.asarray(self.needs, dtype=float)
        if needs.ndim != 1 or needs.size == 0 or not np.all(needs > 0):
            raise InvalidInputError(f"{self.name}: needs must be a nonempty vector of positive values")
        if self.action_range < needs.max():
            raise InvalidInputError(f"{self.name}: action_range {self.action_range} is below the maximum need")
        if not self.battery_capacity > 0:
            raise InvalidInputError(f"{self.name}: battery_capacity must be positive")
        if self.solar_production < 0:
            raise InvalidInputError(f"{self.name}: solar_production must be nonnegative")
        needs.setflags(write=False)
        object.__setattr__(self, "needs", needs)

    @classmethod
    def from_needs(cls, name: str, needs, **overrides) -> "BuildingProfile":
        """Profile with action range, capacity and solar output derived from the needs."""
        needs = np.asarray(needs, dtype=float)
        derived = {
            "action_range": ACTION_RANGE_FACTOR * needs.max(),
            "battery_capacity": BATTERY_FACTOR * needs.max(),
            "solar_production": SOLAR_FACTOR * needs.mean(),
        }
        derived.update({k: float(v) for k, v in overrides.items() if v is not None})
        return cls(name=name, needs=needs, **derived)


def _profile_name(path: Path) -> str:
    stem = path.stem.lower()
    for name in PROFILE_NAMES:
        if stem == name.lower():
            return name
    return path.stem


def load_profile(path, mode: str = "daily", name: str | None = None, **overrides) -> BuildingProfile:
    """Read one ``hour_index,need_wh`` CSV file into a profile.

    Raises:
        IngestionError: wrong header, wrong row count for ``mode``, unparsable
            or non-positive need. The message names the file and row.
    """
    path = Path(path)
    if mode not in MODE_LENGTHS:
        raise ConfigurationError(f"unknown profile mode {mode!r}; expected one of {sorted(MODE_LENGTHS)}")
    try:
        handle = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise IngestionError(path, f"cannot read file ({exc})") from exc
    with handle:
        reader = csv.DictReader(handle)
        missing = {"hour_index", "need_wh"} - set(reader.fieldnames or ())
        if missing:
            raise IngestionError(path, f"missing column(s) {sorted(missing)}")
        needs = []
        for row_no, row in enumerate(reader, start=2):
            try:
                hour = int(row["hour_index"])
                need = float(row["need_wh"])
            except (TypeError, ValueError) as exc:
                raise IngestionError(path, f"unparsable value ({exc})", row_no) from exc
            if hour != len(needs):
                raise IngestionError(path, f"expected hour_index {len(needs)}, got {hour}", row_no)
            if not need > 0 or not np.isfinite(need):
                raise IngestionError(path, f"need_wh must be positive, got {need}", row_no)
            needs.append(need)
    expected = MODE_LENGTHS[mode]
    if len(needs) != expected:
        raise IngestionError(path, f"{mode} profiles need {expected} rows, found {len(needs)}")
    return BuildingProfile.from_needs(name or _profile_name(path), needs, **overrides)


def load_profiles(sources: Iterable, mode: str = "daily", overrides: dict | None = None) -> list[BuildingProfile]:
    """One profile per CSV file. ``overrides`` maps profile name to field overrides."""
    overrides = overrides or {}
    out = []
    for src in sources:
        name = _profile_name(Path(src))
        out.append(load_profile(src, mode, name=name, **overrides.get(name, {})))
    return out


def bundled_profile_path(name: str, mode: str) -> Path:
    if mode not in MODE_LENGTHS:
        raise ConfigurationError(f"unknown profile mode {mode!r}; expected one of {sorted(MODE_LENGTHS)}")
    if name not in PROFILE_NAMES:
        raise ConfigurationError(f"unknown profile {name!r}; expected one of {PROFILE_NAMES}")
    return Path(str(resources.files("qdsom") / "data" / "profiles" / mode / f"{name.lower()}.csv"))


def bundled_profiles(mode: str) -> dict[str, BuildingProfile]:
    """The synthetic Household / Office / School profiles shipped with the package."""
    return {name: load_profile(bundled_profile_path(name, mode), mode, name=name) for name in PROFILE_NAMES}


# -- configuration ------------------------------------------------------------


@dataclass
class EnvConfig:
    """Environment constants and the agent roster.

    ``roster`` lists ``(profile, count)`` pairs; agents are numbered in
    roster order. Prices are in currency per Wh. Treat instances as
    immutable: per-agent arrays are computed once at construction.
    """

    roster: Sequence[tuple[BuildingProfile, int]]
    mode: str = "daily"
    scarcity_factor: float = 0.75
    buy_price: float = 0.2 / 1000
    sell_price: float = 0.1 / 1000
    horizon: int = 10_000

    def __post_init__(self):
        if self.mode not in MODE_LENGTHS:
            raise ConfigurationError(f"unknown profile mode {self.mode!r}")
        if not 0 < self.scarcity_factor <= 1.5:
            raise ConfigurationError(f"scarcity_factor must be in (0, 1.5], got {self.scarcity_factor}")
        if self.buy_price < 0 or self.sell_price < 0:
            raise ConfigurationError("prices must be nonnegative")
        if self.horizon < 1:
            raise ConfigurationError("horizon must be a positive integer")
        self.roster = tuple((p, int(c)) for p, c in self.roster)
        if any(c < 0 for _, c in self.roster) or sum(c for _, c in self.roster) < 1:
            raise ConfigurationError("the roster must contain at least one agent")
        period = MODE_LENGTHS[self.mode]
        for profile, _ in self.roster:
            if profile.needs.size != period:
                raise ConfigurationError(
                    f"profile {profile.name} has {profile.needs.size} hours; {self.mode} mode needs {period}"
                )
        agents = [p for p, c in self.roster for _ in range(c)]
        self.agent_profiles = tuple(p.name for p in agents)
        self.needs = np.stack([p.needs for p in agents])
        self.action_range = np.array([p.action_range for p in agents])
        self.battery_capacity = np.array([p.battery_capacity for p in agents])
        self.solar_production = np.array([p.solar_production for p in agents])
        self.payoff_scale = 24.0 * max(self.buy_price, self.sell_price, 1e-12) * self.action_range
        for arr in (self.needs, self.action_range, self.battery_capacity, self.solar_production, self.payoff_scale):
            arr.setflags(write=False)

    @property
    def n_agents(self) -> int:
        return len(self.agent_profiles)

    @property
    def period(self) -> int:
        return MODE_LENGTHS[self.mode]

    def need_at(self, t: int) -> np.ndarray:
        return self.needs[:, t % self.period]

    @classmethod
    def from_dict(cls, doc: dict, base_dir=None) -> "EnvConfig":
        """Build a config from the documented JSON schema (see README)."""
        doc = dict(doc)
        mode = doc.pop("mode", "daily")
        roster_doc = doc.pop("roster", None)
        if not roster_doc:
            raise ConfigurationError("config needs a nonempty 'roster' list")
        known = {f.name for f in fields(cls)} - {"roster", "mode"}
        unknown = set(doc) - known
        if unknown:
            raise ConfigurationError(f"unknown config key(s): {sorted(unknown)}")
        roster = []
        for entry in roster_doc:
            entry = dict(entry)
            name = entry.pop("profile", None)
            count = entry.pop("count", 1)
            src = entry.pop("file", None)
            extra = set(entry) - {"action_range", "battery_capacity", "solar_production"}
            if extra:
                raise ConfigurationError(f"unknown roster key(s): {sorted(extra)}")
            if src is not None:
                src = Path(src) if base_dir is None or Path(src).is_absolute() else Path(base_dir) / src
                profile = load_profile(src, mode, name=name, **entry)
            else:
                profile = load_profile(bundled_profile_path(name, mode), mode, name=name, **entry)
            roster.append((profile, count))
        return cls(roster=roster, mode=mode, **doc)


def load_config(path) -> EnvConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"{path}: cannot read config ({exc})") from exc
    return EnvConfig.from_dict(doc, base_dir=path.parent)


# -- actions ------------------------------------------------------------------


@dataclass(frozen=True)
class ScaledAction:
    """One agent's action in Wh."""

    consume_grid: float
    store: float
    consume_battery: float
    give: float
    buy: float
    sell: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f) for f in ACTION_FIELDS])


def scale_action(params, action_range: float) -> ScaledAction:
    """Scale 6 parameters in [0, 1] by the agent's action range."""
    p = np.asarray(params, dtype=float)
    if p.shape != (ACTION_DIM,):
        raise ContractViolation(f"expected {ACTION_DIM} action parameters, got shape {p.shape}")
    if np.any(p < 0) or np.any(p > 1) or not np.all(np.isfinite(p)):
        raise ContractViolation(f"action parameters must lie in [0, 1], got {p}")
    return ScaledAction(*(float(v) for v in p * action_range))


def scale_actions(params, action_range) -> np.ndarray:
    """Vectorized :func:`scale_action`: (n, 6) parameters to (n, 6) Wh."""
    p = np.asarray(params, dtype=float)
    if p.ndim != 2 or p.shape[1] != ACTION_DIM:
        raise ContractViolation(f"expected (n, {ACTION_DIM}) action parameters, got shape {p.shape}")
    if np.any(p < 0) or np.any(p > 1) or not np.all(np.isfinite(p)):
        raise ContractViolation("action parameters must lie in [0, 1]")
    return p * np.asarray(action_range, dtype=float)[:, None]


# -- state and dynamics -------------------------------------------------------


@dataclass(frozen=True)
class EnvState:
    t: int
    battery: np.ndarray
    payoff: np.ndarray
    pool: float


@dataclass(frozen=True)
class StepSnapshot:
    """Frozen per-step quantities. Per-agent fields are arrays in agent order."""

    t: int
    hour: int
    hour_of_day: int
    need: np.ndarray
    actions: np.ndarray  # feasible (n, 6) Wh actually executed
    consumed: np.ndarray
    stored: np.ndarray
    comfort: np.ndarray
    battery_before: np.ndarray
    battery_after: np.ndarray
    battery_fraction: np.ndarray
    waste: np.ndarray
    payoff_delta: np.ndarray
    pool: float
    over_consumption: float
    total_waste: float
    equity: float
    autonomy: float
    exclusion: float
    well_being: float
    pool_norm: float
    over_consumption_norm: float
    waste_norm: float

    @property
    def n_agents(self) -> int:
        return self.comfort.shape[0]

    def action(self, name: str) -> np.ndarray:
        return self.actions[:, ACTION_FIELDS.index(name)]


def init_env(config: EnvConfig, seed: int | None = None) -> EnvState:
    """Fresh state: t = 0, half-charged batteries, zero payoffs, pool for the first step.

    The dynamics are deterministic, so ``seed`` does not affect the state;
    it is accepted so every component of a run takes the same arguments.
    """
    if not isinstance(config, EnvConfig):
        raise ConfigurationError("init_env needs an EnvConfig")
    n = config.n_agents
    return EnvState(
        t=0,
        battery=0.5 * config.battery_capacity.copy(),
        payoff=np.zeros(n),
        pool=float(config.scarcity_factor * config.need_at(0).sum()),
    )


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def _indicators(comfort: np.ndarray, consumed, stored, actions) -> dict:
    buy = actions[:, 4].sum()
    sell = actions[:, 5].sum()
    exchanged = buy + sell
    med = float(np.median(comfort))
    return {
        "equity": 1.0 - hoover(comfort),
        "autonomy": 1.0 - _ratio(exchanged, consumed.sum() + stored.sum() + exchanged),
        "exclusion": float(np.mean(comfort < 0.5 * med)),
        "well_being": med,
    }


def initial_snapshot(config: EnvConfig, state: EnvState) -> StepSnapshot:
    """Snapshot of a null step, used for the observations before the first decision."""
    n = config.n_agents
    zeros = np.zeros(n)
    actions = np.zeros((n, ACTION_DIM))
    need = config.need_at(state.t)
    return StepSnapshot(
        t=-1, hour=-1, hour_of_day=-1, need=need, actions=actions,
        consumed=zeros, stored=zeros, comfort=zeros,
        battery_before=state.battery, battery_after=state.battery,
        battery_fraction=state.battery / config.battery_capacity,
        waste=zeros, payoff_delta=zeros,
        pool=state.pool, over_consumption=0.0, total_waste=0.0,
        **_indicators(zeros, zeros, zeros, actions),
        pool_norm=_ratio(state.pool, need.sum()), over_consumption_norm=0.0, waste_norm=0.0,
    )


def _as_joint(config: EnvConfig, joint) -> np.ndarray:
    if isinstance(joint, np.ndarray):
        arr = joint.astype(float, copy=False)
    else:
        joint = list(joint)
        if joint and isinstance(joint[0], ScaledAction):
            arr = np.stack([a.as_array() for a in joint])
        else:
            arr = np.asarray(joint, dtype=float)
    if arr.shape != (config.n_agents, ACTION_DIM):
        raise ContractViolation(f"expected {config.n_agents} actions of {ACTION_DIM} values, got shape {arr.shape}")
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise ContractViolation("scaled actions must be finite and nonnegative")
    return arr


def env_step(config: EnvConfig, state: EnvState, joint) -> tuple[EnvState, StepSnapshot]:
    """Execute one hour. ``joint`` holds one scaled action (Wh) per agent.

    Battery outflows (consume_battery, give, sell) exceeding the battery
    level are rescaled proportionally. Given energy joins the shared pool.
    Bought energy is consumed directly.
    """
    act = _as_joint(config, joint).copy()
    hour = state.t % config.period
    need = config.needs[:, hour]

    battery = state.battery
    out_cols = [2, 3, 5]
    outflow = act[:, out_cols].sum(axis=1)
    over = outflow > battery
    if np.any(over):
        scale = np.where(over, battery / np.where(over, outflow, 1.0), 1.0)
        act[:, out_cols] *= scale[:, None]
    cg, store, cb, give, buy, sell = act.T

    pool = config.scarcity_factor * need.sum() + give.sum()
    consumed = cg + cb + buy
    stored = store

    raw = battery + store + config.solar_production - cb - give - sell
    raw = np.maximum(raw, 0.0)
    waste = np.maximum(raw - config.battery_capacity, 0.0)
    new_battery = raw - waste

    payoff_delta = sell * config.sell_price - buy * config.buy_price
    oc = max(0.0, float((cg + store).sum() - pool))
    comfort = np.minimum(1.0, consumed / need)

    total_need = float(need.sum())
    total_waste = float(waste.sum())
    snap = StepSnapshot(
        t=state.t, hour=hour, hour_of_day=state.t % 24, need=need, actions=act,
        consumed=consumed, stored=stored, comfort=comfort,
        battery_before=battery, battery_after=new_battery,
        battery_fraction=new_battery / config.battery_capacity,
        waste=waste, payoff_delta=payoff_delta,
        pool=float(pool), over_consumption=oc, total_waste=total_waste,
        **_indicators(comfort, consumed, stored, act),
        pool_norm=_ratio(pool, total_need),
        over_consumption_norm=_ratio(oc, total_need),
        waste_norm=_ratio(total_waste, total_need),
    )
    t_next = state.t + 1
    new_state = EnvState(
        t=t_next,
        battery=new_battery,
        payoff=state.payoff + payoff_delta,
        pool=float(config.scarcity_factor * config.need_at(t_next).sum()),
    )
    return new_state, snap


def _logistic(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def observe_all(config: EnvConfig, snapshot: StepSnapshot, state: EnvState) -> np.ndarray:
    """Observations of every agent, shape (n, 11), all in [0, 1].

    The hour coordinate is the hour of day of the step about to be played;
    the other shared values describe the last executed step.
    """
    n = config.n_agents
    shared = np.array([
        (state.t % 24) / 24.0,
        snapshot.pool_norm,
        snapshot.equity,
        snapshot.waste_norm,
        snapshot.autonomy,
        snapshot.exclusion,
        snapshot.well_being,
        snapshot.over_consumption_norm,
    ])
    local = np.stack([
        state.battery / config.battery_capacity,
        snapshot.comfort,
        _logistic(state.payoff / config.payoff_scale),
    ], axis=1)
    obs = np.concatenate([np.broadcast_to(shared, (n, shared.size)), local], axis=1)
    return np.clip(obs, 0.0, 1.0)


def observe(config: EnvConfig, snapshot: StepSnapshot, state: EnvState, agent: int) -> np.ndarray:
    """Observation vector (length 11) of one agent."""
    if not 0 <= agent < config.n_agents:
        raise ContractViolation(f"unknown agent {agent}; there are {config.n_agents}")
    return observe_all(config, snapshot, state)[agent]


class SmartGridEnv:
    """Stateful convenience wrapper with a reset/step interface.

    ``step`` takes (n, 6) action parameters in [0, 1], scales them by each
    agent's action range and returns the new observations and the snapshot.
    """

    def __init__(self, config: EnvConfig, seed: int | None = None):
        self.config = config
        self.seed = seed
        self.state: EnvState | None = None
        self.snapshot: StepSnapshot | None = None

    @property
    def n_agents(self) -> int:
        return self.config.n_agents

    def reset(self) -> np.ndarray:
        self.state = init_env(self.config, self.seed)
        self.snapshot = initial_snapshot(self.config, self.state)
        return observe_all(self.config, self.snapshot, self.state)

    def step(self, params) -> tuple[np.ndarray, StepSnapshot]:
        if self.state is None:
            raise ContractViolation("call reset() before step()")
        joint = scale_actions(params, self.config.action_range)
        self.state, self.snapshot = env_step(self.config, self.state, joint)
        return observe_all(self.config, self.snapshot, self.state), self.snapshot
