"""Reward functions, Hoover index and difference rewards.

Per-agent rewards follow the difference-reward pattern
``D_i = G(z) - G(z_-i)``: the global quantity minus its value in a
hypothetical world where agent ``i`` did not act. Global rewards
(``global_reward``) are the ``G(z)`` counterparts in [0, 1] used for scoring.

Ratios whose denominator is zero evaluate to 0.
"""

from __future__ import annotations

from enum import Enum
from typing import TYPE_CHECKING

import numpy as np

from .errors import ContractViolation, InvalidInputError

if TYPE_CHECKING:
    from .grid_env import StepSnapshot

#: First step of the second phase of the adaptability rewards.
FIRST_SWITCH = 2000
#: First step of the third phase of adaptability2.
SECOND_SWITCH = 6000

SUM_WEIGHTS = (0.8, 0.2)


class RewardKind(str, Enum):
    EQUITY = "equity"
    OVERCONSUMPTION = "overconsumption"
    COMFORT = "comfort"
    MULTIOBJ_SUM = "multiobj-sum"
    MULTIOBJ_PROD = "multiobj-prod"
    ADAPTABILITY1 = "adaptability1"
    ADAPTABILITY2 = "adaptability2"

    @property
    def time_dependent(self) -> bool:
        return self in (RewardKind.ADAPTABILITY1, RewardKind.ADAPTABILITY2)

    @classmethod
    def parse(cls, value) -> "RewardKind":
        try:
            return cls(value)
        except ValueError:
            names = ", ".join(k.value for k in cls)
            raise InvalidInputError(f"unknown reward {value!r}; expected one of {names}") from None


def hoover(values) -> float:
    """Hoover index ``sum|x - mean| / (2 sum x)``; 0 for an all-zero population."""
    x = np.asarray(values, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise InvalidInputError("hoover() needs a nonempty 1-D list of values")
    if np.any(x < 0):
        raise InvalidInputError("hoover() is defined for nonnegative values only")
    total = x.sum()
    # equal values are perfect equality; skip the rounding of mean()
    if total <= 0 or x.max() == x.min():
        return 0.0
    return float(np.abs(x - x.mean()).sum() / (2.0 * total))


def hoover_without_each(values) -> np.ndarray:
    """Hoover index of ``values`` with entry ``i`` removed, for every ``i``.

    An empty remainder (single agent) gets index 0.
    """
    x = np.asarray(values, dtype=float)
    n = x.size
    if n == 1:
        return np.zeros(1)
    cols = np.arange(n - 1)[None, :]
    rest = x[cols + (cols >= np.arange(n)[:, None])]  # row i is x without entry i
    totals = rest.sum(axis=1)
    dev = np.abs(rest - rest.mean(axis=1, keepdims=True)).sum(axis=1)
    flat = (rest.max(axis=1) == rest.min(axis=1)) | (totals <= 0)
    return np.where(flat, 0.0, dev / (2.0 * np.where(flat, 1.0, totals)))


def _ratio(num, den):
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    safe = np.where(den > 0, den, 1.0)
    return np.where(den > 0, num / safe, 0.0)


# -- components ---------------------------------------------------------------


def global_overconsumption(snapshot: "StepSnapshot") -> float:
    """``1 - OC / sum(consumed + stored)``."""
    total = (snapshot.consumed + snapshot.stored).sum()
    return float(1.0 - _ratio(snapshot.over_consumption, total))


def overconsumption_rewards(snapshot: "StepSnapshot") -> np.ndarray:
    """Difference rewards for over-consumption, one per agent."""
    contrib = snapshot.consumed + snapshot.stored
    total = contrib.sum()
    g = 1.0 - _ratio(snapshot.over_consumption, total)
    hypothetical_oc = np.maximum(0.0, snapshot.over_consumption - contrib)
    g_without = 1.0 - _ratio(hypothetical_oc, total - contrib)
    return g - g_without


def equity_rewards(snapshot: "StepSnapshot") -> np.ndarray:
    """Difference rewards for equity: ``(1 - H(all)) - (1 - H(all but i))``.

    Evaluated as ``H(all but i) - H(all)``, which avoids cancellation error.
    """
    c = snapshot.comfort
    return hoover_without_each(c) - hoover(c)


def multiobj_sum(oc_reward, comfort_reward):
    w_oc, w_comfort = SUM_WEIGHTS
    return w_oc * oc_reward + w_comfort * comfort_reward


def multiobj_product(oc_reward, comfort_reward):
    return oc_reward * comfort_reward


def phase(kind: RewardKind, t: int) -> int:
    """Active phase (0, 1 or 2) of an adaptability reward at step ``t``."""
    if not kind.time_dependent or t < FIRST_SWITCH:
        return 0
    if kind is RewardKind.ADAPTABILITY1 or t < SECOND_SWITCH:
        return 1
    return 2


def _combine(kind: RewardKind, t: int, oc, eq, comfort, oc_global):
    if kind is RewardKind.EQUITY:
        return eq
    if kind is RewardKind.OVERCONSUMPTION:
        return oc
    if kind is RewardKind.COMFORT:
        return comfort
    if kind is RewardKind.MULTIOBJ_SUM:
        return multiobj_sum(oc, comfort)
    if kind is RewardKind.MULTIOBJ_PROD:
        return multiobj_product(oc_global, comfort)
    p = phase(kind, t)
    if p == 0:
        return oc
    if p == 1:
        return (oc + eq) / 2
    return (oc + eq + comfort) / 3


# -- public API ---------------------------------------------------------------


def agent_rewards(kind, snapshot: "StepSnapshot", t: int) -> np.ndarray:
    """Per-agent rewards for every agent of ``snapshot`` at step ``t``."""
    kind = RewardKind.parse(kind)
    n = snapshot.n_agents
    oc = overconsumption_rewards(snapshot)
    eq = equity_rewards(snapshot) if kind in _NEEDS_EQUITY else np.zeros(n)
    comfort = snapshot.comfort
    oc_global = global_overconsumption(snapshot)
    return np.asarray(_combine(kind, t, oc, eq, comfort, oc_global), dtype=float)


_NEEDS_EQUITY = {RewardKind.EQUITY, RewardKind.ADAPTABILITY1, RewardKind.ADAPTABILITY2}


def agent_reward(kind, snapshot: "StepSnapshot", agent: int, t: int) -> float:
    """Reward of one agent at step ``t``."""
    if not 0 <= agent < snapshot.n_agents:
        raise ContractViolation(f"unknown agent {agent}; there are {snapshot.n_agents}")
    return float(agent_rewards(kind, snapshot, t)[agent])


def global_reward(kind, snapshot: "StepSnapshot", t: int) -> float:
    """Society-level reward in [0, 1] used to score a run."""
    kind = RewardKind.parse(kind)
    oc = global_overconsumption(snapshot)
    eq = 1.0 - hoover(snapshot.comfort)
    comfort = float(snapshot.comfort.mean())
    return float(_combine(kind, t, oc, eq, comfort, oc))
