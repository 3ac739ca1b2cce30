"""Q-(D)SOM learning agents.

An agent couples a State-map (discretizes observations), an Action-map
(holds candidate action vectors) and a Q-Table indexed by the two maps'
neurons. :func:`decide` picks an action by Boltzmann sampling over the
Q-row of the state hypothesis and perturbs the chosen prototype;
:func:`learn` updates the Action-map (only when the perturbation looked
better), the whole Q-Table with neighborhood weights, then the State-map.

:class:`Population` runs the same algorithm for many same-shaped agents at
once by stacking their maps; each agent keeps its own random stream and
``Population.mind(i)`` exposes a view that works with the single-agent
functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import topo_maps as tm
from .errors import ContractViolation, InvalidInputError
from .topo_maps import DsomParams, MapGrid, SomParams

NOISE_METHODS = ("gaussian", "epsilon")
FLAVORS = ("qsom", "qdsom")


@dataclass(frozen=True)
class AgentHyper:
    """Hyperparameters of one Q-(D)SOM learner.

    ``noise_param`` is the variance of the gaussian perturbation, or the
    half-width of the uniform one for the ``epsilon`` method. The map
    parameter types select the flavour: both :class:`SomParams` for QSOM,
    both :class:`DsomParams` for QDSOM.
    """

    q_learning_rate: float
    discount: float
    boltzmann_tau: float
    noise_method: str
    noise_param: float
    state_map_params: SomParams | DsomParams
    action_map_params: SomParams | DsomParams
    state_shape: tuple[int, int] = (12, 12)
    action_shape: tuple[int, int] = (3, 3)

    def __post_init__(self):
        if not 0.0 <= self.q_learning_rate <= 1.0:
            raise InvalidInputError(f"q_learning_rate must be in [0, 1], got {self.q_learning_rate}")
        if not 0.0 <= self.discount < 1.0:
            raise InvalidInputError(f"discount must be in [0, 1), got {self.discount}")
        if not self.boltzmann_tau > 0.0:
            raise InvalidInputError(f"boltzmann_tau must be positive, got {self.boltzmann_tau}")
        if self.noise_method not in NOISE_METHODS:
            raise InvalidInputError(f"noise_method must be one of {NOISE_METHODS}, got {self.noise_method!r}")
        if not self.noise_param >= 0.0:
            raise InvalidInputError(f"noise_param must be nonnegative, got {self.noise_param}")
        if type(self.state_map_params) is not type(self.action_map_params):
            raise InvalidInputError("state and action maps must both be SOMs or both be DSOMs")
        for shape in (self.state_shape, self.action_shape):
            if len(shape) != 2 or min(shape) < 1:
                raise InvalidInputError(f"map shape must be two positive integers, got {shape}")

    @property
    def flavor(self) -> str:
        return "qdsom" if isinstance(self.state_map_params, DsomParams) else "qsom"

    @classmethod
    def qsom_defaults(cls, **overrides) -> "AgentHyper":
        """Best QSOM setting found on the annual/small adaptability2 scenario."""
        base = cls(
            q_learning_rate=0.6,
            discount=0.9,
            boltzmann_tau=0.4,
            noise_method="gaussian",
            noise_param=0.06,
            state_map_params=SomParams(learning_rate=0.5, neighborhood_width=1.5),
            action_map_params=SomParams(learning_rate=0.2, neighborhood_width=0.8),
        )
        return replace(base, **overrides)

    @classmethod
    def qdsom_defaults(cls, **overrides) -> "AgentHyper":
        """Best QDSOM setting found on the annual/small adaptability2 scenario."""
        base = cls(
            q_learning_rate=0.8,
            discount=0.95,
            boltzmann_tau=0.6,
            noise_method="gaussian",
            noise_param=0.09,
            state_map_params=DsomParams(learning_rate=0.8, elasticity=1.0),
            action_map_params=DsomParams(learning_rate=0.7, elasticity=1.0),
        )
        return replace(base, **overrides)

    @classmethod
    def defaults(cls, flavor: str, **overrides) -> "AgentHyper":
        if flavor == "qsom":
            return cls.qsom_defaults(**overrides)
        if flavor == "qdsom":
            return cls.qdsom_defaults(**overrides)
        raise InvalidInputError(f"unknown algorithm {flavor!r}; expected one of {FLAVORS}")


@dataclass
class AgentMind:
    """State-map, Action-map, Q-Table, hyperparameters and private random stream."""

    state_map: MapGrid
    action_map: MapGrid
    qtable: np.ndarray
    hyper: AgentHyper
    rng: np.random.Generator = field(repr=False)

    def __post_init__(self):
        if self.qtable.shape != (self.state_map.size, self.action_map.size):
            raise InvalidInputError(
                f"Q-Table shape {self.qtable.shape} does not match maps "
                f"({self.state_map.size}, {self.action_map.size})"
            )

    @classmethod
    def create(cls, hyper: AgentHyper, rng: np.random.Generator, obs_dim: int = 11, action_dim: int = 6) -> "AgentMind":
        """Fresh agent: uniform random prototypes, Q-Table of zeros."""
        state_map = MapGrid.random(*hyper.state_shape, obs_dim, rng)
        action_map = MapGrid.random(*hyper.action_shape, action_dim, rng)
        qtable = np.zeros((state_map.size, action_map.size))
        return cls(state_map, action_map, qtable, hyper, rng)

    @property
    def flavor(self) -> str:
        return self.hyper.flavor


@dataclass(frozen=True)
class DecisionTrace:
    """What :func:`decide` saw and chose; consumed by :func:`learn`."""

    observations: np.ndarray
    state: int
    action_id: int
    action: np.ndarray


def boltzmann_probabilities(interests, tau: float) -> np.ndarray:
    """Softmax of ``interests / tau`` (max-subtracted for overflow safety).

    Works row-wise on 2-D input.
    """
    q = np.asarray(interests, dtype=float)
    if q.size == 0 or q.shape[-1] == 0:
        raise InvalidInputError("interests must be nonempty")
    if not tau > 0:
        raise InvalidInputError(f"tau must be positive, got {tau}")
    if not np.all(np.isfinite(q)):
        raise InvalidInputError("interests must be finite")
    z = q / tau
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _sample_index(probs: np.ndarray, u) -> np.ndarray:
    # inverse-CDF draw; u in [0, 1)
    cdf = np.cumsum(probs, axis=-1)
    idx = (cdf <= np.asarray(u)[..., None]).sum(axis=-1)
    return np.minimum(idx, probs.shape[-1] - 1)


def _noise(method: str, param: float, rng: np.random.Generator, size: int) -> np.ndarray:
    if method == "gaussian":
        return rng.normal(0.0, np.sqrt(param), size)
    if method == "epsilon":
        return rng.uniform(-param, param, size)
    raise InvalidInputError(f"noise method must be one of {NOISE_METHODS}, got {method!r}")


def perturb_action(prototype, method: str, param: float, rng: np.random.Generator) -> np.ndarray:
    """Add per-dimension noise to an action prototype and clamp to [0, 1].

    ``gaussian`` draws from N(0, param) (``param`` is the variance),
    ``epsilon`` from U[-param, +param].
    """
    if param < 0:
        raise InvalidInputError(f"noise parameter must be nonnegative, got {param}")
    proto = np.asarray(prototype, dtype=float)
    noise = _noise(method, param, rng, proto.shape[-1])
    return np.clip(proto + noise, 0.0, 1.0)


def decide(mind: AgentMind, observations) -> DecisionTrace:
    """Choose an action for ``observations`` (Boltzmann over Q, then perturbation)."""
    obs = np.array(observations, dtype=float)
    s = tm.bmu(mind.state_map, obs)
    probs = boltzmann_probabilities(mind.qtable[s], mind.hyper.boltzmann_tau)
    j = int(_sample_index(probs, mind.rng.random()))
    a = perturb_action(mind.action_map.prototypes[j], mind.hyper.noise_method, mind.hyper.noise_param, mind.rng)
    return DecisionTrace(obs, s, j, a)


def improvement_test(r: float, gamma: float, next_state_interests, q_sj: float) -> bool:
    """True when ``r + gamma * max(next_state_interests)`` strictly exceeds ``q_sj``."""
    nxt = np.asarray(next_state_interests, dtype=float)
    if nxt.size == 0:
        raise InvalidInputError("next_state_interests must be nonempty")
    return bool(r + gamma * nxt.max() > q_sj)


def _neighborhoods(hyper: AgentHyper, state_dist, action_dist, state_sq_err, action_sq_err):
    """psi_U and psi_W rows for the given lattice-distance rows."""
    sp, ap = hyper.state_map_params, hyper.action_map_params
    if isinstance(sp, DsomParams):
        psi_u = tm._elastic_weights(state_dist, state_sq_err, sp.elasticity)
        psi_w = tm._elastic_weights(action_dist, action_sq_err, ap.elasticity)
    else:
        psi_u = tm._gaussian_weights(state_dist, sp.neighborhood_width)
        psi_w = tm._gaussian_weights(action_dist, ap.neighborhood_width)
    return psi_u, psi_w


def _move(params, protos, x, weights, mask=None, buf=None):
    lr = params.learning_rate if mask is None else np.where(mask, params.learning_rate, 0.0)
    if isinstance(params, DsomParams):
        tm._dsom_move(protos, x, weights, lr, buf)
    else:
        tm._som_move(protos, x, weights, lr, buf)


def learn(mind: AgentMind, trace: DecisionTrace, next_observations, r: float) -> AgentMind:
    """Update Action-map, Q-Table and State-map from one transition, in place.

    Order: neighborhoods centred on the trace's state and action neurons;
    target ``r + gamma * max Q(s', .)``; Action-map moved toward the
    perturbed action only if the target beats ``Q(s, j)``; every Q-Value
    moved toward the target weighted by both neighborhoods; State-map moved
    toward the previous observations.
    """
    hyper = mind.hyper
    s, j = trace.state, trace.action_id
    if not (0 <= s < mind.state_map.size and 0 <= j < mind.action_map.size):
        raise ContractViolation(f"trace indices (s={s}, j={j}) do not fit this agent's maps")
    o = trace.observations
    if tm.bmu(mind.state_map, o) != s:
        raise ContractViolation("trace state hypothesis is stale: the State-map changed since decide()")
    o2 = mind.state_map._check_input(next_observations)
    a = mind.action_map._check_input(trace.action)

    state_protos = mind.state_map.prototypes
    action_protos = mind.action_map.prototypes
    psi_u, psi_w = _neighborhoods(
        hyper,
        mind.state_map.distances[s],
        mind.action_map.distances[j],
        np.square(o - state_protos[s]).sum(),
        np.square(a - action_protos[j]).sum(),
    )

    s_next = tm.bmu(mind.state_map, o2)
    target = r + hyper.discount * mind.qtable[s_next].max()

    if improvement_test(r, hyper.discount, mind.qtable[s_next], mind.qtable[s, j]):
        _move(hyper.action_map_params, action_protos, a, psi_w)

    q = mind.qtable
    q += hyper.q_learning_rate * np.outer(psi_u, psi_w) * (target - q)

    _move(hyper.state_map_params, state_protos, o, psi_u)
    return mind


@dataclass(frozen=True)
class BatchTrace:
    """Stacked :class:`DecisionTrace` for a whole population."""

    observations: np.ndarray  # (n, obs_dim)
    states: np.ndarray  # (n,)
    action_ids: np.ndarray  # (n,)
    actions: np.ndarray  # (n, action_dim)

    def __getitem__(self, i) -> DecisionTrace:
        return DecisionTrace(self.observations[i], int(self.states[i]), int(self.action_ids[i]), self.actions[i])


class Population:
    """Many same-shaped Q-(D)SOM agents stored as stacked arrays.

    Produces the same decisions and updates as calling :func:`decide` and
    :func:`learn` on each agent in turn, with the per-agent random draws
    taken in agent order.
    """

    def __init__(self, hyper: AgentHyper, rngs: list[np.random.Generator], obs_dim: int = 11, action_dim: int = 6):
        if not rngs:
            raise InvalidInputError("a population needs at least one agent")
        self.hyper = hyper
        self.rngs = list(rngs)
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        sr, sc = hyper.state_shape
        ar, ac = hyper.action_shape
        n = len(self.rngs)
        self.state_protos = np.empty((n, sr * sc, obs_dim))
        self.action_protos = np.empty((n, ar * ac, action_dim))
        for i, rng in enumerate(self.rngs):
            # same draw order as AgentMind.create
            self.state_protos[i] = rng.random((sr * sc, obs_dim))
            self.action_protos[i] = rng.random((ar * ac, action_dim))
        self.qtables = np.zeros((n, sr * sc, ar * ac))
        # scratch space reused every step; large per-step temporaries dominate the cost otherwise
        self._state_buf = np.empty_like(self.state_protos)
        self._action_buf = np.empty_like(self.action_protos)
        self._q_buf = np.empty_like(self.qtables)
        self._state_dist = tm.lattice_distances(sr, sc)
        self._action_dist = tm.lattice_distances(ar, ac)

    def __len__(self) -> int:
        return len(self.rngs)

    def mind(self, i: int) -> AgentMind:
        """Agent ``i`` as an :class:`AgentMind` whose arrays are views into the stack."""
        return AgentMind(
            MapGrid(*self.hyper.state_shape, self.state_protos[i]),
            MapGrid(*self.hyper.action_shape, self.action_protos[i]),
            self.qtables[i],
            self.hyper,
            self.rngs[i],
        )

    def decide(self, observations) -> BatchTrace:
        obs = np.array(observations, dtype=float)
        if obs.shape != (len(self), self.obs_dim):
            raise InvalidInputError(f"expected observations of shape {(len(self), self.obs_dim)}, got {obs.shape}")
        if not np.all(np.isfinite(obs)):
            raise InvalidInputError("observations must be finite")
        h = self.hyper
        n = len(self)
        states = tm._bmu(self.state_protos, obs, self._state_buf)
        probs = boltzmann_probabilities(self.qtables[np.arange(n), states], h.boltzmann_tau)
        u = np.empty(n)
        noise = np.empty((n, self.action_dim))
        for i, rng in enumerate(self.rngs):
            u[i] = rng.random()
            noise[i] = _noise(h.noise_method, h.noise_param, rng, self.action_dim)
        ids = _sample_index(probs, u)
        actions = np.clip(self.action_protos[np.arange(n), ids] + noise, 0.0, 1.0)
        return BatchTrace(obs, states, ids, actions)

    def learn(self, trace: BatchTrace, next_observations, rewards) -> None:
        h = self.hyper
        n = len(self)
        rows = np.arange(n)
        s, j = trace.states, trace.action_ids
        o, a = trace.observations, trace.actions
        o2 = np.asarray(next_observations, dtype=float)
        r = np.asarray(rewards, dtype=float)
        if o2.shape != o.shape or r.shape != (n,):
            raise ContractViolation("next observations / rewards do not match the population size")

        psi_u, psi_w = _neighborhoods(
            h,
            self._state_dist[s],
            self._action_dist[j],
            np.square(o - self.state_protos[rows, s]).sum(axis=-1),
            np.square(a - self.action_protos[rows, j]).sum(axis=-1),
        )

        s_next = tm._bmu(self.state_protos, o2, self._state_buf)
        target = r + h.discount * self.qtables[rows, s_next].max(axis=-1)

        improved = target > self.qtables[rows, s, j]
        _move(h.action_map_params, self.action_protos, a, psi_w, mask=improved, buf=self._action_buf)

        q = self.qtables
        delta = np.subtract(target[:, None, None], q, out=self._q_buf)
        delta *= h.q_learning_rate * psi_u[:, :, None]
        delta *= psi_w[:, None, :]
        q += delta

        _move(h.state_map_params, self.state_protos, o, psi_u, buf=self._state_buf)
