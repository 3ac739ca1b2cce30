"""Self-Organizing Map and Dynamic Self-Organizing Map lattices.

Both map flavours share :class:`MapGrid`, a rectangular lattice whose
neurons each carry a prototype vector in the unit hypercube. Neighborhoods
are measured on the lattice with the Manhattan (4-connected path) metric.

The module-level functions operate on a single grid. The underscore
kernels broadcast over any leading axes so that a whole population of
same-shaped maps can be trained in one call; the single-grid functions are
thin wrappers around them, which keeps both paths numerically identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import InvalidInputError

#: Below this input-to-BMU distance the elastic neighborhood collapses onto the BMU.
SINGULAR_DISTANCE = 1e-12


@dataclass(frozen=True)
class SomParams:
    """Constant Kohonen parameters (no annealing)."""

    learning_rate: float = 0.5
    neighborhood_width: float = 1.5

    def __post_init__(self):
        if not 0.0 <= self.learning_rate <= 1.0:
            raise InvalidInputError(f"learning_rate must be in [0, 1], got {self.learning_rate}")
        if not self.neighborhood_width > 0.0:
            raise InvalidInputError(
                f"neighborhood_width must be positive, got {self.neighborhood_width}"
            )


@dataclass(frozen=True)
class DsomParams:
    """Constant DSOM parameters: learning rate and elasticity."""

    learning_rate: float = 0.8
    elasticity: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.learning_rate <= 1.0:
            raise InvalidInputError(f"learning_rate must be in [0, 1], got {self.learning_rate}")
        if not self.elasticity > 0.0:
            raise InvalidInputError(f"elasticity must be positive, got {self.elasticity}")


@lru_cache(maxsize=None)
def lattice_positions(rows: int, cols: int) -> np.ndarray:
    """(row, col) coordinates of every neuron, row-major."""
    idx = np.arange(rows * cols)
    pos = np.stack([idx // cols, idx % cols], axis=1)
    pos.setflags(write=False)
    return pos


@lru_cache(maxsize=None)
def lattice_distances(rows: int, cols: int) -> np.ndarray:
    """Matrix of Manhattan distances between every pair of neurons."""
    pos = lattice_positions(rows, cols)
    dist = np.abs(pos[:, None, :] - pos[None, :, :]).sum(axis=-1).astype(float)
    dist.setflags(write=False)
    return dist


@dataclass
class MapGrid:
    """A rows x cols lattice of prototype vectors.

    Neuron ``i`` sits at lattice position ``(i // cols, i % cols)``.
    ``prototypes`` has shape ``(rows * cols, dim)`` and is mutated in place
    by the training functions.
    """

    rows: int
    cols: int
    prototypes: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise InvalidInputError(f"grid shape must be positive, got {self.rows}x{self.cols}")
        protos = self.prototypes
        if not isinstance(protos, np.ndarray) or protos.dtype != np.float64:
            protos = self.prototypes = np.asarray(protos, dtype=float)
        if protos.ndim != 2 or protos.shape[0] != self.rows * self.cols:
            raise InvalidInputError(
                f"expected {self.rows * self.cols} prototypes, got array of shape {protos.shape}"
            )
        if protos.shape[1] < 1:
            raise InvalidInputError("prototype dimension must be positive")
        if not np.all((protos >= 0.0) & (protos <= 1.0)):
            raise InvalidInputError("prototype coordinates must lie in [0, 1]")

    @classmethod
    def random(cls, rows: int, cols: int, dim: int, rng: np.random.Generator) -> "MapGrid":
        """Grid with prototypes drawn i.i.d. uniform on [0, 1]^dim."""
        return cls(rows, cols, rng.random((rows * cols, dim)))

    @property
    def size(self) -> int:
        return self.rows * self.cols

    @property
    def dim(self) -> int:
        return self.prototypes.shape[1]

    def position(self, i: int) -> tuple[int, int]:
        self._check_index(i)
        return divmod(int(i), self.cols)

    @property
    def distances(self) -> np.ndarray:
        return lattice_distances(self.rows, self.cols)

    def copy(self) -> "MapGrid":
        return MapGrid(self.rows, self.cols, self.prototypes.copy())

    def _check_index(self, i):
        if not 0 <= int(i) < self.size:
            raise InvalidInputError(f"neuron index {i} outside [0, {self.size})")

    def _check_input(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise InvalidInputError(f"expected a vector of length {self.dim}, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise InvalidInputError("input vector has non-finite coordinates")
        return x


# -- broadcasting kernels ---------------------------------------------------


def _bmu(protos: np.ndarray, x: np.ndarray, buf: np.ndarray | None = None) -> np.ndarray:
    # protos (..., n, d), x (..., d) -> (...,); argmin keeps the lowest index on ties.
    # ``buf`` (shaped like protos) avoids a fresh allocation on hot paths.
    diff = np.subtract(protos, x[..., None, :], out=buf)
    return np.argmin(np.einsum("...kd,...kd->...k", diff, diff), axis=-1)


def _gaussian_weights(lattice_dist: np.ndarray, width: float) -> np.ndarray:
    return np.exp(-np.square(lattice_dist) / (2.0 * width * width))


def _elastic_weights(lattice_dist: np.ndarray, center_sq_err: np.ndarray, elasticity: float) -> np.ndarray:
    """DSOM neighborhood with the squared norms; rows of ``lattice_dist`` are centred on the BMU."""
    center_sq_err = np.asarray(center_sq_err, dtype=float)[..., None]
    singular = center_sq_err < SINGULAR_DISTANCE**2
    safe = np.where(singular, 1.0, center_sq_err)
    w = np.exp(-np.square(lattice_dist) / (elasticity * elasticity * safe))
    return np.where(singular, (lattice_dist == 0).astype(float), w)


def _som_move(protos: np.ndarray, x: np.ndarray, weights: np.ndarray, lr, buf: np.ndarray | None = None) -> None:
    step = np.subtract(x[..., None, :], protos, out=buf)
    step *= (np.asarray(lr, dtype=float)[..., None] * weights)[..., None]
    protos += step
    np.clip(protos, 0.0, 1.0, out=protos)


def _dsom_move(protos: np.ndarray, x: np.ndarray, weights: np.ndarray, lr, buf: np.ndarray | None = None) -> None:
    diff = np.subtract(x[..., None, :], protos, out=buf)
    norm = np.sqrt(np.einsum("...kd,...kd->...k", diff, diff))
    lr = np.asarray(lr, dtype=float)[..., None]
    # capped at 1 so a step never overshoots the input (keeps prototypes in the unit box)
    factor = np.minimum(lr * norm * weights, 1.0)
    diff *= factor[..., None]
    protos += diff
    np.clip(protos, 0.0, 1.0, out=protos)


# -- single-grid operations -------------------------------------------------


def bmu(grid: MapGrid, x) -> int:
    """Index of the neuron whose prototype is closest (Euclidean) to ``x``.

    Ties go to the lowest index.
    """
    x = grid._check_input(x)
    return int(_bmu(grid.prototypes, x))


def grid_distance(grid: MapGrid, i: int, j: int) -> float:
    """Manhattan distance between neurons ``i`` and ``j`` on the lattice."""
    grid._check_index(i)
    grid._check_index(j)
    return float(grid.distances[int(i), int(j)])


def gaussian_neighborhood(grid: MapGrid, center: int, width: float) -> np.ndarray:
    """Gaussian weight ``exp(-d^2 / (2 width^2))`` of every neuron around ``center``."""
    grid._check_index(center)
    if not width > 0:
        raise InvalidInputError(f"width must be positive, got {width}")
    return _gaussian_weights(grid.distances[int(center)], width)


def dsom_neighborhood(grid: MapGrid, center: int, x, elasticity: float) -> np.ndarray:
    """Elastic DSOM weights around ``center`` for input ``x``.

    ``exp(-d(i, center)^2 / (elasticity^2 * |x - W_center|^2))``. When ``x``
    coincides with the centre prototype the weights become the indicator of
    the centre neuron.
    """
    grid._check_index(center)
    if not elasticity > 0:
        raise InvalidInputError(f"elasticity must be positive, got {elasticity}")
    x = grid._check_input(x)
    sq_err = np.square(x - grid.prototypes[int(center)]).sum()
    return _elastic_weights(grid.distances[int(center)], sq_err, elasticity)


def som_train_step(grid: MapGrid, x, params: SomParams, center: int | None = None) -> tuple[MapGrid, int]:
    """One Kohonen update of ``grid`` toward ``x``, in place.

    Every prototype moves by ``theta * alpha * (x - W)`` where ``theta`` is
    the gaussian neighborhood around the BMU. ``center`` forces the
    neighborhood centre instead of searching for the BMU.

    Returns:
        The (mutated) grid and the centre neuron used.
    """
    x = grid._check_input(x)
    u = bmu(grid, x) if center is None else int(center)
    weights = gaussian_neighborhood(grid, u, params.neighborhood_width)
    _som_move(grid.prototypes, x, weights, params.learning_rate)
    return grid, u


def dsom_train_step(grid: MapGrid, x, params: DsomParams, center: int | None = None) -> tuple[MapGrid, int]:
    """One DSOM update of ``grid`` toward ``x``, in place.

    Each prototype receives ``alpha * |x - W_i| * h(i) * (x - W_i)`` with the
    elastic neighborhood ``h`` centred on the BMU (or on ``center``).
    """
    x = grid._check_input(x)
    u = bmu(grid, x) if center is None else int(center)
    weights = dsom_neighborhood(grid, u, x, params.elasticity)
    _dsom_move(grid.prototypes, x, weights, params.learning_rate)
    return grid, u


def train_step(grid: MapGrid, x, params: SomParams | DsomParams, center: int | None = None):
    """Dispatch to :func:`som_train_step` or :func:`dsom_train_step` by parameter type."""
    if isinstance(params, DsomParams):
        return dsom_train_step(grid, x, params, center)
    return som_train_step(grid, x, params, center)


def distortion(grid: MapGrid, dataset) -> float:
    """Mean squared distance from each data point to its closest prototype."""
    data = np.asarray(dataset, dtype=float)
    if data.ndim != 2 or data.shape[0] == 0:
        raise InvalidInputError("dataset must be a nonempty 2-D array of points")
    if data.shape[1] != grid.dim:
        raise InvalidInputError(f"dataset dimension {data.shape[1]} != grid dimension {grid.dim}")
    sq = np.square(data[:, None, :] - grid.prototypes[None, :, :]).sum(axis=-1)
    return float(sq.min(axis=1).mean())
