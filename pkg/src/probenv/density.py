"""Kernel density estimation and the forward/backward membership field."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DegenerateDimensionError, EmptyEnvelopeError, GridError
from .grid import GridSpec

TRUNCATION_RADIUS = 5.0
TRUNCATE_ABOVE_NODES = 100_000


def silverman_bandwidths(samples, d=None, names=None) -> np.ndarray:
    """Per-dimension Silverman bandwidths ``sigma_j [4/((d+2)N)]^(1/(d+4))``.

    ``sigma_j`` is the sample standard deviation (``ddof=1``).

    Raises
    ------
    DegenerateDimensionError
        If a dimension has zero variance; the error names the dimension.
    """
    y = np.asarray(samples, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    n, dd = y.shape
    d = dd if d is None else int(d)
    if n < 2:
        raise ValueError("at least two samples are required")
    sigma = y.std(axis=0, ddof=1)
    for j in range(dd):
        if not sigma[j] > 0:
            raise DegenerateDimensionError(names[j] if names is not None else j)
    return sigma * (4.0 / ((d + 2) * n)) ** (1.0 / (d + 4))


@dataclass(frozen=True, eq=False)
class KdeModel:
    """Product-Gaussian KDE; immutable after construction."""

    samples: np.ndarray
    bandwidths: np.ndarray
    names: tuple = ()

    def __post_init__(self):
        s = np.ascontiguousarray(np.atleast_2d(np.asarray(self.samples, dtype=float)))
        if s.shape[0] == 1 and np.asarray(self.samples).ndim == 1:
            s = s.T.copy()
        h = np.asarray(self.bandwidths, dtype=float).ravel()
        if h.size != s.shape[1]:
            raise ValueError("bandwidth count must equal the sample dimension")
        if np.any(~(h > 0)):
            raise ValueError("bandwidths must be positive")
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "bandwidths", h)
        names = tuple(self.names) if self.names else tuple(f"x{j}" for j in range(s.shape[1]))
        object.__setattr__(self, "names", names)

    @classmethod
    def from_samples(cls, samples, names=()):
        s = np.asarray(samples, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        return cls(s, silverman_bandwidths(s, names=names or None), tuple(names))

    @property
    def d(self) -> int:
        return self.samples.shape[1]

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    def evaluate(self, x, radius=np.inf) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        pts = x.reshape(-1, self.d)
        return kernels.kde_points(self.samples, self.bandwidths, pts, float(radius))

    def evaluate_grid(self, grid: GridSpec, truncate=None, radius=TRUNCATION_RADIUS) -> np.ndarray:
        """Density at every grid node (flat, row-major).

        Truncation at ``radius`` bandwidths is used by default when the grid
        has more than :data:`TRUNCATE_ABOVE_NODES` nodes.
        """
        if tuple(grid.names) != tuple(self.names):
            raise GridError(f"grid dimensions {grid.names} do not match KDE {self.names}")
        if truncate is None:
            truncate = grid.n_nodes > TRUNCATE_ABOVE_NODES
        if truncate:
            return kernels.kde_grid_truncated(self.samples, self.bandwidths, grid.mins_arr,
                                              grid.steps_arr, grid.shape, float(radius))
        return kernels.kde_points(self.samples, self.bandwidths, grid.nodes())


def kde_evaluate(model: KdeModel, x, radius=np.inf):
    """Density at one point (scalar) or many points (array)."""
    out = model.evaluate(x, radius)
    return float(out[0]) if np.ndim(x) <= 1 and out.size == 1 else out


def membership_from_densities(f_f, f_b, norm):
    """``mu = f_f f_b / norm`` clamped to [0, 1]."""
    if not norm > 0:
        raise EmptyEnvelopeError("normalisation constant must be positive")
    mu = np.clip(np.asarray(f_f, dtype=float) * np.asarray(f_b, dtype=float) / norm, 0.0, 1.0)
    return float(mu) if mu.ndim == 0 else mu


@dataclass(frozen=True, eq=False)
class MembershipField:
    grid: GridSpec
    values: np.ndarray
    norm: float
    argmax: int

    @property
    def argmax_coords(self) -> np.ndarray:
        return self.grid.node(np.unravel_index(self.argmax, self.grid.shape))


def build_membership_field(kde_f: KdeModel, kde_b: KdeModel, grid: GridSpec, truncate=None,
                           radius=TRUNCATION_RADIUS) -> MembershipField:
    """Normalised product of the forward and backward densities on a grid.

    Raises
    ------
    EmptyEnvelopeError
        If the product is zero at every node.
    """
    if grid.n_nodes == 0:
        raise GridError("empty grid")
    if kde_f.d != grid.d or kde_b.d != grid.d:
        raise GridError("KDE and grid dimensions differ")
    ff = kde_f.evaluate_grid(grid, truncate, radius)
    fb = kde_b.evaluate_grid(grid, truncate, radius)
    prod = ff * fb
    k = int(np.argmax(prod))
    norm = float(prod[k])
    if not norm > 0:
        raise EmptyEnvelopeError("forward and backward densities do not overlap on the grid")
    mu = np.clip(prod / norm, 0.0, 1.0)
    return MembershipField(grid, mu, norm, k)
