"""Brute-force bang-bang reachability for low-dimensional models.

Every sequence of extreme controls, switching on a coarse grid of ``n_s``
intervals over the horizon, is integrated from every initial state.  All
intermediate states are kept, so the cloud covers every time on the
integration grid rather than just the horizon.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .dynamics import rk4_batch
from .errors import OracleBudgetError

DEFAULT_BUDGET = 2**20


@dataclass
class OracleConfig:
    T_f: float = 1.0
    n_s: int = 8
    substeps: int = 5
    budget: int = DEFAULT_BUDGET
    include_intermediate: bool = True

    def __post_init__(self):
        if self.n_s < 1 or self.substeps < 1:
            raise ValueError("n_s and substeps must be positive")
        if self.T_f < 0:
            raise ValueError("T_f must be non-negative")

    @property
    def dt(self) -> float:
        return self.T_f / (self.n_s * self.substeps)


def brute_force_reachable(model, X0, config: OracleConfig, levels=None) -> np.ndarray:
    """Cloud of states reachable with bang-bang controls, in envelope coordinates.

    Parameters
    ----------
    X0 : ndarray (k, n)
        Discretised initial states.
    levels : ndarray (2, m), optional
        Lower and upper control level per control; defaults to the position
        limits of the model.

    Raises
    ------
    OracleBudgetError
        If ``2 ** (n_s * m)`` exceeds the configured budget.
    """
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    lim = model.control_limits
    if levels is None:
        levels = np.vstack([lim.delta_min, lim.delta_max])
    levels = np.asarray(levels, dtype=float)
    m = levels.shape[1]
    count = 2 ** (config.n_s * m)
    if count > config.budget:
        raise OracleBudgetError(f"{count} control sequences exceed the budget of {config.budget}")
    combos = np.array(np.meshgrid(*[[0, 1]] * m, indexing="ij")).reshape(m, -1).T  # (2^m, m)
    choices = levels[combos, np.arange(m)]  # (2^m, m)
    X = X0.copy()
    pieces = [model.envelope_coords_batch(X)]
    dt = config.dt
    for _ in range(config.n_s):
        nb = X.shape[0]
        X = np.repeat(X, len(choices), axis=0)
        Uc = np.tile(choices, (nb, 1))
        for s in range(config.substeps):
            X, ok = rk4_batch(model, X, Uc, dt)
            X = X[ok]
            Uc = Uc[ok]
            if config.include_intermediate or s == config.substeps - 1:
                pieces.append(model.envelope_coords_batch(X))
    if not config.include_intermediate:
        pieces = pieces[-1:]
    return np.concatenate(pieces)


def _scale_for(cloud, scale):
    if scale is None:
        span = cloud.max(axis=0) - cloud.min(axis=0)
        return np.where(span > 0, span, 1.0)
    return np.asarray(scale, dtype=float)


def containment_fraction(samples, cloud, dilation, scale=None) -> float:
    """Fraction of samples within ``dilation`` of the cloud.

    Distances are Euclidean after dividing every coordinate by ``scale``
    (default: the per-axis extent of the cloud).
    """
    pts = np.asarray(getattr(samples, "endpoints", samples), dtype=float)
    cloud = np.asarray(cloud, dtype=float)
    if pts.size == 0 or cloud.size == 0:
        raise ValueError("samples and cloud must be non-empty")
    pts = np.atleast_2d(pts)
    cloud = np.atleast_2d(cloud)
    if pts.shape[1] != cloud.shape[1]:
        raise ValueError("samples and cloud dimensions differ")
    sc = _scale_for(cloud, scale)
    dist, _ = cKDTree(cloud / sc).query(pts / sc)
    return float(np.mean(dist <= dilation))


def switching_slack(model, X0, config: OracleConfig, scale=None) -> float:
    """Dilation estimate: how far the cloud grows when ``n_s`` doubles.

    Computed as the largest distance from a point of the ``n_s`` cloud to the
    ``n_s / 2`` cloud (normalised coordinates), at equal integration step.
    """
    if config.n_s % 2:
        raise ValueError("n_s must be even")
    fine = brute_force_reachable(model, X0, config)
    coarse_cfg = OracleConfig(config.T_f, config.n_s // 2, config.substeps * 2, config.budget,
                              config.include_intermediate)
    coarse = brute_force_reachable(model, X0, coarse_cfg)
    sc = _scale_for(fine, scale)
    dist, _ = cKDTree(coarse / sc).query(fine / sc)
    return float(dist.max())


def export_cloud(cloud, names, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(list(names))
        for row in np.asarray(cloud):
            wr.writerow([repr(float(v)) for v in row])
