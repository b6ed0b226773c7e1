"""Bounded-torque pendulum used as a low-dimensional oracle target.

    theta' = omega
    omega' = -(g/l) sin(theta) - c * omega + tau / I

The torque is the single control.  The model exposes the same batch
interface as :class:`~probenv.dynamics.AircraftModel` so the Monte Carlo
sampler and the brute-force oracle can run on it unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import EffectorLimits


@dataclass(frozen=True)
class PendulumModel:
    name: str = "pendulum-2d"
    g_over_l: float = 9.81
    damping: float = 0.1
    inertia: float = 1.0
    tau_max: float = 2.0
    tau_rate: float = 1.0e4
    theta_limit: float = np.pi

    coord_names = ("theta", "omega")
    n_state = 2
    n_effective = 1

    @classmethod
    def from_config(cls, cfg):
        keys = ("g_over_l", "damping", "inertia", "tau_max", "tau_rate", "theta_limit")
        return cls(**{k: float(cfg[k]) for k in keys if k in cfg})

    @property
    def control_limits(self) -> EffectorLimits:
        return EffectorLimits([-self.tau_max], [self.tau_max], [self.tau_rate], [self.tau_rate])

    @property
    def explore_mask(self) -> np.ndarray:
        return np.array([True])

    @property
    def inv_augmented_inertia(self) -> np.ndarray:
        return np.array([[1.0 / self.inertia]])

    def dynamics_u(self, X, Uc):
        X = np.atleast_2d(X)
        Uc = np.atleast_2d(Uc)
        d = np.empty_like(X)
        d[:, 0] = X[:, 1]
        d[:, 1] = -self.g_over_l * np.sin(X[:, 0]) - self.damping * X[:, 1] + Uc[:, 0] / self.inertia
        ok = np.all(np.isfinite(X), axis=1) & (np.abs(X[:, 0]) <= self.theta_limit)
        return d, ok

    def effectiveness_u(self, X, Uc):
        """Generalised-force effectiveness of the torque, shape (N, 1, 1)."""
        X = np.atleast_2d(X)
        return np.ones((X.shape[0], 1, 1)), np.ones(X.shape[0], dtype=bool)

    def envelope_coords_batch(self, X):
        return np.atleast_2d(np.asarray(X, dtype=float))[:, :2].copy()


class PendulumTrimSet:
    """Finite set of constant-torque equilibria ``theta_e = asin(tau I / (g/l))``.

    Origins are recorded as ``(theta_e, tau_e)``.  A finite set lets the
    brute-force oracle enumerate exactly the same initial states the
    Monte Carlo sampler can draw.
    """

    def __init__(self, model: PendulumModel, torques=(0.0,)):
        self.model = model
        self.torques = np.asarray(torques, dtype=float)
        ratio = self.torques / (model.inertia * model.g_over_l)
        if np.any(np.abs(ratio) > 1.0) or np.any(np.abs(self.torques) > model.tau_max):
            raise ValueError("torques must admit an equilibrium within the torque limit")
        self.thetas = np.arcsin(ratio)

    def draw_origin(self, rng):
        k = int(rng.integers(len(self.torques)))
        return self.thetas[k], self.torques[k]

    def initial_batch(self, theta, tau):
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        X = np.zeros((theta.size, 2))
        X[:, 0] = theta
        return X, np.atleast_1d(np.asarray(tau, dtype=float))[:, None].copy()

    def initial_states(self):
        return self.initial_batch(self.thetas, self.torques)
