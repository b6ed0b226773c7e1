"""Envelope protection laws.

Two command-modification laws are provided:

* SCB (state constraint based): saturate the reference to the per-node
  constraints of the envelope database.
* PROB (probabilistic): add ``chi = -(M_env - M0) K_fep J_env`` whenever the
  log-membership metric falls to ``M0`` or below, pushing the command up the
  membership gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .envelope_db import binarize_threshold  # noqa: F401  (re-exported)

# default gains per protected state (database units)
DEFAULT_K_FEP = {"alpha": 0.80, "beta": 0.80, "p": 0.05, "q": 0.05, "r": 0.05}


@dataclass
class ScbConfig:
    k0: float = 3.0

    def __post_init__(self):
        if self.k0 < 0:
            raise ValueError("k0 must be non-negative")


@dataclass
class ProbFepConfig:
    M0: float = 0.0
    K_fep: dict = field(default_factory=lambda: dict(DEFAULT_K_FEP))

    def __post_init__(self):
        if any(v < 0 for v in self.K_fep.values()):
            raise ValueError("K_fep gains must be non-negative")

    def gains(self, names) -> np.ndarray:
        return np.array([self.K_fep.get(n, 0.0) for n in names])


def scb_protect(x_ref, x_min, x_max):
    """Elementwise ``max(x_min, min(x_max, x_ref))``."""
    x_min = np.asarray(x_min, dtype=float)
    x_max = np.asarray(x_max, dtype=float)
    if np.any(x_min > x_max):
        raise ValueError("x_min must not exceed x_max")
    out = np.maximum(x_min, np.minimum(x_max, np.asarray(x_ref, dtype=float)))
    return float(out) if out.ndim == 0 else out


def prob_compensation(M_env, J_env, K_fep, M0=0.0):
    """Modification term ``chi``; zero while ``M_env > M0``."""
    J = np.asarray(J_env, dtype=float)
    if M_env > M0:
        return np.zeros_like(J)
    return -(M_env - M0) * np.asarray(K_fep, dtype=float) * J


def prob_protect(x_ref, M_env, J_env, config: ProbFepConfig | None = None, names=None, K_fep=None):
    """``x_ref + chi``.

    Gains come from ``K_fep`` if given, else from ``config`` looked up by
    ``names``.
    """
    config = config or ProbFepConfig()
    if K_fep is None:
        K_fep = config.gains(names) if names is not None else np.full(np.shape(J_env), 1.0)
    chi = prob_compensation(M_env, J_env, K_fep, config.M0)
    out = np.asarray(x_ref, dtype=float) + chi
    return float(out) if out.ndim == 0 else out


def modification_bound(M_min, M0, K_fep, grad_bound) -> float:
    """Upper bound on ``||chi||_2`` over a database.

    ``M_min`` is the smallest stored metric (at least ``ln(epsilon)``) and
    ``grad_bound`` the per-component gradient bound of the database.
    """
    K = np.asarray(K_fep, dtype=float)
    return float(abs(min(M_min, M0) - M0) * np.linalg.norm(K * np.asarray(grad_bound, dtype=float)))
