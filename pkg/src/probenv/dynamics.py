"""
Rigid-body aircraft dynamics with a polynomial, control-affine aero surrogate.

State layout (12 components)::

    [u, v, w, p, q, r, phi, theta, psi, x_n, y_e, h]

Units are ft, s, rad, slug and lbf throughout.  Forces and moments are the
sum of a state-dependent base airframe term and one affine column per
effector, so the control effectiveness matrix is exact rather than a
linearisation.  Effectors are scaled either by dynamic pressure (aero
surfaces) or by thrust (vectoring nozzles).

Every batch routine takes states of shape ``(N, 12)`` and returns a validity
mask alongside the result; the single-state wrappers raise instead.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DomainError, IntegrationError, ProbEnvError, UndefinedAnglesError

SCHEMA_VERSION = 1

U, V, W, P, Q, R, PHI, THETA, PSI, XN, YE, H = range(12)
STATE_NAMES = ("u", "v", "w", "p", "q", "r", "phi", "theta", "psi", "x_n", "y_e", "h")
ENVELOPE_NAMES = ("p", "q", "r", "alpha", "beta", "vg", "h")
AXES = ("CX", "CY", "CZ", "Cl", "Cm", "Cn")
AERO_VARS = ("alpha", "beta", "phat", "qhat", "rhat", "mach")

FORWARD = "forward"
BACKWARD = "backward"


def _direction_sign(direction):
    if direction in (FORWARD, "fwd", 1):
        return 1.0
    if direction in (BACKWARD, "bwd", -1):
        return -1.0
    raise ValueError(f"unknown direction {direction!r}")


# --------------------------------------------------------------------------
# Value types
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class StateVector:
    u: float
    v: float
    w: float
    p: float = 0.0
    q: float = 0.0
    r: float = 0.0
    phi: float = 0.0
    theta: float = 0.0
    psi: float = 0.0
    x_n: float = 0.0
    y_e: float = 0.0
    h: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in STATE_NAMES], dtype=float)

    @classmethod
    def from_array(cls, x) -> "StateVector":
        x = np.asarray(x, dtype=float)
        return cls(*(float(v) for v in x[:12]))

    @property
    def vg(self) -> float:
        return float(np.sqrt(self.u**2 + self.v**2 + self.w**2))


@dataclass(frozen=True)
class EnvelopeCoords:
    """The seven protected/parameter coordinates of the envelope."""

    p: float
    q: float
    r: float
    alpha: float
    beta: float
    vg: float
    h: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in ENVELOPE_NAMES], dtype=float)

    @classmethod
    def from_array(cls, a) -> "EnvelopeCoords":
        return cls(*(float(v) for v in np.asarray(a, dtype=float)[:7]))

    def to_state(self, phi=0.0, theta=0.0, psi=0.0) -> StateVector:
        """Rebuild body velocities from (vg, alpha, beta)."""
        u, v, w = _uvw_from_wind(self.vg, self.alpha, self.beta)
        return StateVector(u, v, w, self.p, self.q, self.r, phi, theta, psi, 0.0, 0.0, self.h)


@dataclass(frozen=True)
class ControlVector:
    delta: np.ndarray
    thrust: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "delta", np.asarray(self.delta, dtype=float).copy())

    def as_array(self) -> np.ndarray:
        """Effector deflections followed by thrust."""
        return np.append(self.delta, self.thrust)

    @classmethod
    def from_array(cls, a) -> "ControlVector":
        a = np.asarray(a, dtype=float)
        return cls(a[:-1], float(a[-1]))


@dataclass(frozen=True)
class EffectorLimits:
    """Position and no-load rate limits, one entry per effector."""

    delta_min: np.ndarray
    delta_max: np.ndarray
    rate_min: np.ndarray
    rate_max: np.ndarray

    def __post_init__(self):
        for name in ("delta_min", "delta_max", "rate_min", "rate_max"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        if np.any(self.delta_min >= self.delta_max):
            raise ValueError("delta_min must be < delta_max")
        if np.any(self.rate_min < 0) or np.any(self.rate_max < 0):
            raise ValueError("rate limits must be non-negative")

    def __len__(self):
        return len(self.delta_min)


def admissible_increment_bounds(limits: EffectorLimits, delta_0, dt: float):
    """Reachable deflection interval after one step of length ``dt``.

    Returns ``(delta_l, delta_u)``: the position limits intersected with the
    rate-limited interval around ``delta_0``.  Broadcasts over leading batch
    dimensions of ``delta_0``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    d0 = np.asarray(delta_0.as_array() if isinstance(delta_0, ControlVector) else delta_0, dtype=float)
    upper = np.minimum(limits.delta_max, d0 + limits.rate_max * dt)
    lower = np.maximum(limits.delta_min, d0 - limits.rate_min * dt)
    # a state already outside position limits still gets an ordered interval
    lower = np.minimum(lower, upper)
    return lower, upper


# --------------------------------------------------------------------------
# Atmosphere
# --------------------------------------------------------------------------

_H_TABLE = np.arange(0.0, 70001.0, 500.0)


def _isa(h):
    h = np.asarray(h, dtype=float)
    t_trop = 518.67 - 0.00356616 * h
    rho_trop = 0.0023769 * (t_trop / 518.67) ** 4.2561
    t11 = 518.67 - 0.00356616 * 36089.0
    rho11 = 0.0023769 * (t11 / 518.67) ** 4.2561
    strat = h > 36089.0
    temp = np.where(strat, t11, t_trop)
    rho = np.where(strat, rho11 * np.exp(-(h - 36089.0) / 20806.0), rho_trop)
    return temp, rho


_T_TABLE, _RHO_TABLE = _isa(_H_TABLE)
_A_TABLE = np.sqrt(1.4 * 1716.49 * _T_TABLE)


def speed_of_sound(h):
    """Standard-atmosphere speed of sound (ft/s), tabulated every 500 ft."""
    return np.interp(h, _H_TABLE, _A_TABLE)


def air_density(h):
    """Standard-atmosphere density (slug/ft^3), tabulated every 500 ft."""
    return np.interp(h, _H_TABLE, _RHO_TABLE)


# --------------------------------------------------------------------------
# Polynomial coefficient model
# --------------------------------------------------------------------------


def _parse_terms(terms):
    exps, coefs = [], []
    for t in terms:
        unknown = set(t) - {"c", *AERO_VARS}
        if unknown:
            raise ValueError(f"unknown polynomial variables {sorted(unknown)}")
        exps.append(tuple(int(t.get(v, 0)) for v in AERO_VARS))
        coefs.append(float(t["c"]))
    return exps, coefs


class _MonomialBasis:
    """Shared monomial basis so that every coefficient is one contraction."""

    def __init__(self):
        self.exponents: list[tuple] = [(0,) * len(AERO_VARS)]
        self._index = {self.exponents[0]: 0}

    def index(self, exp):
        if exp not in self._index:
            self._index[exp] = len(self.exponents)
            self.exponents.append(exp)
        return self._index[exp]

    def freeze(self):
        self.exp_array = np.array(self.exponents, dtype=float)
        self.maxpow = int(self.exp_array.max()) if self.exp_array.size else 0

    def evaluate(self, vars_):
        # vars_: (N, 6) -> (N, nb)
        n, nv = vars_.shape
        powers = np.ones((self.maxpow + 1, n, nv))
        for k in range(1, self.maxpow + 1):
            powers[k] = powers[k - 1] * vars_
        e = np.asarray(self.exponents, dtype=int)
        out = np.ones((n, len(e)))
        for j in range(nv):
            out *= powers[e[:, j], :, j].T
        return out


def _coef_matrix(basis, spec):
    """Map {axis: terms} to a (nb, 6) coefficient matrix."""
    entries = []
    for ax_i, ax in enumerate(AXES):
        exps, coefs = _parse_terms(spec.get(ax, []))
        for e, c in zip(exps, coefs):
            entries.append((basis.index(e), ax_i, c))
    unknown = set(spec) - set(AXES)
    if unknown:
        raise ValueError(f"unknown coefficient axes {sorted(unknown)}")
    return entries


# --------------------------------------------------------------------------
# Aircraft model
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Effector:
    name: str
    delta_min: float
    delta_max: float
    rate_min: float
    rate_max: float
    scale: str
    effectiveness: dict


@dataclass(frozen=True, eq=False)
class AircraftModel:
    """Immutable 6-DOF surrogate built from a JSON-style config mapping.

    Use :func:`load_model` or :meth:`from_config`; the constructor is
    internal.
    """

    name: str
    mass: float
    inertia: np.ndarray
    S: float
    b: float
    cbar: float
    g: float
    effectors: tuple
    base_aero: dict
    T_max: float
    T_rate: float
    thrust_dir: np.ndarray
    thrust_arm: np.ndarray
    vectoring: bool
    explore_thrust: bool
    domain: dict
    theta_guard: float
    trim_groups: dict
    config: dict = field(repr=False, default_factory=dict)

    def __post_init__(self):
        J = np.asarray(self.inertia, dtype=float)
        if J.shape != (3, 3) or not np.allclose(J, J.T):
            raise ValueError("inertia must be a symmetric 3x3 matrix")
        if np.any(np.linalg.eigvalsh(J) <= 0):
            raise ValueError("inertia must be positive definite")
        object.__setattr__(self, "inertia", J)
        object.__setattr__(self, "inertia_inv", np.linalg.inv(J))
        basis = _MonomialBasis()
        base_entries = _coef_matrix(basis, self.base_aero)
        eff_entries = [_coef_matrix(basis, e.effectiveness) for e in self.effectors]
        basis.freeze()
        nb = len(basis.exponents)
        base = np.zeros((nb, 6))
        for i, ax, c in base_entries:
            base[i, ax] += c
        eff = np.zeros((nb, 6, len(self.effectors)))
        for k, entries in enumerate(eff_entries):
            for i, ax, c in entries:
                eff[i, ax, k] += c
        object.__setattr__(self, "_basis", basis)
        object.__setattr__(self, "_base_coef", base)
        object.__setattr__(self, "_eff_coef", eff)
        scale_thrust = np.array([e.scale == "thrust" for e in self.effectors], dtype=bool)
        object.__setattr__(self, "_thrust_scaled", scale_thrust)
        inv_aug = np.zeros((6, 6))
        inv_aug[:3, :3] = np.eye(3) / self.mass
        inv_aug[3:, 3:] = self.inertia_inv
        object.__setattr__(self, "inv_augmented_inertia", inv_aug)
        d = np.asarray(self.thrust_dir, dtype=float)
        object.__setattr__(self, "thrust_dir", d / np.linalg.norm(d))
        object.__setattr__(self, "thrust_arm", np.asarray(self.thrust_arm, dtype=float))
        object.__setattr__(self, "_thrust_moment", np.cross(self.thrust_arm, self.thrust_dir))

    # -- construction -------------------------------------------------------

    @classmethod
    def from_config(cls, cfg: dict) -> "AircraftModel":
        version = cfg.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ProbEnvError(f"unsupported model schema_version {version!r}")
        effs = []
        for e in cfg["effectors"]:
            scale = e.get("scale", "qbar")
            if scale not in ("qbar", "thrust"):
                raise ValueError(f"effector {e['name']}: unknown scale {scale!r}")
            effs.append(
                Effector(
                    e["name"],
                    float(e["delta_min"]),
                    float(e["delta_max"]),
                    float(e["rate_min"]),
                    float(e["rate_max"]),
                    scale,
                    e.get("effectiveness", {}),
                )
            )
        th = cfg["thrust"]
        geo = cfg["geometry"]
        dom = {k: tuple(map(float, v)) for k, v in cfg.get("domain", {}).items()}
        angles = th.get("direction", [0.0, 0.0])
        ep, ey = float(angles[0]), float(angles[1])
        tdir = np.array([np.cos(ep) * np.cos(ey), np.sin(ey), -np.sin(ep) * np.cos(ey)])
        return cls(
            name=cfg["name"],
            mass=float(cfg["mass"]),
            inertia=np.asarray(cfg["inertia"], dtype=float),
            S=float(geo["S"]),
            b=float(geo["b"]),
            cbar=float(geo["cbar"]),
            g=float(cfg.get("g", 32.174)),
            effectors=tuple(effs),
            base_aero=cfg.get("base_aero", {}),
            T_max=float(th["T_max"]),
            T_rate=float(th.get("rate", 1e4)),
            thrust_dir=tdir,
            thrust_arm=np.asarray(th.get("arm", [0.0, 0.0, 0.0]), dtype=float),
            vectoring=bool(th.get("vectoring", False)),
            explore_thrust=bool(th.get("explore", th.get("vectoring", False))),
            domain=dom,
            theta_guard=np.deg2rad(float(cfg.get("theta_guard_deg", 85.0))),
            trim_groups={k: tuple(v) for k, v in cfg.get("trim", {}).get("groups", {}).items()},
            config=cfg,
        )

    def without_effectors(self, names: Sequence[str]) -> "AircraftModel":
        """Copy of the model with the named effectors removed."""
        names = set(names)
        cfg = json.loads(json.dumps(self.config))
        missing = names - {e["name"] for e in cfg["effectors"]}
        if missing:
            raise KeyError(f"no such effectors: {sorted(missing)}")
        cfg["effectors"] = [e for e in cfg["effectors"] if e["name"] not in names]
        groups = cfg.get("trim", {}).get("groups", {})
        for k in list(groups):
            groups[k] = [n for n in groups[k] if n not in names]
            if not groups[k]:
                del groups[k]
        cfg["name"] = self.name + "-without-" + "-".join(sorted(names))
        return AircraftModel.from_config(cfg)

    # -- basic properties ---------------------------------------------------

    @property
    def n_effectors(self) -> int:
        return len(self.effectors)

    @property
    def effector_names(self) -> tuple:
        return tuple(e.name for e in self.effectors)

    @property
    def limits(self) -> EffectorLimits:
        """Limits of all effectors plus thrust (last entry)."""
        e = self.effectors
        return EffectorLimits(
            np.array([x.delta_min for x in e] + [0.0]),
            np.array([x.delta_max for x in e] + [self.T_max]),
            np.array([x.rate_min for x in e] + [self.T_rate]),
            np.array([x.rate_max for x in e] + [self.T_rate]),
        )

    @property
    def effector_limits(self) -> EffectorLimits:
        e = self.effectors
        return EffectorLimits(
            np.array([x.delta_min for x in e]),
            np.array([x.delta_max for x in e]),
            np.array([x.rate_min for x in e]),
            np.array([x.rate_max for x in e]),
        )

    @property
    def n_state(self) -> int:
        return 12

    @property
    def n_effective(self) -> int:
        return 6

    def index_of(self, name: str) -> int:
        return self.effector_names.index(name)

    # -- batch evaluation ---------------------------------------------------

    def aero_variables(self, X):
        """Aero inputs, dynamic pressure, speed and a validity mask."""
        X = np.atleast_2d(X)
        u, v, w = X[:, U], X[:, V], X[:, W]
        vg = np.sqrt(u * u + v * v + w * w)
        ok = vg > 1e-6
        vs = np.where(ok, vg, 1.0)
        alpha = np.arctan2(w, u)
        beta = np.arcsin(np.clip(v / vs, -1.0, 1.0))
        h = X[:, H]
        mach = vs / speed_of_sound(h)
        qbar = 0.5 * air_density(h) * vs * vs
        vars_ = np.empty((X.shape[0], len(AERO_VARS)))
        vars_[:, 0] = alpha
        vars_[:, 1] = beta
        vars_[:, 2] = X[:, P] * self.b / (2 * vs)
        vars_[:, 3] = X[:, Q] * self.cbar / (2 * vs)
        vars_[:, 4] = X[:, R] * self.b / (2 * vs)
        vars_[:, 5] = mach
        for key, col in (("alpha", alpha), ("beta", beta), ("mach", mach), ("h", h)):
            if key in self.domain:
                lo, hi = self.domain[key]
                ok &= (col >= lo) & (col <= hi)
        ok &= np.abs(X[:, THETA]) < self.theta_guard
        ok &= np.all(np.isfinite(X), axis=1)
        return vars_, qbar, vg, ok

    def _unit_columns(self, basis_vals, qbar, T):
        """Per-effector force/moment per radian, shape (N, 6, m)."""
        col = np.einsum("nb,bam->nam", basis_vals, self._eff_coef)
        ref = np.array([1.0, 1.0, 1.0, self.b, self.cbar, self.b])
        aero_scale = (qbar * self.S)[:, None, None] * ref[None, :, None]
        thrust_scale = np.broadcast_to(np.asarray(T, dtype=float).reshape(-1, 1, 1), aero_scale.shape)
        scale = np.where(self._thrust_scaled[None, None, :], thrust_scale, aero_scale)
        return col * scale

    def forces_moments(self, X, delta, T):
        """Body forces and moments ``(N, 6)`` plus the validity mask."""
        X = np.atleast_2d(X)
        delta = np.atleast_2d(delta)
        T = np.broadcast_to(np.asarray(T, dtype=float), (X.shape[0],))
        vars_, qbar, vg, ok = self.aero_variables(X)
        B = self._basis.evaluate(vars_)
        ref = np.array([1.0, 1.0, 1.0, self.b, self.cbar, self.b])
        base = np.einsum("nb,ba->na", B, self._base_coef) * (qbar * self.S)[:, None] * ref
        cols = self._unit_columns(B, qbar, T)
        fm = base + np.einsum("nam,nm->na", cols, delta)
        fm[:, :3] += T[:, None] * self.thrust_dir
        fm[:, 3:] += T[:, None] * self._thrust_moment
        return fm, ok

    def effectiveness_batch(self, X, delta, T):
        """Control effectiveness ``(N, 6, m+1)``; last column is thrust."""
        X = np.atleast_2d(X)
        delta = np.atleast_2d(delta)
        T = np.broadcast_to(np.asarray(T, dtype=float), (X.shape[0],))
        vars_, qbar, vg, ok = self.aero_variables(X)
        B = self._basis.evaluate(vars_)
        cols = self._unit_columns(B, qbar, T)
        out = np.empty((X.shape[0], 6, self.n_effectors + 1))
        out[:, :, :-1] = cols
        # thrust column: engine line plus T-scaled vectoring terms divided by T
        unit = self._unit_columns(B, qbar, np.ones_like(T))
        vec = np.where(self._thrust_scaled[None, None, :], unit, 0.0)
        tcol = np.einsum("nam,nm->na", vec, delta)
        tcol[:, :3] += self.thrust_dir
        tcol[:, 3:] += self._thrust_moment
        out[:, :, -1] = tcol
        return out, ok

    def derivatives_batch(self, X, delta, T):
        """State derivatives ``(N, 12)`` of the forward dynamics and the mask."""
        X = np.atleast_2d(X)
        fm, ok = self.forces_moments(X, delta, T)
        return self._rigid_body(X, fm), ok

    def _rigid_body(self, X, fm):
        m, g = self.mass, self.g
        u, v, w = X[:, U], X[:, V], X[:, W]
        p, q, r = X[:, P], X[:, Q], X[:, R]
        phi, theta, psi = X[:, PHI], X[:, THETA], X[:, PSI]
        sphi, cphi = np.sin(phi), np.cos(phi)
        sth, cth = np.sin(theta), np.cos(theta)
        spsi, cpsi = np.sin(psi), np.cos(psi)
        d = np.empty_like(X)
        d[:, U] = r * v - q * w - g * sth + fm[:, 0] / m
        d[:, V] = p * w - r * u + g * sphi * cth + fm[:, 1] / m
        d[:, W] = q * u - p * v + g * cphi * cth + fm[:, 2] / m
        omega = X[:, P:R + 1]
        Jw = omega @ self.inertia.T
        gyro = np.cross(omega, Jw)
        d[:, P:R + 1] = (fm[:, 3:] - gyro) @ self.inertia_inv.T
        cth_safe = np.where(np.abs(cth) < 1e-9, 1e-9, cth)
        tth = sth / cth_safe
        d[:, PHI] = p + tth * (q * sphi + r * cphi)
        d[:, THETA] = q * cphi - r * sphi
        d[:, PSI] = (q * sphi + r * cphi) / cth_safe
        d[:, XN] = (
            u * cth * cpsi
            + v * (sphi * sth * cpsi - cphi * spsi)
            + w * (cphi * sth * cpsi + sphi * spsi)
        )
        d[:, YE] = (
            u * cth * spsi
            + v * (sphi * sth * spsi + cphi * cpsi)
            + w * (cphi * sth * spsi - sphi * cpsi)
        )
        d[:, H] = u * sth - v * sphi * cth - w * cphi * cth
        return d

    def specific_force(self, X, delta, T):
        """Accelerometer outputs (non-gravitational acceleration), (N, 3)."""
        fm, ok = self.forces_moments(X, delta, T)
        return fm[:, :3] / self.mass, ok

    def envelope_coords_batch(self, X):
        return envelope_coords_array(X)

    # -- generic interface shared with PendulumModel ------------------------
    # controls are packed as [delta..., T]

    coord_names = ENVELOPE_NAMES

    @property
    def control_limits(self) -> EffectorLimits:
        return self.limits

    @property
    def explore_mask(self) -> np.ndarray:
        return np.append(np.ones(self.n_effectors, dtype=bool), self.explore_thrust)

    def dynamics_u(self, X, Uc):
        Uc = np.atleast_2d(Uc)
        return self.derivatives_batch(X, Uc[:, :-1], Uc[:, -1])

    def effectiveness_u(self, X, Uc):
        Uc = np.atleast_2d(Uc)
        return self.effectiveness_batch(X, Uc[:, :-1], Uc[:, -1])


def envelope_coords_array(X) -> np.ndarray:
    """Vectorised state -> envelope coordinates, shape (N, 7)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    u, v, w = X[:, U], X[:, V], X[:, W]
    vg = np.sqrt(u * u + v * v + w * w)
    out = np.empty((X.shape[0], 7))
    out[:, 0:3] = X[:, P:R + 1]
    out[:, 3] = np.arctan2(w, u)
    with np.errstate(invalid="ignore", divide="ignore"):
        out[:, 4] = np.arcsin(np.clip(v / vg, -1.0, 1.0))
    out[:, 5] = vg
    out[:, 6] = X[:, H]
    return out


def _uvw_from_wind(vg, alpha, beta):
    return (
        vg * np.cos(alpha) * np.cos(beta),
        vg * np.sin(beta),
        vg * np.sin(alpha) * np.cos(beta),
    )


def uvw_from_wind(vg, alpha, beta):
    """Body velocities from speed and aerodynamic angles."""
    return _uvw_from_wind(vg, alpha, beta)


# --------------------------------------------------------------------------
# Single-state API
# --------------------------------------------------------------------------


def _as_state(x):
    return x.as_array() if isinstance(x, StateVector) else np.asarray(x, dtype=float)


def _as_control(u):
    if isinstance(u, ControlVector):
        return u.delta, u.thrust
    a = np.asarray(u, dtype=float)
    return a[:-1], float(a[-1])


def eval_dynamics(model, x, u, direction=FORWARD) -> np.ndarray:
    """State derivative of the forward system, or its negation backward.

    Raises
    ------
    DomainError
        If the state lies outside the model's aero validity domain.
    """
    sign = _direction_sign(direction)
    X = _as_state(x)[None, :]
    delta, T = _as_control(u)
    d, ok = model.derivatives_batch(X, delta[None, :], T)
    if not ok[0]:
        raise DomainError(f"state outside the validity domain of {model.name}")
    return sign * d[0]


def control_effectiveness(model, x, u) -> np.ndarray:
    """6 x (m+1) matrix of d[Fx Fy Fz Mx My Mz]/d[delta, T]."""
    X = _as_state(x)[None, :]
    delta, T = _as_control(u)
    Jd, ok = model.effectiveness_batch(X, delta[None, :], T)
    if not ok[0]:
        raise DomainError(f"state outside the validity domain of {model.name}")
    return Jd[0]


def rk4_batch(model, X, Uc, dt, sign=1.0):
    """One RK4 step for a batch; packed controls held constant over the step.

    Works for any model exposing ``dynamics_u``.  Returns the new states and
    a mask of rows that stayed valid at every stage with finite output.
    """
    k1, ok1 = model.dynamics_u(X, Uc)
    k2, ok2 = model.dynamics_u(X + (0.5 * dt * sign) * k1, Uc)
    k3, ok3 = model.dynamics_u(X + (0.5 * dt * sign) * k2, Uc)
    k4, ok4 = model.dynamics_u(X + (dt * sign) * k3, Uc)
    Xn = X + (dt * sign / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    ok = ok1 & ok2 & ok3 & ok4 & np.all(np.isfinite(Xn), axis=1)
    return Xn, ok


def integrate_step(model, x, u, dt: float, direction=FORWARD):
    """Fixed-step RK4 step holding the control constant.

    Returns the same type as ``x`` (StateVector or array).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    sign = _direction_sign(direction)
    X = _as_state(x)[None, :]
    delta, T = _as_control(u)
    Xn, ok = rk4_batch(model, X, np.append(delta, T)[None, :], dt, sign)
    if not np.all(np.isfinite(Xn)):
        raise IntegrationError("non-finite state after integration step")
    if not ok[0]:
        raise DomainError(f"integration left the validity domain of {model.name}")
    return StateVector.from_array(Xn[0]) if isinstance(x, StateVector) else Xn[0]


def state_to_envelope_coords(x) -> EnvelopeCoords:
    X = _as_state(x)
    vg = float(np.sqrt(X[U] ** 2 + X[V] ** 2 + X[W] ** 2))
    if vg <= 0.0:
        raise UndefinedAnglesError("aerodynamic angles undefined at zero speed")
    return EnvelopeCoords.from_array(envelope_coords_array(X[None, :])[0])


# --------------------------------------------------------------------------
# Loading
# --------------------------------------------------------------------------

BUILTIN_MODELS = {"generic-fighter-6dof": "generic_fighter_6dof.json"}


def builtin_config(name: str) -> dict:
    fname = BUILTIN_MODELS[name]
    text = resources.files("probenv.models").joinpath(fname).read_text(encoding="utf-8")
    return json.loads(text)


def load_model(spec):
    """Load a model by built-in name or from a JSON config path."""
    if isinstance(spec, (AircraftModel,)):
        return spec
    spec = str(spec)
    if spec == "pendulum-2d":
        from .pendulum import PendulumModel

        return PendulumModel()
    if spec in BUILTIN_MODELS:
        return AircraftModel.from_config(builtin_config(spec))
    path = Path(spec)
    cfg = json.loads(path.read_text(encoding="utf-8"))
    if cfg.get("kind") == "pendulum":
        from .pendulum import PendulumModel

        return PendulumModel.from_config(cfg)
    return AircraftModel.from_config(cfg)
