"""Two-loop NDI/INDI flight controller with envelope protection and hedging.

Outer loop: aerodynamic angles ``x1 = (phi, alpha, beta)`` with ordinary
NDI.  Inner loop: body rates ``x2 = (p, q, r)`` with incremental NDI and a
weighted pseudo-inverse allocation.  Thrust is set by a separate incremental
auto-throttle.  Outer-loop commands pass through a pseudo-control-hedging
reference model that subtracts the virtual control lost to inner-loop
protection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import P, PHI, Q, R, THETA, U, V, W, admissible_increment_bounds
from .envelope_db import EnvelopeDatabase
from .errors import AllocationError, ControllerSingularityError, ThrottleHoldError
from .fep import ProbFepConfig, prob_compensation, scb_protect
from .grid import to_db_units

OUTER_NAMES = ("phi", "alpha", "beta")
INNER_NAMES = ("p", "q", "r")
FEP_MODES = ("none", "scb", "prob")


@dataclass
class LoopGains:
    """Controller gains; ``K_ref`` defaults to the outer proportional gains."""

    inner_Kp: tuple = (6.50, 6.50, 5.80)
    inner_Ki: tuple = (0.0, 0.0, 0.0)
    inner_Kd: tuple = (0.0, 0.0, 0.50)
    outer_Kp: tuple = (2.00, 2.00, 1.60)
    outer_Ki: tuple = (0.50, 0.50, 0.30)
    outer_Kd: tuple = (0.90, 0.90, 0.00)
    k_T: float = 1.00
    K_ref: tuple | None = None

    def __post_init__(self):
        if self.K_ref is None:
            self.K_ref = tuple(self.outer_Kp)
        for k in ("inner_Kp", "inner_Ki", "inner_Kd", "outer_Kp", "outer_Ki", "outer_Kd", "K_ref"):
            v = np.asarray(getattr(self, k), dtype=float)
            if v.shape != (3,) or np.any(v < 0):
                raise ValueError(f"{k} must be three non-negative gains")
        if self.k_T < 0:
            raise ValueError("k_T must be non-negative")


@dataclass
class ControllerConfig:
    gains: LoopGains = field(default_factory=LoopGains)
    fep_mode: str = "none"
    prob: ProbFepConfig = field(default_factory=ProbFepConfig)
    dt: float = 0.01
    accel_filter_tau: float = 0.02
    allocation_weights: tuple | None = None
    rank_tol: float = 1e-9
    a_T_tol: float = 1e-9
    pch: bool = True

    def __post_init__(self):
        if self.fep_mode not in FEP_MODES:
            raise ValueError(f"fep mode must be one of {FEP_MODES}")
        if self.dt <= 0:
            raise ValueError("dt must be positive")


@dataclass
class PidState:
    integral: np.ndarray = field(default_factory=lambda: np.zeros(3))
    prev_error: np.ndarray | None = None


def pid_virtual_control(e, Kp, Ki, Kd, dt, state: PidState, freeze=None):
    """``Kp e + Ki int(e) + Kd de/dt`` with trapezoidal integration.

    The derivative is the backward difference of the error (zero on the
    first call).  Channels flagged in ``freeze`` keep their integral.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    e = np.asarray(e, dtype=float)
    prev = state.prev_error
    if prev is None:
        de = np.zeros_like(e)
        inc = 0.5 * dt * e
    else:
        de = (e - prev) / dt
        inc = 0.5 * dt * (e + prev)
    if freeze is not None:
        inc = np.where(freeze, 0.0, inc)
    state.integral = state.integral + inc
    state.prev_error = e.copy()
    return np.asarray(Kp) * e + np.asarray(Ki) * state.integral + np.asarray(Kd) * de


def outer_loop_matrices(x, accel, g):
    """``(A, b)`` of ``d/dt (phi, alpha, beta) = b + A (p, q, r)``.

    ``accel`` holds the accelerometer outputs (specific force, ft/s^2).
    """
    u, v, w = x[U], x[V], x[W]
    phi, theta = x[PHI], x[THETA]
    uw2 = u * u + w * w
    vg2 = uw2 + v * v
    if uw2 < 1e-6 or vg2 < 1e-6 or abs(np.cos(theta)) < 1e-6:
        raise ControllerSingularityError("outer-loop matrix undefined at this state")
    suw = np.sqrt(uw2)
    Ax = accel[0] - g * np.sin(theta)
    Ay = accel[1] + g * np.sin(phi) * np.cos(theta)
    Az = accel[2] + g * np.cos(phi) * np.cos(theta)
    tth = np.tan(theta)
    A = np.array([
        [1.0, np.sin(phi) * tth, np.cos(phi) * tth],
        [-u * v / uw2, 1.0, -v * w / uw2],
        [w / suw, 0.0, -u / suw],
    ])
    b = np.array([
        0.0,
        (u * Az - w * Ax) / uw2,
        (-u * v / vg2 * Ax + (1.0 - v * v / vg2) * Ay - v * w / vg2 * Az) / suw,
    ])
    return A, b


def outer_loop_inversion(x, accel, nu1, g=32.174):
    """Rate references ``A^-1 (nu1 - b)``.

    Raises
    ------
    ControllerSingularityError
        If the outer-loop matrix is singular.
    """
    A, b = outer_loop_matrices(np.asarray(x, dtype=float), accel, g)
    if abs(np.linalg.det(A)) < 1e-10:
        raise ControllerSingularityError("outer-loop matrix is singular")
    return np.linalg.solve(A, np.asarray(nu1, dtype=float) - b)


def weighted_pseudo_inverse(B, weights=None, rank_tol=1e-9):
    """``W^-1 B^T (B W^-1 B^T)^-1``; minimum weighted-norm right inverse."""
    B = np.asarray(B, dtype=float)
    winv = np.ones(B.shape[1]) if weights is None else 1.0 / np.asarray(weights, dtype=float)
    BW = B * winv
    s = np.linalg.svd(B * np.sqrt(winv), compute_uv=False)
    if s.size < B.shape[0] or s[-1] <= rank_tol * max(s[0], 1e-300):
        raise AllocationError("control effectiveness is rank deficient")
    return BW.T @ np.linalg.inv(BW @ B.T)


def inner_loop_indi(nu2, delta_0, rates_dot_0, JdM, inertia, limits, dt, weights=None, rank_tol=1e-9):
    """Incremental allocation ``delta_com = delta_0 + clip(pinv(J_d^M) J (nu2 - xdot0))``.

    Returns
    -------
    delta_com, unclipped increment
    """
    demand = np.asarray(inertia) @ (np.asarray(nu2, dtype=float) - np.asarray(rates_dot_0, dtype=float))
    Bp = weighted_pseudo_inverse(JdM, weights, rank_tol)
    inc = Bp @ demand
    delta_0 = np.asarray(delta_0, dtype=float)
    lo, hi = admissible_increment_bounds(limits, delta_0, dt)
    return np.clip(delta_0 + inc, lo, hi), inc


def pch_update(x_fep, x_com, nu_h, K_ref, dt):
    """Forward-Euler step of ``x_com' = K_ref (x_fep - x_com) - nu_h``.

    Returns ``(x_com_next, nu_ref)``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    nu_ref = np.asarray(K_ref) * (np.asarray(x_fep, dtype=float) - np.asarray(x_com, dtype=float))
    return x_com + dt * (nu_ref - np.asarray(nu_h, dtype=float)), nu_ref


def throttle_effectiveness(alpha, beta, dF_dT, mass):
    """``a_T`` of the incremental speed dynamics."""
    ca, sa = np.cos(alpha), np.sin(alpha)
    cb, sb = np.cos(beta), np.sin(beta)
    return (ca * cb * dF_dT[0] + sb * dF_dT[1] + sa * cb * dF_dT[2]) / mass


def autothrottle(V_ref, V_g, Vdot_0, a_T, T_0, k_T, T_max, tol=1e-9):
    """``T_0 + (k_T (V_ref - V_g) - Vdot_0) / a_T`` clamped to ``[0, T_max]``.

    Raises
    ------
    ThrottleHoldError
        If ``|a_T|`` is below ``tol``; callers keep ``T_0``.
    """
    if abs(a_T) < tol:
        raise ThrottleHoldError("thrust has no authority over speed")
    T = T_0 + (k_T * (V_ref - V_g) - Vdot_0) / a_T
    return float(min(max(T, 0.0), T_max))


@dataclass
class ControllerState:
    outer_pid: PidState
    inner_pid: PidState
    x_com: np.ndarray
    delta_0: np.ndarray
    thrust_0: float
    xdot_0: np.ndarray  # filtered (pdot, qdot, rdot, Vdot)
    initialized: bool = False


@dataclass
class StepOutput:
    delta: np.ndarray
    thrust: float
    x1_ref: np.ndarray
    x1_fep: np.ndarray
    x1_com: np.ndarray
    x2_ref: np.ndarray
    x2_fep: np.ndarray
    nu1: np.ndarray
    nu2: np.ndarray
    nu_h: np.ndarray
    nu_ref: np.ndarray
    A1: np.ndarray
    M_env: float = np.nan
    out_of_grid: bool = False
    cons_lo: np.ndarray = field(default_factory=lambda: np.full(5, np.nan))
    cons_hi: np.ndarray = field(default_factory=lambda: np.full(5, np.nan))
    throttle_hold: bool = False
    # (alpha, beta, p, q, r) references before/after protection, database units
    ref_db: np.ndarray = field(default_factory=lambda: np.full(5, np.nan))
    fep_db: np.ndarray = field(default_factory=lambda: np.full(5, np.nan))


def _db_coords(db, x_env):
    names = db.names
    full = dict(zip(("p", "q", "r", "alpha", "beta", "vg", "h"), x_env))
    vals = np.array([full[n] for n in names])
    return to_db_units(vals, names)


def _pick(names, vec, wanted, fill=np.nan):
    return np.array([vec[names.index(n)] if n in names else fill for n in wanted])


class NdiController:
    """Stateful controller; one instance per simulation."""

    def __init__(self, model, config: ControllerConfig, db: EnvelopeDatabase | None = None):
        if config.fep_mode != "none" and db is None:
            raise ValueError("an envelope database is required for envelope protection")
        if config.fep_mode == "scb" and db.constraints is None:
            raise ValueError("SCB protection needs a database with constraints")
        self.model = model
        self.config = config
        self.db = db
        self.state = None

    def reset(self, x, delta_0, thrust_0):
        x = np.asarray(x, dtype=float)
        e = self.model.envelope_coords_batch(x[None, :])[0]
        self.state = ControllerState(
            PidState(), PidState(),
            np.array([x[PHI], e[3], e[4]]),
            np.asarray(delta_0, dtype=float).copy(), float(thrust_0), np.zeros(4), True,
        )

    def _protect(self, x_env):
        """Envelope query shared by both loops; returns protection helpers."""
        mode = self.config.fep_mode
        info = {"M": np.nan, "flag": False, "lo": np.full(5, np.nan), "hi": np.full(5, np.nan)}
        if mode == "none":
            return info
        db = self.db
        xq = _db_coords(db, x_env)
        M, J, flag = db.query_metric(xq)
        info.update(M=M, J=J, flag=flag, names=db.names)
        if mode == "scb":
            lo, hi, _ = db.query_constraints(xq)
            info["lo"] = _pick(db.names, lo, ("alpha", "beta", "p", "q", "r"), -np.inf)
            info["hi"] = _pick(db.names, hi, ("alpha", "beta", "p", "q", "r"), np.inf)
        return info

    def _fep(self, info, ref_rad, names):
        """Protect references given in radians.

        Returns the protected values in radians plus the reference and
        protected values in database units (the units the laws act in).
        """
        mode = self.config.fep_mode
        ref_db = to_db_units(ref_rad, names)
        if mode == "none":
            return ref_rad.copy(), ref_db, ref_db.copy()
        if mode == "scb":
            order = ("alpha", "beta", "p", "q", "r")
            idx = [order.index(n) for n in names]
            out = scb_protect(ref_db, info["lo"][idx], info["hi"][idx])
        else:
            J = _pick(info["names"], info["J"], names, 0.0)
            K = self.config.prob.gains(names)
            out = ref_db + prob_compensation(info["M"], J, K, self.config.prob.M0)
        out = np.asarray(out, dtype=float)
        res = out / to_db_units(np.ones(len(names)), names)
        # leave untouched channels bit-identical
        return np.where(out == ref_db, ref_rad, res), ref_db, out

    def step(self, x, accel, xdot_meas, x1_ref, V_ref):
        """One control period.

        Parameters
        ----------
        x : ndarray (12,)
            Measured state.
        accel : ndarray (3,)
            Accelerometer outputs.
        xdot_meas : ndarray (4,)
            Raw (pdot, qdot, rdot, Vdot) before the sensor filter.
        x1_ref : ndarray (3,)
            Reference (phi, alpha, beta) in radians.
        """
        cfg = self.config
        gains = cfg.gains
        st = self.state
        dt = cfg.dt
        model = self.model
        x = np.asarray(x, dtype=float)
        # sensor filter on the measured derivatives
        a = dt / (cfg.accel_filter_tau + dt) if cfg.accel_filter_tau > 0 else 1.0
        st.xdot_0 = st.xdot_0 + a * (np.asarray(xdot_meas, dtype=float) - st.xdot_0)
        x_env = model.envelope_coords_batch(x[None, :])[0]
        x1 = np.array([x[PHI], x_env[3], x_env[4]])
        x2 = x[[P, Q, R]]
        info = self._protect(x_env)

        # outer FEP on alpha, beta; phi passes through
        x1_fep = np.array(x1_ref, dtype=float)
        x1_fep[1:], ref1_db, fep1_db = self._fep(info, np.asarray(x1_ref[1:], dtype=float), ("alpha", "beta"))
        x1_com = st.x_com if cfg.pch else x1_fep
        nu_ref = np.asarray(gains.K_ref) * (x1_fep - x1_com) if cfg.pch else np.zeros(3)
        freeze = x1_fep != np.asarray(x1_ref)
        nu_pid = pid_virtual_control(x1_com - x1, gains.outer_Kp, gains.outer_Ki, gains.outer_Kd, dt,
                                     st.outer_pid, freeze)
        nu1 = nu_pid + nu_ref
        A1, b1 = outer_loop_matrices(x, accel, model.g)
        if abs(np.linalg.det(A1)) < 1e-10:
            raise ControllerSingularityError("outer-loop matrix is singular")
        x2_ref = np.linalg.solve(A1, nu1 - b1)
        x2_fep, ref2_db, fep2_db = self._fep(info, x2_ref, INNER_NAMES)
        nu_h = A1 @ (x2_ref - x2_fep)
        if cfg.pch:
            st.x_com = st.x_com + dt * (nu_ref - nu_h)

        nu2 = pid_virtual_control(x2_fep - x2, gains.inner_Kp, gains.inner_Ki, gains.inner_Kd, dt, st.inner_pid)
        Jd, _ = model.effectiveness_batch(x[None, :], st.delta_0[None, :], st.thrust_0)
        JdM = Jd[0, 3:, :-1]
        delta, _ = inner_loop_indi(nu2, st.delta_0, st.xdot_0[:3], JdM, model.inertia,
                                   model.effector_limits, dt, cfg.allocation_weights, cfg.rank_tol)

        hold = False
        a_T = throttle_effectiveness(x_env[3], x_env[4], Jd[0, :3, -1], model.mass)
        try:
            T = autothrottle(V_ref, x_env[5], st.xdot_0[3], a_T, st.thrust_0, gains.k_T, model.T_max, cfg.a_T_tol)
            lo, hi = admissible_increment_bounds(model.limits, np.append(st.delta_0, st.thrust_0), dt)
            T = float(np.clip(T, lo[-1], hi[-1]))
        except ThrottleHoldError:
            T = st.thrust_0
            hold = True
        st.delta_0 = delta
        st.thrust_0 = T
        return StepOutput(
            delta=delta, thrust=T, x1_ref=np.asarray(x1_ref, dtype=float), x1_fep=x1_fep,
            x1_com=x1_com.copy(), x2_ref=x2_ref, x2_fep=x2_fep, nu1=nu1, nu2=nu2, nu_h=nu_h,
            nu_ref=nu_ref, A1=A1, M_env=info["M"], out_of_grid=info["flag"],
            cons_lo=info["lo"], cons_hi=info["hi"], throttle_hold=hold,
            ref_db=np.concatenate([ref1_db, ref2_db]), fep_db=np.concatenate([fep1_db, fep2_db]),
        )
