"""Steady, straight and level trim over an altitude-Mach grid.

Trim unknowns are thrust, one deflection per configured trim group (all
members of a group deflect together) and the angle of attack.  Pitch
attitude is tied to the angle of attack, bank and sideslip are zero, so
only the six body accelerations remain as equality constraints.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RectBivariateSpline
from scipy.optimize import minimize

from .dynamics import (
    H,
    P,
    Q,
    R,
    THETA,
    U,
    V,
    W,
    ControlVector,
    StateVector,
    speed_of_sound,
)
from .errors import TrimError, TrimSetBuildError

TRIM_TOL = 1e-6
DEFAULT_H_RANGE = (10000.0, 30000.0)
DEFAULT_MACH_RANGE = (0.4, 1.2)
# default box half-widths of the membership level function
DEFAULT_BOX_TOL = {"p": 0.02, "q": 0.02, "r": 0.02, "alpha": 0.01, "beta": 0.01}
_H_EDGE_TOL = 500.0
_MACH_EDGE_TOL = 0.01


@dataclass
class TrimPoint:
    h: float
    mach: float
    alpha: float
    thrust: float
    deflections: dict
    residual: float
    J: float
    history: list = field(default_factory=list, repr=False)

    def state(self, model) -> StateVector:
        vg = self.mach * float(speed_of_sound(self.h))
        return StateVector(
            u=vg * np.cos(self.alpha), v=0.0, w=vg * np.sin(self.alpha),
            theta=self.alpha, h=self.h,
        )

    def control(self, model) -> ControlVector:
        return ControlVector(_expand_groups(model, self.deflections), self.thrust)


def _expand_groups(model, deflections):
    delta = np.zeros(model.n_effectors)
    for g, val in deflections.items():
        for name in model.trim_groups[g]:
            delta[model.index_of(name)] = val
    return delta


def trim_objective(model, thrust, deflections, k_trim=1.0) -> float:
    """``(T/T_max)^2 + k_trim * sum(delta^2)`` over the trim groups."""
    d = np.asarray(list(deflections.values()) if isinstance(deflections, dict) else deflections, dtype=float)
    return float((thrust / model.T_max) ** 2 + k_trim * np.sum(d * d))


class _TrimProblem:
    """Unknowns ``z = [T/T_max, group deflections..., alpha]``."""

    def __init__(self, model, h, mach, k_trim):
        self.model = model
        self.h = float(h)
        self.vg = float(mach * speed_of_sound(h))
        self.k_trim = k_trim
        self.groups = list(model.trim_groups)
        self.members = [[model.index_of(n) for n in model.trim_groups[g]] for g in self.groups]
        lim = model.effector_limits
        self.bounds = [(0.0, 1.0)]
        for idx in self.members:
            self.bounds.append((max(lim.delta_min[i] for i in idx), min(lim.delta_max[i] for i in idx)))
        dom = model.domain.get("alpha", (-0.5 * np.pi, 0.5 * np.pi))
        self.bounds.append((max(dom[0], -0.6), min(dom[1], 0.6)))

    def unpack(self, z):
        delta = np.zeros(self.model.n_effectors)
        for k, idx in enumerate(self.members):
            delta[idx] = z[1 + k]
        alpha = z[-1]
        x = np.zeros(12)
        x[U] = self.vg * np.cos(alpha)
        x[W] = self.vg * np.sin(alpha)
        x[THETA] = alpha
        x[H] = self.h
        return x, delta, z[0] * self.model.T_max

    def constraints(self, z):
        x, delta, T = self.unpack(z)
        d, ok = self.model.derivatives_batch(x[None, :], delta[None, :], T)
        d = d[0]
        c = np.concatenate([d[[U, V, W]] / self.model.g, d[[P, Q, R]]])
        return c

    def objective(self, z):
        return float(z[0] ** 2 + self.k_trim * np.sum(z[1:-1] ** 2))

    def penalised(self, z, rho):
        c = self.constraints(z)
        return self.objective(z) + rho * float(c @ c)

    def jacobian(self, z, eps=1e-7):
        c0 = self.constraints(z)
        Jc = np.empty((c0.size, z.size))
        for j in range(z.size):
            zp = z.copy()
            zm = z.copy()
            zp[j] += eps
            zm[j] -= eps
            Jc[:, j] = (self.constraints(zp) - self.constraints(zm)) / (2 * eps)
        return Jc


def solve_trim(model, h: float, mach: float, k_trim: float = 1.0, z0=None,
               rho0: float = 10.0, rounds: int = 5, max_iter: int = 400) -> TrimPoint:
    """Trim for level flight at ``(h, mach)``.

    The equality constraints are folded into a quadratic penalty whose weight
    grows tenfold per round; each round is a bounded quasi-Newton (L-BFGS-B)
    minimisation with numerical gradients.  A minimum-norm Newton polish then
    drives the constraint residual below :data:`TRIM_TOL`.

    Raises
    ------
    TrimError
        If the residual cannot be brought below tolerance or the solution
        leaves the control bounds.
    """
    prob = _TrimProblem(model, h, mach, k_trim)
    if z0 is None:
        z0 = np.zeros(len(prob.bounds))
        z0[0] = 0.3
        z0[-1] = 0.1
    z = np.clip(np.asarray(z0, dtype=float), [b[0] for b in prob.bounds], [b[1] for b in prob.bounds])
    history = []
    rho = rho0
    for _ in range(rounds):
        trace = []
        res = minimize(
            prob.penalised, z, args=(rho,), method="L-BFGS-B", bounds=prob.bounds,
            callback=lambda zk: trace.append(prob.penalised(zk, rho)),
            options={"maxiter": max_iter, "ftol": 1e-15, "gtol": 1e-10},
        )
        history.append(trace)
        z = res.x
        rho *= 10.0
    # feasibility polish: minimum-norm Newton steps on c(z) = 0
    lo = np.array([b[0] for b in prob.bounds])
    hi = np.array([b[1] for b in prob.bounds])
    c = prob.constraints(z)
    for _ in range(30):
        if np.max(np.abs(c)) < 1e-11:
            break
        Jc = prob.jacobian(z)
        step = np.linalg.lstsq(Jc, -c, rcond=None)[0]
        z = np.clip(z + step, lo, hi)
        c = prob.constraints(z)
    residual = float(np.max(np.abs(c)))
    if not np.isfinite(residual) or residual > TRIM_TOL:
        raise TrimError(f"trim did not converge at h={h:g} ft, M={mach:g}", residual)
    defl = {g: float(z[1 + k]) for k, g in enumerate(prob.groups)}
    return TrimPoint(
        h=float(h), mach=float(mach), alpha=float(z[-1]), thrust=float(z[0] * model.T_max),
        deflections=defl, residual=residual, J=prob.objective(z), history=history,
    )


def _spline(xs, ys, vals):
    kx = min(3, len(xs) - 1)
    ky = min(3, len(ys) - 1)
    return RectBivariateSpline(xs, ys, vals, kx=kx, ky=ky, s=0)


class TrimSet:
    """Trim points on an ``(h, mach)`` grid with cubic-spline interpolants."""

    def __init__(self, model, hs, machs, points, failed=()):
        self.model = model
        self.hs = np.asarray(hs, dtype=float)
        self.machs = np.asarray(machs, dtype=float)
        self.points = points  # nested list [ih][im]
        self.failed = list(failed)
        self.groups = list(model.trim_groups)
        self.quantities = ["alpha", "thrust"] + self.groups
        self._splines = {}
        for q in self.quantities:
            vals = np.array([[self._value(points[i][j], q) for j in range(len(self.machs))]
                             for i in range(len(self.hs))])
            self._splines[q] = _spline(self.hs, self.machs, vals)

    @staticmethod
    def _value(pt, q):
        if q == "alpha":
            return pt.alpha
        if q == "thrust":
            return pt.thrust
        return pt.deflections[q]

    @property
    def h_range(self):
        return float(self.hs[0]), float(self.hs[-1])

    @property
    def mach_range(self):
        return float(self.machs[0]), float(self.machs[-1])

    def interpolate(self, q, h, mach):
        return self._splines[q].ev(np.asarray(h, dtype=float), np.asarray(mach, dtype=float))

    def trim_batch(self, h, mach):
        """Trimmed states ``(N, 12)`` and packed controls ``(N, m+1)``."""
        h = np.atleast_1d(np.asarray(h, dtype=float))
        mach = np.atleast_1d(np.asarray(mach, dtype=float))
        alpha = self.interpolate("alpha", h, mach)
        vg = mach * speed_of_sound(h)
        X = np.zeros((h.size, 12))
        X[:, U] = vg * np.cos(alpha)
        X[:, W] = vg * np.sin(alpha)
        X[:, THETA] = alpha
        X[:, H] = h
        Uc = np.zeros((h.size, self.model.n_effectors + 1))
        for g in self.groups:
            val = self.interpolate(g, h, mach)
            for name in self.model.trim_groups[g]:
                Uc[:, self.model.index_of(name)] = val
        Uc[:, -1] = self.interpolate("thrust", h, mach)
        return X, Uc

    # initial-state protocol used by the Monte Carlo sampler
    def draw_origin(self, rng):
        """Uniform ``(h, mach)`` over the grid rectangle."""
        return rng.uniform(*self.h_range), rng.uniform(*self.mach_range)

    def initial_batch(self, h, mach):
        return self.trim_batch(h, mach)

    def trim_at(self, h, mach):
        X, Uc = self.trim_batch(h, mach)
        return StateVector.from_array(X[0]), ControlVector(Uc[0, :-1], float(Uc[0, -1]))

    def rows(self):
        for i in range(len(self.hs)):
            for j in range(len(self.machs)):
                yield self.points[i][j]

    def export_csv(self, path):
        header = ["h", "mach", "alpha", "T"] + self.groups + ["residual", "J"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(header)
            for pt in self.rows():
                wr.writerow([repr(float(v)) for v in
                             [pt.h, pt.mach, pt.alpha, pt.thrust]
                             + [pt.deflections[g] for g in self.groups] + [pt.residual, pt.J]])

    @classmethod
    def load_csv(cls, model, path):
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise ValueError(f"{path}: empty trim table")
        groups = list(model.trim_groups)
        missing = [g for g in groups if g not in rows[0]]
        if missing:
            raise ValueError(f"{path}: trim table lacks columns {missing}")
        hs = sorted({float(r["h"]) for r in rows})
        ms = sorted({float(r["mach"]) for r in rows})
        pts = [[None] * len(ms) for _ in hs]
        for r in rows:
            pt = TrimPoint(float(r["h"]), float(r["mach"]), float(r["alpha"]), float(r["T"]),
                           {g: float(r[g]) for g in groups}, float(r["residual"]), float(r["J"]))
            pts[hs.index(pt.h)][ms.index(pt.mach)] = pt
        if any(p is None for row in pts for p in row):
            raise ValueError(f"{path}: trim table is not a full grid")
        return cls(model, hs, ms, pts)


def build_trim_set(model, h_range=DEFAULT_H_RANGE, mach_range=DEFAULT_MACH_RANGE,
                   grid_steps=(5, 17), k_trim: float = 1.0, max_fail_frac: float = 0.1) -> TrimSet:
    """Solve trim on a regular ``(h, mach)`` grid and fit the interpolants.

    Nodes are swept in row order and warm-started from the previous solution.
    A node that fails is retried from its nearest converged neighbour.
    """
    nh, nm = int(grid_steps[0]), int(grid_steps[1])
    if nh < 2 or nm < 2 or h_range[1] <= h_range[0] or mach_range[1] <= mach_range[0]:
        raise ValueError("trim grid ranges must be non-degenerate with at least 2 nodes each")
    hs = np.linspace(h_range[0], h_range[1], nh)
    ms = np.linspace(mach_range[0], mach_range[1], nm)
    pts = [[None] * nm for _ in range(nh)]
    failed = []
    prev = None
    for i in range(nh):
        for j in range(nm):
            try:
                pts[i][j] = solve_trim(model, hs[i], ms[j], k_trim, z0=prev)
                prev = _z_of(pts[i][j], model)
            except TrimError:
                failed.append((i, j))
    for i, j in failed:
        done = [(a, b) for a in range(nh) for b in range(nm) if pts[a][b] is not None]
        if not done:
            break
        a, b = min(done, key=lambda ab: ((ab[0] - i) / nh) ** 2 + ((ab[1] - j) / nm) ** 2)
        try:
            pts[i][j] = solve_trim(model, hs[i], ms[j], k_trim, z0=_z_of(pts[a][b], model))
        except TrimError:
            pass
    still = [(i, j) for i in range(nh) for j in range(nm) if pts[i][j] is None]
    if len(failed) > max_fail_frac * nh * nm or still:
        raise TrimSetBuildError(f"{len(failed)} of {nh * nm} trim nodes failed; unresolved {still}")
    return TrimSet(model, hs, ms, pts, failed=failed)


def _z_of(pt, model):
    return np.array([pt.thrust / model.T_max] + [pt.deflections[g] for g in model.trim_groups] + [pt.alpha])


def trim_level_function(trimset: TrimSet, x, tol=None) -> float:
    """Box level function, positive inside the trim tolerance box.

    ``l = 1 - max_i |x_i - x_trim_i| / tol_i`` over p, q, r, alpha and beta,
    with the altitude and Mach excursions beyond the grid rectangle added as
    further normalised distances.
    """
    tol = {**DEFAULT_BOX_TOL, **(tol or {})}
    e = np.asarray(x.as_array() if hasattr(x, "as_array") else x, dtype=float)
    p, q, r, alpha, beta, vg, h = e
    mach = vg / float(speed_of_sound(h))
    h_lo, h_hi = trimset.h_range
    m_lo, m_hi = trimset.mach_range
    hc = min(max(h, h_lo), h_hi)
    mc = min(max(mach, m_lo), m_hi)
    a_trim = float(trimset.interpolate("alpha", hc, mc))
    dist = [
        abs(p) / tol["p"], abs(q) / tol["q"], abs(r) / tol["r"],
        abs(alpha - a_trim) / tol["alpha"], abs(beta) / tol["beta"],
        abs(h - hc) / _H_EDGE_TOL, abs(mach - mc) / _MACH_EDGE_TOL,
    ]
    return 1.0 - max(dist)


def sample_trim_state(trimset: TrimSet, rng):
    """Draw ``(h, mach)`` uniformly over the grid and return the trim.

    Returns
    -------
    (StateVector, ControlVector)
    """
    return trimset.trim_at(*trimset.draw_origin(rng))
