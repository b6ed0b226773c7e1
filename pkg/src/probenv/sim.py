"""Closed-loop scenario runs with logging.

A run trims the aircraft, feeds a prefiltered piecewise-linear maneuver to
the controller as increments on the trimmed (phi, alpha, beta), integrates
with RK4 at the control period and records one row per step.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .controller import ControllerConfig, NdiController
from .dynamics import P, PHI, Q, R, U, V, W, rk4_batch
from .errors import ProbEnvError
from .grid import to_db_units
from .trim import solve_trim

DEG = np.pi / 180.0
LOC_RATE_PQ = 300.0  # deg/s
LOC_RATE_R = 120.0  # deg/s
LOC_ALPHA = 90.0  # deg
# Maneuver A peak for the surrogate fighter: large enough that the unprotected
# aircraft departs in pitch, small enough that both protection laws hold it.
SURROGATE_PEAK_A = 47.5  # deg


@dataclass
class Segment:
    channel: str
    start: float
    duration: float
    peak: float  # degrees


@dataclass
class ManeuverSpec:
    """Triangular command segments per channel (degrees), plus prefilter cutoff."""

    segments: list
    cutoff: float = 2.0
    name: str = "custom"

    def __post_init__(self):
        by = {}
        for s in self.segments:
            if s.channel not in ("phi", "alpha", "beta"):
                raise ValueError(f"unknown channel {s.channel!r}")
            if s.duration <= 0:
                raise ValueError("segment duration must be positive")
            by.setdefault(s.channel, []).append(s)
        for segs in by.values():
            segs = sorted(segs, key=lambda s: s.start)
            for a, b in zip(segs, segs[1:]):
                if b.start < a.start + a.duration - 1e-12:
                    raise ValueError("segments overlap")

    def value(self, channel, t):
        """Raw (unfiltered) command in degrees."""
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for s in self.segments:
            if s.channel != channel:
                continue
            half = 0.5 * s.duration
            tau = t - s.start
            tri = np.where((tau >= 0) & (tau <= s.duration), 1.0 - np.abs(tau - half) / half, 0.0)
            out = out + s.peak * tri
        return out

    def scaled(self, factor):
        return ManeuverSpec([Segment(s.channel, s.start, s.duration, s.peak * factor) for s in self.segments],
                            self.cutoff, f"{self.name}*{factor:g}")

    def to_dict(self):
        return {"name": self.name, "cutoff": self.cutoff, "segments": [asdict(s) for s in self.segments]}

    @classmethod
    def from_dict(cls, d):
        return cls([Segment(**s) for s in d["segments"]], float(d.get("cutoff", 2.0)), d.get("name", "custom"))


def maneuver_a(peak=90.0, cutoff=2.0) -> ManeuverSpec:
    """Triangular alpha command, 4 s base, ``peak`` degrees high."""
    return ManeuverSpec([Segment("alpha", 0.0, 4.0, peak)], cutoff, "A")


def maneuver_b(peak=50.0, cutoff=2.0) -> ManeuverSpec:
    """Two opposite alpha triangles (6 s base each); beta repeats 2 s later."""
    segs = [
        Segment("alpha", 0.0, 6.0, peak), Segment("alpha", 6.0, 6.0, -peak),
        Segment("beta", 2.0, 6.0, peak), Segment("beta", 8.0, 6.0, -peak),
    ]
    return ManeuverSpec(segs, cutoff, "B")


class Prefilter:
    """First-order low-pass, zero initial state, exact for sample-and-hold input."""

    def __init__(self, cutoff=2.0, dt=0.01, n=3):
        if cutoff <= 0:
            raise ValueError("cutoff must be positive")
        self.a = 1.0 - np.exp(-cutoff * dt)
        self.y = np.zeros(n)

    def __call__(self, u):
        y = self.y.copy()
        self.y = self.y + self.a * (np.asarray(u, dtype=float) - self.y)
        return y


def prefilter(spec: ManeuverSpec, cutoff=None, dt=0.01):
    """Generator of filtered (phi, alpha, beta) increments in degrees."""
    f = Prefilter(spec.cutoff if cutoff is None else cutoff, dt)
    k = 0
    while True:
        t = k * dt
        raw = np.array([spec.value(c, t) for c in ("phi", "alpha", "beta")], dtype=float)
        yield f(raw)
        k += 1


@dataclass
class SimLog:
    columns: list
    rows: np.ndarray
    meta: dict = field(default_factory=dict)

    def col(self, name) -> np.ndarray:
        return self.rows[:, self.columns.index(name)]

    def __len__(self):
        return self.rows.shape[0]

    @property
    def loc(self) -> bool:
        return bool(self.meta.get("loc", False))

    def export(self, path, sidecar=True):
        export_log(self, path, sidecar)

    @classmethod
    def load(cls, path):
        with open(path, newline="", encoding="utf-8") as fh:
            rd = csv.reader(fh)
            cols = next(rd)
            rows = np.array([[float(v) for v in r] for r in rd]).reshape(-1, len(cols))
        meta = {}
        try:
            with open(str(path) + ".meta.json", encoding="utf-8") as fh:
                meta = json.load(fh)
        except FileNotFoundError:
            pass
        return cls(cols, rows, meta)


def export_log(log: SimLog, path, sidecar=True):
    """CSV with a header row; every value printed with 17 significant digits."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(log.columns)
        for row in log.rows:
            wr.writerow([format(float(v), ".17g") for v in row])
    if sidecar:
        with open(str(path) + ".meta.json", "w", encoding="utf-8") as fh:
            json.dump(log.meta, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _columns(model):
    from .dynamics import ENVELOPE_NAMES, STATE_NAMES

    cols = ["t"] + list(STATE_NAMES) + ["env_" + n for n in ENVELOPE_NAMES]
    for tag in ("ref", "fep", "com"):
        cols += [f"{n}_{tag}" for n in ("phi", "alpha", "beta")]
    cols += [f"{n}_ref" for n in ("p", "q", "r")] + [f"{n}_fep" for n in ("p", "q", "r")]
    cols += [f"nu_h_{n}" for n in ("phi", "alpha", "beta")]
    cols += [f"A1_{i}{j}" for i in range(3) for j in range(3)]
    cols += [f"db_ref_{n}" for n in ("alpha", "beta", "p", "q", "r")]
    cols += [f"db_fep_{n}" for n in ("alpha", "beta", "p", "q", "r")]
    cols += [f"db_min_{n}" for n in ("alpha", "beta", "p", "q", "r")]
    cols += [f"db_max_{n}" for n in ("alpha", "beta", "p", "q", "r")]
    cols += ["delta_" + n for n in model.effector_names] + ["T_com"]
    cols += ["M_env", "out_of_grid", "fep_active", "pch_active", "throttle_hold", "loc"]
    return cols


def loc_flag(x_env_db) -> bool:
    """Rates beyond twice the default grid bounds or |alpha| beyond 90 deg."""
    p, q, r, alpha = x_env_db[0], x_env_db[1], x_env_db[2], x_env_db[3]
    return bool(abs(p) > LOC_RATE_PQ or abs(q) > LOC_RATE_PQ or abs(r) > LOC_RATE_R or abs(alpha) > LOC_ALPHA)


def _db_query_point(db, x_env):
    names = db.names
    full = dict(zip(("p", "q", "r", "alpha", "beta", "vg", "h"), x_env))
    return to_db_units(np.array([full[n] for n in names]), names)


def run_closed_loop(model, controller_config: ControllerConfig | None = None, fep_mode=None, db=None,
                    maneuver: ManeuverSpec | None = None, T_end=10.0, seed=0, h0=20000.0, mach0=0.85,
                    trim=None) -> SimLog:
    """Fly ``maneuver`` from trim and log every control period.

    Loss of control is flagged, not raised; the run is truncated only when
    the state leaves the model domain, becomes non-finite, or the controller
    hits a singularity.
    """
    cfg = controller_config or ControllerConfig()
    if fep_mode is not None:
        cfg = ControllerConfig(**{**cfg.__dict__, "fep_mode": fep_mode})
    maneuver = maneuver or maneuver_a()
    dt = cfg.dt
    tp = trim or solve_trim(model, h0, mach0)
    x = tp.state(model).as_array()
    delta = tp.control(model).delta.copy()
    T = tp.thrust
    ctrl = NdiController(model, cfg, db)
    ctrl.reset(x, delta, T)
    x_env0 = model.envelope_coords_batch(x[None, :])[0]
    base = np.array([0.0, x_env0[3], x_env0[4]])
    V_ref = x_env0[5]
    ref_gen = prefilter(maneuver, dt=dt)
    n_steps = int(np.floor(T_end / dt + 1e-9))
    cols = _columns(model)
    rows = []
    loc = diverged = False
    reason = ""
    for k in range(n_steps + 1):
        t = k * dt
        x1_ref = base + next(ref_gen) * DEG
        Uc = np.append(delta, T)
        d, ok = model.dynamics_u(x[None, :], Uc[None, :])
        if not ok[0]:
            diverged, reason = True, "state left the model domain"
            break
        d = d[0]
        vg = np.sqrt(x[U] ** 2 + x[V] ** 2 + x[W] ** 2)
        vdot = (x[U] * d[U] + x[V] * d[V] + x[W] * d[W]) / vg
        accel, _ = model.specific_force(x[None, :], delta[None, :], T)
        try:
            out = ctrl.step(x, accel[0], np.array([d[P], d[Q], d[R], vdot]), x1_ref, V_ref)
        except ProbEnvError as exc:
            diverged, reason = True, f"controller: {exc}"
            break
        x_env = model.envelope_coords_batch(x[None, :])[0]
        env_db = to_db_units(x_env, ("p", "q", "r", "alpha", "beta", "vg", "h"))
        M = np.nan
        oog = 0.0
        if db is not None:
            M, _, flag = db.query_metric(_db_query_point(db, x_env))
            oog = float(flag)
        loc_now = loc_flag(env_db)
        loc = loc or loc_now
        fep_active = bool(np.any(out.fep_db != out.ref_db))
        row = np.concatenate([
            [t], x, x_env, out.x1_ref, out.x1_fep, out.x1_com, out.x2_ref, out.x2_fep, out.nu_h,
            out.A1.ravel(), out.ref_db, out.fep_db, out.cons_lo, out.cons_hi, out.delta, [out.thrust],
            [M, oog, float(fep_active), float(np.any(out.nu_h != 0)), float(out.throttle_hold), float(loc_now)],
        ])
        rows.append(row)
        if k == n_steps:
            break
        delta, T = out.delta, out.thrust
        Xn, ok = rk4_batch(model, x[None, :], np.append(delta, T)[None, :], dt)
        if not ok[0]:
            diverged, reason = True, "integration left the model domain or diverged"
            break
        x = Xn[0]
    loc = loc or diverged
    meta = {
        "model": model.name, "fep_mode": cfg.fep_mode, "maneuver": maneuver.to_dict(), "T_end": T_end,
        "dt": dt, "seed": seed, "h0": h0, "mach0": mach0, "prefilter_cutoff": maneuver.cutoff,
        "loc": bool(loc), "diverged": bool(diverged), "truncated": bool(diverged), "reason": reason,
        "rows": len(rows),
    }
    return SimLog(cols, np.array(rows).reshape(len(rows), len(cols)), meta)
