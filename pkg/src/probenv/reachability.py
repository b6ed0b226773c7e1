"""Monte Carlo forward/backward reachability sampling.

Each trajectory starts at a random trim state and, at every integration
step, picks for every effector whichever admissible bound moves the state
along a freshly drawn random direction ``W``::

    s_i = W . (J~^-1 J_d)[:, i]
    delta_i <- upper bound  if s_i <= 0
               lower bound  otherwise

so inputs are always bang-bang.  Endpoints at the horizon are collected in
envelope coordinates.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .dynamics import BACKWARD, FORWARD, _direction_sign, rk4_batch
from .errors import EstimationQualityError, HorizonError

HORIZON_GUARD = 1.5
_DIR_CODE = {FORWARD: 0, BACKWARD: 1}


@dataclass
class SamplerConfig:
    """Monte Carlo settings.

    ``w_dist`` is ``"normal"`` (standard normal) or ``"uniform"`` (uniform on
    [-1, 1]); both are symmetric about zero.
    """

    T_f: float = 1.5
    dt: float = 0.01
    N: int = 10000
    seed: int = 0
    w_dist: str = "normal"
    allow_long_horizon: bool = False
    max_discard_frac: float = 0.2
    chunk: int = 2000

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.T_f < 0:
            raise ValueError("T_f must be non-negative")
        if self.T_f > HORIZON_GUARD and not self.allow_long_horizon:
            raise HorizonError(f"T_f={self.T_f} s exceeds the {HORIZON_GUARD} s guard")
        n = self.T_f / self.dt
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ValueError("T_f must be an integer multiple of dt")
        if self.w_dist not in ("normal", "uniform"):
            raise ValueError(f"unknown W distribution {self.w_dist!r}")
        if self.N < 1:
            raise ValueError("N must be positive")

    @property
    def n_steps(self) -> int:
        return int(round(self.T_f / self.dt))


def _direction_name(direction):
    return FORWARD if _direction_sign(direction) > 0 else BACKWARD


def trajectory_rng(seed: int, tid: int, direction=FORWARD) -> np.random.Generator:
    """Independent stream for one trajectory, derived from the master seed."""
    code = _DIR_CODE[_direction_name(direction)]
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(code, int(tid))))


def sample_exploration_weights(rng, n: int = 6, dist: str = "normal") -> np.ndarray:
    """Random exploration direction, ordered (u, v, w, p, q, r) for aircraft."""
    if dist == "normal":
        return rng.standard_normal(n)
    return rng.uniform(-1.0, 1.0, n)


def _bounds_batch(limits, U0, dt):
    lo = np.maximum(limits.delta_min, U0 - limits.rate_min * dt)
    hi = np.minimum(limits.delta_max, U0 + limits.rate_max * dt)
    return lo, np.maximum(hi, lo)


def _extreme_select(model, X, U0, Wt, dt):
    """Bang-bang controls for a batch; returns new packed controls and mask."""
    Jd, ok = model.effectiveness_u(X, U0)
    G = np.einsum("ij,njk->nik", model.inv_augmented_inertia, Jd)
    s = np.einsum("ni,nik->nk", Wt, G)
    lo, hi = _bounds_batch(model.control_limits, U0, dt)
    U1 = np.where(s <= 0.0, hi, lo)
    U1 = np.where(model.explore_mask[None, :], U1, U0)
    return U1, ok


def sample_extreme_control(W, model, x, delta_0, dt) -> np.ndarray:
    """Bang-bang increment for every packed control given direction ``W``.

    Returns ``delta - delta_0``; entries of non-exploring controls are zero.
    """
    X = np.atleast_2d(np.asarray(x.as_array() if hasattr(x, "as_array") else x, dtype=float))
    U0 = np.atleast_2d(np.asarray(delta_0.as_array() if hasattr(delta_0, "as_array") else delta_0, dtype=float))
    U1, _ = _extreme_select(model, X, U0, np.atleast_2d(W), dt)
    return (U1 - U0)[0]


def select_by_sign(s, lower, upper):
    """Elementwise rule: upper when ``s <= 0``, lower otherwise."""
    return np.where(np.asarray(s) <= 0.0, upper, lower)


def propagate_batch(model, X0, U0, W, dt, sign=1.0, record=None):
    """Run the bang-bang sampler for a batch of trajectories.

    Parameters
    ----------
    W : ndarray, shape (N, n_steps, n_eff)
        Pre-drawn exploration directions.
    record : list, optional
        If given, the applied packed controls of every step are appended.

    Returns
    -------
    X : ndarray
        Final states.
    ok : ndarray of bool
        False for trajectories that left the validity domain or diverged.
    """
    X = np.array(X0, dtype=float)
    Uc = np.array(U0, dtype=float)
    ok = np.ones(X.shape[0], dtype=bool)
    for k in range(W.shape[1]):
        Uc, ok_e = _extreme_select(model, X, Uc, W[:, k, :], dt)
        if record is not None:
            record.append(Uc.copy())
        Xn, ok_s = rk4_batch(model, X, Uc, dt, sign)
        ok &= ok_e & ok_s
        # freeze failed rows so they cannot poison later steps
        X = np.where(ok[:, None], Xn, X)
    return X, ok


@dataclass
class TrajectorySample:
    tid: int
    direction: str
    origin: tuple
    endpoint: np.ndarray


@dataclass
class SampleSet:
    """Endpoints of one Monte Carlo run, sorted by trajectory id."""

    ids: np.ndarray
    origins: np.ndarray
    endpoints: np.ndarray
    direction: str
    config: SamplerConfig
    coord_names: tuple
    discards: int = 0
    attempts: int = 0
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.ids)

    def __getitem__(self, i) -> TrajectorySample:
        return TrajectorySample(int(self.ids[i]), self.direction, tuple(self.origins[i]), self.endpoints[i])

    def metadata(self) -> dict:
        return {
            "direction": self.direction,
            "config": asdict(self.config),
            "coord_names": list(self.coord_names),
            "discards": int(self.discards),
            "attempts": int(self.attempts),
            **self.meta,
        }

    def to_csv(self, path, sidecar=True):
        header = ["id", "direction", "h0", "mach0"] + list(self.coord_names)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(header)
            for i in range(len(self.ids)):
                wr.writerow([str(int(self.ids[i])), self.direction]
                            + [repr(float(v)) for v in self.origins[i]]
                            + [repr(float(v)) for v in self.endpoints[i]])
        if sidecar:
            with open(str(path) + ".meta.json", "w", encoding="utf-8") as fh:
                json.dump(self.metadata(), fh, indent=2, sort_keys=True)
                fh.write("\n")

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="", encoding="utf-8") as fh:
            rd = csv.reader(fh)
            header = next(rd)
            rows = list(rd)
        if header[:4] != ["id", "direction", "h0", "mach0"]:
            raise ValueError(f"{path}: not a sample-set file")
        names = tuple(header[4:])
        directions = {r[1] for r in rows}
        if len(directions) > 1:
            raise ValueError(f"{path}: mixed directions {sorted(directions)}")
        direction = directions.pop() if directions else FORWARD
        ids = np.array([int(r[0]) for r in rows], dtype=np.int64)
        num = np.array([[float(v) for v in r[2:]] for r in rows]).reshape(len(rows), 2 + len(names))
        meta = {}
        try:
            with open(str(path) + ".meta.json", encoding="utf-8") as fh:
                meta = json.load(fh)
        except FileNotFoundError:
            pass
        if "config" not in meta and isinstance(meta.get("sampler"), dict):
            meta = dict(meta["sampler"])  # sidecar written by the command-line driver
        cfg_dict = meta.pop("config", None)
        cfg = SamplerConfig(**cfg_dict) if cfg_dict else SamplerConfig(N=max(len(ids), 1))
        extra = {k: v for k, v in meta.items() if k not in ("direction", "coord_names", "discards", "attempts")}
        return cls(ids, num[:, :2], num[:, 2:], direction, cfg, names,
                   int(meta.get("discards", 0)), int(meta.get("attempts", len(ids))), extra)


def _draw_trajectory_inputs(init_set, model, cfg, tids, direction):
    origins = np.empty((len(tids), 2))
    W = np.empty((len(tids), cfg.n_steps, model.n_effective))
    for k, tid in enumerate(tids):
        rng = trajectory_rng(cfg.seed, tid, direction)
        origins[k] = init_set.draw_origin(rng)
        if cfg.w_dist == "normal":
            W[k] = rng.standard_normal((cfg.n_steps, model.n_effective))
        else:
            W[k] = rng.uniform(-1.0, 1.0, (cfg.n_steps, model.n_effective))
    return origins, W


def _run_ids(model, init_set, cfg, tids, direction):
    sign = _direction_sign(direction)
    ends = np.empty((len(tids), len(model.coord_names)))
    origins = np.empty((len(tids), 2))
    ok = np.empty(len(tids), dtype=bool)
    for a in range(0, len(tids), cfg.chunk):
        sl = slice(a, a + cfg.chunk)
        o, W = _draw_trajectory_inputs(init_set, model, cfg, tids[sl], direction)
        X0, U0 = init_set.initial_batch(o[:, 0], o[:, 1])
        X, good = propagate_batch(model, X0, U0, W, cfg.dt, sign)
        origins[sl] = o
        ends[sl] = model.envelope_coords_batch(X)
        ok[sl] = good & np.all(np.isfinite(ends[sl]), axis=1)
    return origins, ends, ok


def simulate_trajectory(model, init_set, config: SamplerConfig, direction=FORWARD, tid: int = 0) -> TrajectorySample:
    """One sampled trajectory; ``endpoint`` is None if it was discarded."""
    direction = _direction_name(direction)
    o, e, ok = _run_ids(model, init_set, config, np.array([tid]), direction)
    return TrajectorySample(tid, direction, tuple(o[0]), e[0] if ok[0] else None)


def run_monte_carlo(model, init_set, config: SamplerConfig, direction=FORWARD, max_rounds: int = 50) -> SampleSet:
    """Draw ``config.N`` completed trajectories in one direction.

    Discarded trajectories are replaced by fresh ids ``N, N+1, ...``.  The
    result depends only on the inputs and ``config.seed``.

    Raises
    ------
    EstimationQualityError
        If more than ``config.max_discard_frac`` of attempts are discarded.
    """
    direction = _direction_name(direction)
    keep_ids, keep_o, keep_e = [], [], []
    next_id = 0
    need = config.N
    attempts = discards = 0
    for _ in range(max_rounds):
        tids = np.arange(next_id, next_id + need, dtype=np.int64)
        next_id += need
        o, e, ok = _run_ids(model, init_set, config, tids, direction)
        attempts += need
        discards += int(np.count_nonzero(~ok))
        if discards > config.max_discard_frac * attempts:
            raise EstimationQualityError(
                f"{discards} of {attempts} trajectories discarded "
                f"(limit {config.max_discard_frac:.0%})")
        keep_ids.append(tids[ok])
        keep_o.append(o[ok])
        keep_e.append(e[ok])
        need = int(np.count_nonzero(~ok))
        if need == 0:
            break
    else:
        raise EstimationQualityError("retry budget exhausted")
    ids = np.concatenate(keep_ids)
    order = np.argsort(ids, kind="stable")
    return SampleSet(ids[order], np.concatenate(keep_o)[order], np.concatenate(keep_e)[order],
                     direction, config, tuple(model.coord_names), discards, attempts)
