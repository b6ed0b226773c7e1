"""Gridded envelope database: log-membership metric, constraints, file I/O.

File layout (little-endian)::

    b"SFEDB\\x01"  u32 version  u32 d
    d x { u16 len, name bytes, f64 min, f64 max, f64 step }
    u8 kind                       1 = metric, 2 = metric + constraints
    f64[n] metric
    f64[n*d] x_min, f64[n*d] x_max  (kind 2 only, node-major)
    u32 CRC32 of every preceding byte

Arrays are in row-major node order with the last dimension fastest.
"""

from __future__ import annotations

import csv
import struct
import zlib
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import kernels
from .density import KdeModel, MembershipField, build_membership_field
from .errors import (
    BadMagicError,
    ChecksumError,
    DatabaseFormatError,
    EmptyEnvelopeError,
    TruncatedFileError,
    VersionMismatchError,
)
from .grid import GridSpec, to_db_units

MAGIC = b"SFEDB\x01"
FORMAT_VERSION = 1
KIND_METRIC = 1
KIND_METRIC_CONSTRAINTS = 2
DEFAULT_EPSILON = 1e-6
_MAX_DIMS = 16


def binarize_threshold(k0: float) -> float:
    """Membership threshold ``exp(-k0^2 / 2)`` of the k0 cut."""
    if k0 < 0:
        raise ValueError("k0 must be non-negative")
    return float(np.exp(-0.5 * k0 * k0))


@dataclass(frozen=True, eq=False)
class ProbMetricField:
    grid: GridSpec
    values: np.ndarray
    epsilon: float = DEFAULT_EPSILON


@dataclass(frozen=True, eq=False)
class ConstraintField:
    grid: GridSpec
    lower: np.ndarray  # (n_nodes, d)
    upper: np.ndarray
    inside: np.ndarray  # bool (n_nodes,)


def build_prob_field(membership, epsilon: float = DEFAULT_EPSILON, grid=None) -> ProbMetricField:
    """Nodewise ``ln(max(mu, epsilon))``."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    if isinstance(membership, MembershipField):
        grid, mu = membership.grid, membership.values
    else:
        mu = np.asarray(membership, dtype=float)
    return ProbMetricField(grid, np.log(np.maximum(mu, epsilon)), float(epsilon))


def _run_bounds(inside, axis):
    """First and last index of the contiguous inside run through each node."""
    a = np.moveaxis(inside, axis, -1)
    n = a.shape[-1]
    start = np.empty(a.shape, dtype=np.int64)
    end = np.empty(a.shape, dtype=np.int64)
    start[..., 0] = 0
    for k in range(1, n):
        start[..., k] = np.where(a[..., k] & a[..., k - 1], start[..., k - 1], k)
    end[..., n - 1] = n - 1
    for k in range(n - 2, -1, -1):
        end[..., k] = np.where(a[..., k] & a[..., k + 1], end[..., k + 1], k)
    return np.moveaxis(start, -1, axis), np.moveaxis(end, -1, axis)


def build_constraint_field(membership: MembershipField, k0: float = 3.0) -> ConstraintField:
    """Per-node state constraints from the k0 cut of the membership field.

    Inside nodes get, per dimension, the extent of the contiguous inside run
    through the node along that axis.  Outside nodes copy the constraints of
    the nearest inside node (Euclidean distance in grid-index units).

    Raises
    ------
    EmptyEnvelopeError
        If no node reaches the threshold.
    """
    grid = membership.grid
    mu0 = binarize_threshold(k0)
    inside = (membership.values >= mu0).reshape(grid.shape)
    if not inside.any():
        raise EmptyEnvelopeError(f"no node reaches the k0={k0} threshold")
    d = grid.d
    lo = np.empty(grid.shape + (d,))
    hi = np.empty(grid.shape + (d,))
    for j in range(d):
        s, e = _run_bounds(inside, j)
        lo[..., j] = grid.mins[j] + grid.steps[j] * s
        hi[..., j] = grid.mins[j] + grid.steps[j] * e
    _, idx = ndimage.distance_transform_edt(~inside, return_indices=True)
    src = tuple(idx[j] for j in range(d))
    lo = lo[src]
    hi = hi[src]
    n = grid.n_nodes
    return ConstraintField(grid, lo.reshape(n, d), hi.reshape(n, d), inside.ravel())


class EnvelopeDatabase:
    """Metric field with optional constraint field and interpolated queries.

    All coordinates are in database units (see :mod:`probenv.grid`).
    """

    def __init__(self, metric: ProbMetricField, constraints: ConstraintField | None = None, meta=None):
        if constraints is not None and constraints.grid != metric.grid:
            raise ValueError("metric and constraint grids differ")
        self.metric = metric
        self.constraints = constraints
        self.meta = dict(meta or {})

    @property
    def grid(self) -> GridSpec:
        return self.metric.grid

    @property
    def names(self):
        return self.grid.names

    @classmethod
    def from_membership(cls, membership: MembershipField, epsilon=DEFAULT_EPSILON, k0=3.0,
                        with_constraints=True):
        metric = build_prob_field(membership, epsilon)
        cons = build_constraint_field(membership, k0) if with_constraints else None
        return cls(metric, cons, {"epsilon": epsilon, "k0": k0})

    # -- queries ------------------------------------------------------------

    def _interp(self, pts):
        g = self.grid
        return kernels.multilinear(self.metric.values, g.mins_arr, g.steps_arr, g.shape, pts)

    def query_metric_batch(self, X):
        """Metric, gradient and out-of-grid flag for a batch of points."""
        g = self.grid
        X, flag = g.clamp(X)
        n, d = X.shape
        st = g.steps_arr
        plus = X[:, None, :] + np.eye(d)[None] * st
        minus = X[:, None, :] - np.eye(d)[None] * st
        can_up = plus[:, np.arange(d), np.arange(d)] <= g.maxs_arr + 1e-9 * st
        can_dn = minus[:, np.arange(d), np.arange(d)] >= g.mins_arr - 1e-9 * st
        pts = np.concatenate([X, plus.reshape(-1, d), minus.reshape(-1, d)])
        pts = np.clip(pts, g.mins_arr, g.maxs_arr)
        v = self._interp(pts)
        m0 = v[:n]
        vp = v[n:n + n * d].reshape(n, d)
        vm = v[n + n * d:].reshape(n, d)
        # central where both neighbours exist, otherwise one-sided
        J = np.where(can_up & can_dn, (vp - vm) / (2 * st),
                     np.where(can_up, (vp - m0[:, None]) / st, (m0[:, None] - vm) / st))
        return m0, J, flag

    def query_metric(self, x):
        """``(M_env, J_env, out_of_grid)`` at one point."""
        m, J, f = self.query_metric_batch(np.asarray(x, dtype=float)[None, :])
        return float(m[0]), J[0], bool(f[0])

    def query_constraints(self, x):
        """``(x_min, x_max, out_of_grid)`` of the nearest grid node."""
        if self.constraints is None:
            raise ValueError("database has no constraint field")
        c, flag = self.grid.clamp(x)
        k = self.grid.nearest_index(c)[0]
        flat = self.grid.flat_index(k)
        return self.constraints.lower[flat].copy(), self.constraints.upper[flat].copy(), bool(flag[0])

    def gradient_bound(self) -> np.ndarray:
        """Per-dimension bound on ``|J_env|`` anywhere in the grid.

        Every gradient component is an average of cell-edge slopes along its
        axis, so the largest edge slope bounds it.
        """
        vals = self.metric.values.reshape(self.grid.shape)
        out = np.empty(self.grid.d)
        for j in range(self.grid.d):
            out[j] = np.max(np.abs(np.diff(vals, axis=j))) / self.grid.steps[j]
        return out

    # -- serialisation ------------------------------------------------------

    def to_bytes(self) -> bytes:
        g = self.grid
        parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, g.d)]
        for j in range(g.d):
            name = g.names[j].encode("utf-8")
            parts.append(struct.pack("<H", len(name)))
            parts.append(name)
            parts.append(struct.pack("<ddd", g.mins[j], g.maxs[j], g.steps[j]))
        kind = KIND_METRIC if self.constraints is None else KIND_METRIC_CONSTRAINTS
        parts.append(struct.pack("<B", kind))
        parts.append(np.ascontiguousarray(self.metric.values, dtype="<f8").tobytes())
        if self.constraints is not None:
            parts.append(np.ascontiguousarray(self.constraints.lower, dtype="<f8").tobytes())
            parts.append(np.ascontiguousarray(self.constraints.upper, dtype="<f8").tobytes())
        body = b"".join(parts)
        return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def from_bytes(cls, data: bytes, epsilon=DEFAULT_EPSILON):
        """Parse a database image; nothing is returned unless every check passes."""
        if len(data) < len(MAGIC) or data[:len(MAGIC)] != MAGIC:
            raise BadMagicError("not an envelope database (bad magic)")
        pos = len(MAGIC)

        def take(n):
            nonlocal pos
            if pos + n > len(data):
                raise TruncatedFileError("database file is truncated")
            chunk = data[pos:pos + n]
            pos += n
            return chunk

        version, d = struct.unpack("<II", take(8))
        if version != FORMAT_VERSION:
            raise VersionMismatchError(f"database version {version}, expected {FORMAT_VERSION}")
        if not 1 <= d <= _MAX_DIMS:
            raise DatabaseFormatError(f"implausible dimension count {d}")
        names, mins, maxs, steps = [], [], [], []
        for _ in range(d):
            (ln,) = struct.unpack("<H", take(2))
            names.append(take(ln).decode("utf-8"))
            a, b, c = struct.unpack("<ddd", take(24))
            mins.append(a)
            maxs.append(b)
            steps.append(c)
        (kind,) = struct.unpack("<B", take(1))
        if kind not in (KIND_METRIC, KIND_METRIC_CONSTRAINTS):
            raise DatabaseFormatError(f"unknown payload kind {kind}")
        try:
            grid = GridSpec(tuple(names), tuple(mins), tuple(maxs), tuple(steps))
        except Exception as exc:
            raise DatabaseFormatError(f"invalid grid header: {exc}") from exc
        n = grid.n_nodes
        payload = n * 8 * (1 if kind == KIND_METRIC else 1 + 2 * d)
        if len(data) < pos + payload + 4:
            raise TruncatedFileError("database file is truncated")
        if len(data) > pos + payload + 4:
            raise DatabaseFormatError("trailing bytes after checksum")
        (crc,) = struct.unpack("<I", data[-4:])
        if zlib.crc32(data[:-4]) & 0xFFFFFFFF != crc:
            raise ChecksumError("database checksum mismatch")
        arr = np.frombuffer(data, dtype="<f8", count=payload // 8, offset=pos).astype(float)
        metric = ProbMetricField(grid, arr[:n].copy(), epsilon)
        cons = None
        if kind == KIND_METRIC_CONSTRAINTS:
            lo = arr[n:n + n * d].reshape(n, d).copy()
            hi = arr[n + n * d:].reshape(n, d).copy()
            inside = np.ones(n, dtype=bool)
            nodes = grid.nodes()
            inside = np.all((lo <= nodes) & (nodes <= hi), axis=1)
            cons = ConstraintField(grid, lo, hi, inside)
        return cls(metric, cons)

    @classmethod
    def load(cls, path, epsilon=DEFAULT_EPSILON):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read(), epsilon)

    def export_csv(self, path):
        g = self.grid
        header = list(g.names) + ["M_env"]
        if self.constraints is not None:
            header += [f"{n}_min" for n in g.names] + [f"{n}_max" for n in g.names]
        nodes = g.nodes()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(header)
            for k in range(g.n_nodes):
                row = list(nodes[k]) + [self.metric.values[k]]
                if self.constraints is not None:
                    row += list(self.constraints.lower[k]) + list(self.constraints.upper[k])
                wr.writerow([repr(float(v)) for v in row])


def samples_in_db_units(samples, names) -> np.ndarray:
    """Endpoint columns ``names`` of a sample set, converted to database units."""
    cols = [samples.coord_names.index(n) for n in names]
    return to_db_units(np.asarray(samples.endpoints)[:, cols], names)


def build_database(fwd, bwd, grid: GridSpec, epsilon=DEFAULT_EPSILON, k0=3.0, truncate=None):
    """Forward and backward sample sets to a database on ``grid``.

    Returns the database and the membership field it came from.
    """
    kf = KdeModel.from_samples(samples_in_db_units(fwd, grid.names), grid.names)
    kb = KdeModel.from_samples(samples_in_db_units(bwd, grid.names), grid.names)
    mem = build_membership_field(kf, kb, grid, truncate=truncate)
    db = EnvelopeDatabase.from_membership(mem, epsilon, k0)
    db.meta.update({
        "bandwidths_fwd": [float(v) for v in kf.bandwidths],
        "bandwidths_bwd": [float(v) for v in kb.bandwidths],
        "argmax": [float(v) for v in mem.argmax_coords],
        "norm": float(mem.norm),
    })
    return db, mem


def query_metric(db: EnvelopeDatabase, x):
    return db.query_metric(x)


def query_constraints(db: EnvelopeDatabase, x):
    return db.query_constraints(x)
