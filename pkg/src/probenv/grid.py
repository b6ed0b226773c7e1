"""Regular evaluation grids and the unit convention of envelope databases.

Database coordinates use degrees for angles, deg/s for rates, ft/s for
speed and ft for altitude.  Monte Carlo endpoints (radians) are converted
with :func:`to_db_units` before density estimation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridError

_DEG = 180.0 / np.pi
UNIT_SCALE = {"p": _DEG, "q": _DEG, "r": _DEG, "alpha": _DEG, "beta": _DEG, "vg": 1.0, "h": 1.0}

# default database grid: (name, min, max, step) in database units
DEFAULT_GRID = (
    ("p", -150.0, 150.0, 30.0),
    ("q", -150.0, 150.0, 30.0),
    ("r", -60.0, 60.0, 30.0),
    ("alpha", -60.0, 60.0, 5.0),
    ("beta", -45.0, 45.0, 5.0),
    ("vg", 400.0, 1300.0, 180.0),
    ("h", 10000.0, 30000.0, 5000.0),
)

# Protected states only, with finer pitch-rate and alpha steps than the
# default table.  Used by the closed-loop protection scenario: with a 30 deg/s
# pitch-rate step the nearest-node constraint boxes collapse to single values
# near the alpha boundary.
PROTECTION_GRID = "p:-150:150:30,q:-150:150:10,r:-60:60:30,alpha:-60:60:2.5,beta:-45:45:5"


def unit_scale(names) -> np.ndarray:
    return np.array([UNIT_SCALE.get(n, 1.0) for n in names])


def to_db_units(values, names) -> np.ndarray:
    """Scale columns named in ``names`` from SI-radian to database units."""
    return np.asarray(values, dtype=float) * unit_scale(names)


def from_db_units(values, names) -> np.ndarray:
    return np.asarray(values, dtype=float) / unit_scale(names)


@dataclass(frozen=True)
class GridSpec:
    names: tuple
    mins: tuple
    maxs: tuple
    steps: tuple

    def __post_init__(self):
        d = len(self.names)
        if d == 0:
            raise GridError("grid has no dimensions")
        if not (len(self.mins) == len(self.maxs) == len(self.steps) == d):
            raise GridError("grid field lengths differ")
        if len(set(self.names)) != d:
            raise GridError("duplicate dimension names")
        object.__setattr__(self, "names", tuple(str(n) for n in self.names))
        for k in ("mins", "maxs", "steps"):
            object.__setattr__(self, k, tuple(float(v) for v in getattr(self, k)))
        shape = []
        for n, lo, hi, st in zip(self.names, self.mins, self.maxs, self.steps):
            if not st > 0:
                raise GridError(f"{n}: step must be positive")
            cells = (hi - lo) / st
            if abs(cells - round(cells)) > 1e-9 * max(1.0, abs(cells)):
                raise GridError(f"{n}: range is not an integral number of steps")
            if round(cells) < 1:
                raise GridError(f"{n}: at least two nodes are required")
            shape.append(int(round(cells)) + 1)
        object.__setattr__(self, "shape", tuple(shape))

    @classmethod
    def from_rows(cls, rows):
        rows = list(rows)
        return cls(tuple(r[0] for r in rows), tuple(r[1] for r in rows),
                   tuple(r[2] for r in rows), tuple(r[3] for r in rows))

    @classmethod
    def default(cls, names=None):
        rows = DEFAULT_GRID if names is None else [r for n in names for r in DEFAULT_GRID if r[0] == n]
        if names is not None and len(rows) != len(names):
            raise GridError(f"unknown default dimensions in {names}")
        return cls.from_rows(rows)

    @classmethod
    def parse(cls, text):
        """Parse ``"name:min:max:step,name:min:max:step,..."``."""
        rows = []
        for part in text.split(","):
            bits = part.strip().split(":")
            if len(bits) != 4:
                raise GridError(f"bad grid dimension {part!r}; expected name:min:max:step")
            try:
                rows.append((bits[0], float(bits[1]), float(bits[2]), float(bits[3])))
            except ValueError as exc:
                raise GridError(f"bad number in {part!r}") from exc
        return cls.from_rows(rows)

    @property
    def d(self) -> int:
        return len(self.names)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.shape))

    @property
    def mins_arr(self):
        return np.array(self.mins)

    @property
    def maxs_arr(self):
        return np.array(self.maxs)

    @property
    def steps_arr(self):
        return np.array(self.steps)

    def axis(self, j) -> np.ndarray:
        return self.mins[j] + self.steps[j] * np.arange(self.shape[j])

    def nodes(self) -> np.ndarray:
        """All node coordinates, row-major (last dimension fastest)."""
        mesh = np.meshgrid(*[self.axis(j) for j in range(self.d)], indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def node(self, index) -> np.ndarray:
        return self.mins_arr + self.steps_arr * np.asarray(index)

    def flat_index(self, index) -> int:
        return int(np.ravel_multi_index(tuple(int(i) for i in index), self.shape))

    def nearest_index(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        k = np.rint((x - self.mins_arr) / self.steps_arr)
        return np.clip(k, 0, np.array(self.shape) - 1).astype(np.int64)

    def clamp(self, x):
        """Clamp points to the grid box; returns (clamped, out_of_grid flags)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        c = np.clip(x, self.mins_arr, self.maxs_arr)
        return c, np.any(c != x, axis=1)

    def select(self, names):
        idx = [self.names.index(n) for n in names]
        return GridSpec(tuple(self.names[i] for i in idx), tuple(self.mins[i] for i in idx),
                        tuple(self.maxs[i] for i in idx), tuple(self.steps[i] for i in idx))
