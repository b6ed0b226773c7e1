import os
import subprocess
import sys

import numpy as np
import pytest

from probenv import kernels
from probenv.kernels import _pykernels

BACKENDS = kernels.available_backends()
compiled = pytest.mark.skipif("cython" not in BACKENDS, reason="compiled kernels not built")


def test_python_backend_always_available():
    assert BACKENDS["python"] is _pykernels
    assert kernels.BACKEND in BACKENDS


@compiled
def test_kde_points_agree(rng):
    c = BACKENDS["cython"]
    ys = rng.standard_normal((700, 3))
    h = np.array([0.3, 0.5, 0.4])
    xs = rng.uniform(-3, 3, (250, 3))
    for radius in (np.inf, 4.0):
        a = _pykernels.kde_points(ys, h, xs, radius)
        b = c.kde_points(ys, h, xs, radius)
        assert np.allclose(a, b, rtol=1e-12, atol=1e-300)


@compiled
def test_truncated_grid_agree(rng):
    c = BACKENDS["cython"]
    ys = rng.standard_normal((300, 3)) * [1.0, 2.0, 0.5]
    h = np.array([0.4, 0.7, 0.2])
    args = (np.array([-3.0, -5.0, -1.5]), np.array([0.25, 0.5, 0.1]), (25, 21, 31), 5.0)
    a = _pykernels.kde_grid_truncated(ys, h, *args)
    b = c.kde_grid_truncated(ys, h, *args)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-300)


@compiled
def test_multilinear_agree(rng):
    c = BACKENDS["cython"]
    shape = (6, 5, 7)
    vals = rng.standard_normal(int(np.prod(shape)))
    mins, steps = np.array([0.0, -1.0, 2.0]), np.array([0.5, 0.5, 0.25])
    pts = rng.uniform(mins, mins + steps * (np.array(shape) - 1), (400, 3))
    pts[:5] = mins + steps * np.array([[5, 4, 6], [0, 0, 0], [2, 3, 1], [5, 0, 6], [1, 4, 0]])
    a = _pykernels.multilinear(vals, mins, steps, shape, pts)
    b = c.multilinear(vals, mins, steps, shape, pts)
    assert np.allclose(a, b, rtol=1e-13, atol=1e-14)


def test_multilinear_reproduces_nodes(rng):
    shape = (4, 3)
    vals = rng.standard_normal(12)
    mins, steps = np.zeros(2), np.ones(2)
    nodes = np.array([[i, j] for i in range(4) for j in range(3)], dtype=float)
    assert np.array_equal(kernels.multilinear(vals, mins, steps, shape, nodes), vals)


def test_pure_python_switch():
    env = {**os.environ, "PROBENV_PURE_PYTHON": "1"}
    res = subprocess.run([sys.executable, "-c", "from probenv import kernels; print(kernels.BACKEND)"],
                         capture_output=True, text=True, env=env)
    assert res.returncode == 0 and res.stdout.strip() == "python"
