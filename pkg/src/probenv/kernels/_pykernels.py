"""Pure numpy implementations of the numerical kernels.

Reference path and import-time fallback when the compiled extension is not
available.  Signatures mirror ``_ckernels`` exactly.
"""

import numpy as np

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)
SNAP_TOL = 1e-9


def kde_points(samples, bandwidths, points, radius=np.inf, chunk=2048):
    """Product-Gaussian KDE at arbitrary points.

    Contributions with ``|x_j - y_ij| > radius * h_j`` in any dimension are
    dropped when ``radius`` is finite.
    """
    samples = np.ascontiguousarray(samples, dtype=float)
    h = np.asarray(bandwidths, dtype=float)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n, d = samples.shape
    ys = samples / h
    norm = _INV_SQRT_2PI**d / (n * np.prod(h))
    out = np.empty(points.shape[0])
    for start in range(0, points.shape[0], chunk):
        xs = points[start:start + chunk] / h
        z = xs[:, None, :] - ys[None, :, :]
        e = np.exp(-0.5 * np.einsum("mnd,mnd->mn", z, z))
        if np.isfinite(radius):
            e = np.where(np.all(np.abs(z) <= radius, axis=2), e, 0.0)
        out[start:start + chunk] = e.sum(axis=1) * norm
    return out


def kde_grid_truncated(samples, bandwidths, mins, steps, shape, radius):
    """KDE on a regular grid, scattering each sample onto its truncation window.

    Returns a flat array in row-major node order (last dimension fastest).
    """
    samples = np.asarray(samples, dtype=float)
    h = np.asarray(bandwidths, dtype=float)
    mins = np.asarray(mins, dtype=float)
    steps = np.asarray(steps, dtype=float)
    shape = tuple(int(s) for s in shape)
    n, d = samples.shape
    grid = np.zeros(shape)
    norm = _INV_SQRT_2PI**d / (n * np.prod(h))
    axes = [mins[j] + steps[j] * np.arange(shape[j]) for j in range(d)]
    for i in range(n):
        y = samples[i]
        slices = []
        factors = []
        empty = False
        for j in range(d):
            lo = int(np.ceil((y[j] - radius * h[j] - mins[j]) / steps[j]))
            hi = int(np.floor((y[j] + radius * h[j] - mins[j]) / steps[j]))
            lo = max(lo, 0)
            hi = min(hi, shape[j] - 1)
            if lo > hi:
                empty = True
                break
            z = (axes[j][lo:hi + 1] - y[j]) / h[j]
            keep = np.abs(z) <= radius
            factors.append(np.where(keep, np.exp(-0.5 * z * z), 0.0))
            slices.append(slice(lo, hi + 1))
        if empty:
            continue
        block = factors[0]
        for f in factors[1:]:
            block = np.multiply.outer(block, f)
        grid[tuple(slices)] += block
    return grid.ravel() * norm


def _cell_coords(points, mins, steps, shape):
    r = (points - mins) / steps
    kr = np.round(r)
    r = np.where(np.abs(r - kr) < SNAP_TOL, kr, r)
    upper = np.asarray(shape) - 2
    i = np.clip(np.floor(r), 0, upper).astype(np.int64)
    t = r - i
    return i, t


def multilinear(values, mins, steps, shape, points):
    """Multilinear interpolation of a flat row-major grid at in-bounds points."""
    values = np.asarray(values, dtype=float)
    mins = np.asarray(mins, dtype=float)
    steps = np.asarray(steps, dtype=float)
    shape = tuple(int(s) for s in shape)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    d = len(shape)
    strides = np.ones(d, dtype=np.int64)
    for j in range(d - 2, -1, -1):
        strides[j] = strides[j + 1] * shape[j + 1]
    i, t = _cell_coords(points, mins, steps, shape)
    base = i @ strides
    out = np.zeros(points.shape[0])
    for corner in range(1 << d):
        bits = np.array([(corner >> (d - 1 - j)) & 1 for j in range(d)])
        w = np.prod(np.where(bits == 1, t, 1.0 - t), axis=1)
        out += w * values[base + bits @ strides]
    return out
