# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled numerical kernels; see ``_pykernels`` for the reference versions."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, floor, ceil, fabs, sqrt, M_PI, INFINITY, round as cround

cnp.import_array()

cdef enum:
    MAXD = 16
cdef double SNAP_TOL = 1e-9


def kde_points(samples, bandwidths, points, double radius=INFINITY, chunk=None):
    cdef double[:, ::1] ys = np.ascontiguousarray(samples, dtype=np.float64)
    cdef double[::1] h = np.ascontiguousarray(bandwidths, dtype=np.float64)
    cdef double[:, ::1] xs = np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64)
    cdef Py_ssize_t n = ys.shape[0], d = ys.shape[1], m = xs.shape[0]
    cdef Py_ssize_t a, i, j
    cdef double acc, s, z, prodh = 1.0
    cdef bint truncate = radius < INFINITY
    cdef bint skip
    cdef double[::1] inv_h = np.empty(d)
    out = np.empty(m)
    cdef double[::1] o = out
    for j in range(d):
        inv_h[j] = 1.0 / h[j]
        prodh *= h[j]
    cdef double norm = (1.0 / sqrt(2.0 * M_PI)) ** d / (n * prodh)
    for a in range(m):
        acc = 0.0
        for i in range(n):
            s = 0.0
            skip = False
            for j in range(d):
                z = (xs[a, j] - ys[i, j]) * inv_h[j]
                if truncate and fabs(z) > radius:
                    skip = True
                    break
                s += z * z
            if not skip:
                acc += exp(-0.5 * s)
        o[a] = acc * norm
    return out


def kde_grid_truncated(samples, bandwidths, mins, steps, shape, double radius):
    cdef double[:, ::1] ys = np.ascontiguousarray(samples, dtype=np.float64)
    cdef double[::1] h = np.ascontiguousarray(bandwidths, dtype=np.float64)
    cdef double[::1] mn = np.ascontiguousarray(mins, dtype=np.float64)
    cdef double[::1] st = np.ascontiguousarray(steps, dtype=np.float64)
    cdef Py_ssize_t n = ys.shape[0], d = ys.shape[1]
    if d > MAXD:
        raise ValueError("too many dimensions")
    cdef Py_ssize_t shp[MAXD]
    cdef Py_ssize_t stride[MAXD]
    cdef Py_ssize_t lo[MAXD]
    cdef Py_ssize_t hi[MAXD]
    cdef Py_ssize_t idx[MAXD]
    cdef Py_ssize_t off[MAXD]
    cdef Py_ssize_t j, i, total = 1, k, maxwin = 1, flat
    cdef double prodh = 1.0, z, w, node
    cdef bint empty
    for j in range(d):
        shp[j] = int(shape[j])
        total *= shp[j]
        prodh *= h[j]
    stride[d - 1] = 1
    for j in range(d - 2, -1, -1):
        stride[j] = stride[j + 1] * shp[j + 1]
    for j in range(d):
        k = <Py_ssize_t>(2.0 * radius * h[j] / st[j]) + 3
        if k > maxwin:
            maxwin = k
    out = np.zeros(total)
    cdef double[::1] g = out
    cdef double[:, ::1] kv = np.zeros((d, maxwin))
    # partial products along the odometer
    cdef double[::1] part = np.zeros(d + 1)
    for i in range(n):
        empty = False
        for j in range(d):
            lo[j] = <Py_ssize_t>ceil((ys[i, j] - radius * h[j] - mn[j]) / st[j])
            hi[j] = <Py_ssize_t>floor((ys[i, j] + radius * h[j] - mn[j]) / st[j])
            if lo[j] < 0:
                lo[j] = 0
            if hi[j] > shp[j] - 1:
                hi[j] = shp[j] - 1
            if lo[j] > hi[j]:
                empty = True
                break
            for k in range(hi[j] - lo[j] + 1):
                node = mn[j] + st[j] * (lo[j] + k)
                z = (node - ys[i, j]) / h[j]
                if fabs(z) <= radius:
                    kv[j, k] = exp(-0.5 * z * z)
                else:
                    kv[j, k] = 0.0
        if empty:
            continue
        for j in range(d):
            idx[j] = 0
        part[0] = 1.0
        off[0] = 0
        for j in range(d):
            part[j + 1] = part[j] * kv[j, 0]
            if j + 1 < d:
                off[j + 1] = off[j] + (lo[j] + idx[j]) * stride[j]
        while True:
            flat = off[d - 1] + (lo[d - 1] + idx[d - 1]) * stride[d - 1]
            g[flat] += part[d]
            # advance odometer
            j = d - 1
            while j >= 0:
                idx[j] += 1
                if idx[j] <= hi[j] - lo[j]:
                    break
                idx[j] = 0
                j -= 1
            if j < 0:
                break
            # rebuild partial products from dimension j on
            while j < d:
                part[j + 1] = part[j] * kv[j, idx[j]]
                if j + 1 < d:
                    off[j + 1] = off[j] + (lo[j] + idx[j]) * stride[j]
                j += 1
    cdef double norm = (1.0 / sqrt(2.0 * M_PI)) ** d / (n * prodh)
    for k in range(total):
        g[k] *= norm
    return out


def multilinear(values, mins, steps, shape, points):
    cdef double[::1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef double[::1] mn = np.ascontiguousarray(mins, dtype=np.float64)
    cdef double[::1] st = np.ascontiguousarray(steps, dtype=np.float64)
    cdef double[:, ::1] xs = np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64)
    cdef Py_ssize_t d = len(shape), m = xs.shape[0]
    if d > MAXD:
        raise ValueError("too many dimensions")
    cdef Py_ssize_t shp[MAXD]
    cdef Py_ssize_t stride[MAXD]
    cdef Py_ssize_t cell[MAXD]
    cdef double t[MAXD]
    cdef Py_ssize_t a, j, corner, flat, bit
    cdef double r, kr, w, acc
    for j in range(d):
        shp[j] = int(shape[j])
    stride[d - 1] = 1
    for j in range(d - 2, -1, -1):
        stride[j] = stride[j + 1] * shp[j + 1]
    out = np.empty(m)
    cdef double[::1] o = out
    for a in range(m):
        for j in range(d):
            r = (xs[a, j] - mn[j]) / st[j]
            kr = cround(r)
            if fabs(r - kr) < SNAP_TOL:
                r = kr
            cell[j] = <Py_ssize_t>floor(r)
            if cell[j] > shp[j] - 2:
                cell[j] = shp[j] - 2
            if cell[j] < 0:
                cell[j] = 0
            t[j] = r - cell[j]
        acc = 0.0
        for corner in range(1 << d):
            w = 1.0
            flat = 0
            for j in range(d):
                bit = (corner >> (d - 1 - j)) & 1
                if bit:
                    w *= t[j]
                else:
                    w *= 1.0 - t[j]
                flat += (cell[j] + bit) * stride[j]
            acc += w * v[flat]
        o[a] = acc
    return out
