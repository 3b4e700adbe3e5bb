"""Hot inner loops, each with a numba and a pure-numpy implementation.

The public names dispatch on :data:`weakid._accel.HAVE_NUMBA`; the ``*_numpy``
and ``*_numba`` variants stay importable for benchmarks and cross-checks.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from weakid._accel import HAVE_NUMBA, njit

# ---------------------------------------------------------------- correlation


def correlate_rows_numpy(a, w):
    """Valid correlation along the last axis of a 2-D array."""
    return sliding_window_view(a, w.size, axis=1) @ w


@njit(cache=True)
def correlate_rows_numba(a, w):
    rows, n = a.shape
    L = w.size
    out = np.zeros((rows, n - L + 1))
    for r in range(rows):
        for q in range(n - L + 1):
            acc = 0.0
            for i in range(L):
                acc += w[i] * a[r, q + i]
            out[r, q] = acc
    return out


# ------------------------------------------------- linearized weak operator


def weak_operator_numpy(g, stencils, offsets, qidx, V, resp_comp):
    """Entries of the residual's sensitivity to pointwise noise.

    For query ``q`` and footprint offset ``f``::

        L[q, p] = sum_s stencils[s, f] * g[s, c_in, p] - [c_in == c_resp] V[f]

    with ``p = qidx[q] + offsets[f]``. Returns ``(data, point)`` arrays of shape
    (Q, C_in, F).
    """
    pts = qidx[:, None] + offsets[None, :]
    ncomp = g.shape[1]
    data = np.empty((qidx.size, ncomp, offsets.size))
    for c in range(ncomp):
        gp = g[:, c, :][:, pts]
        data[:, c, :] = np.einsum("sf,sqf->qf", stencils, gp)
        if c == resp_comp:
            data[:, c, :] -= V[None, :]
    return data, pts


@njit(cache=True)
def _weak_operator_numba(g, stencils, offsets, qidx, V, resp_comp):
    S = stencils.shape[0]
    F = offsets.size
    Q = qidx.size
    ncomp = g.shape[1]
    data = np.empty((Q, ncomp, F))
    pts = np.empty((Q, F), dtype=np.int64)
    for q in range(Q):
        for f in range(F):
            p = qidx[q] + offsets[f]
            pts[q, f] = p
            for c in range(ncomp):
                acc = 0.0
                for s in range(S):
                    acc += stencils[s, f] * g[s, c, p]
                if c == resp_comp:
                    acc -= V[f]
                data[q, c, f] = acc
    return data, pts


def weak_operator_numba(g, stencils, offsets, qidx, V, resp_comp):
    return _weak_operator_numba(
        np.ascontiguousarray(g), np.ascontiguousarray(stencils), offsets.astype(np.int64),
        qidx.astype(np.int64), np.ascontiguousarray(V), int(resp_comp),
    )


# ---------------------------------------------------------- particle update

DRIFT_OU = 0
DRIFT_OSCILLATORY = 1


def _coefficients_numpy(x, kind, p):
    if kind == DRIFT_OU:
        return -p[0] * x, np.full_like(x, p[1])
    # oscillatory diffusivity a(x) = D (1 + amp sin(2 pi x / eps)), with optional OU confinement
    phase = 2.0 * np.pi * x / p[3]
    return -p[0] * x, p[1] * (1.0 + p[2] * np.sin(phase))


def em_advance_numpy(x, normals, dt, kind, params):
    """Euler-Maruyama steps, one per row of ``normals``; updates ``x`` in place."""
    root = np.sqrt(2.0 * dt)
    for k in range(normals.shape[0]):
        drift, diff = _coefficients_numpy(x, kind, params)
        x += drift * dt + root * np.sqrt(np.maximum(diff, 0.0)) * normals[k]
    return x


@njit(cache=True)
def _em_advance_numba(x, normals, dt, kind, params):
    root = np.sqrt(2.0 * dt)
    steps, n = normals.shape
    two_pi = 2.0 * np.pi
    for k in range(steps):
        for i in range(n):
            xi = x[i]
            drift = -params[0] * xi
            if kind == 0:
                diff = params[1]
            else:
                diff = params[1] * (1.0 + params[2] * np.sin(two_pi * xi / params[3]))
            if diff < 0.0:
                diff = 0.0
            x[i] = xi + (drift * dt + root * np.sqrt(diff) * normals[k, i])
    return x


def em_advance_numba(x, normals, dt, kind, params):
    return _em_advance_numba(x, normals, float(dt), int(kind), np.asarray(params, dtype=np.float64))


# ---------------------------------------------------------------- histogram


def bin_counts_numpy(x, lo, width, nbins):
    idx = np.floor((x - lo) / width).astype(np.int64)
    inside = (idx >= 0) & (idx < nbins)
    counts = np.bincount(idx[inside], minlength=nbins).astype(np.float64)
    return counts, int(x.size - inside.sum())


@njit(cache=True)
def _bin_counts_numba(x, lo, width, nbins):
    counts = np.zeros(nbins)
    outside = 0
    for i in range(x.size):
        j = int(np.floor((x[i] - lo) / width))
        if 0 <= j < nbins:
            counts[j] += 1.0
        else:
            outside += 1
    return counts, outside


def bin_counts_numba(x, lo, width, nbins):
    counts, outside = _bin_counts_numba(x, float(lo), float(width), int(nbins))
    return counts, int(outside)


if HAVE_NUMBA:
    correlate_rows = correlate_rows_numba
    weak_operator = weak_operator_numba
    em_advance = em_advance_numba
    bin_counts = bin_counts_numba
else:
    correlate_rows = correlate_rows_numpy
    weak_operator = weak_operator_numpy
    em_advance = em_advance_numpy
    bin_counts = bin_counts_numpy
