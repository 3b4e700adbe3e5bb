"""Assembly of the weak-form regression system ``G w ~ b``."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from weakid import kernels
from weakid.errors import NumericalError
from weakid.library import FeatureLibrary, evaluate_pointwise
from weakid.testfn import Stencil


def fft_convolve(a: np.ndarray, weights) -> np.ndarray:
    """Valid-region separable correlation of ``a`` with one 1-D kernel per axis.

    ``out[q] = sum_i w[i] a[q + i]`` along every axis with a kernel; ``None``
    skips an axis. Leading axes beyond ``len(weights)`` are broadcast.
    """
    out = np.asarray(a, dtype=float)
    lead = out.ndim - len(weights)
    for ax, w in enumerate(weights):
        if w is None:
            continue
        axis = lead + ax
        w = np.asarray(w, dtype=float)
        n = out.shape[axis]
        L = w.size
        if L > n:
            raise ValueError(f"kernel of length {L} exceeds axis of length {n}")
        size = sfft.next_fast_len(n + L - 1, real=True)
        spec = sfft.rfft(out, size, axis=axis)
        kern = sfft.rfft(w[::-1], size)
        shape = [1] * out.ndim
        shape[axis] = kern.size
        full = sfft.irfft(spec * kern.reshape(shape), size, axis=axis)
        out = np.take(full, np.arange(L - 1, n), axis=axis)
    return out


def direct_convolve(a: np.ndarray, weights) -> np.ndarray:
    """Same contract as :func:`fft_convolve`, by direct summation."""
    out = np.asarray(a, dtype=float)
    lead = out.ndim - len(weights)
    for ax, w in enumerate(weights):
        if w is None:
            continue
        axis = lead + ax
        moved = np.moveaxis(out, axis, -1)
        shape = moved.shape
        res = kernels.correlate_rows(np.ascontiguousarray(moved.reshape(-1, shape[-1])),
                                     np.ascontiguousarray(w, dtype=float))
        out = np.moveaxis(res.reshape(shape[:-1] + (res.shape[-1],)), -1, axis)
    return out


@dataclass(frozen=True, eq=False)
class QueryPlan:
    """Per-axis query indices; the query set is their tensor product (C order)."""

    indices: tuple[np.ndarray, ...]

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(ix.size for ix in self.indices)

    def __len__(self):
        return int(np.prod(self.shape))

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.indices, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


def _interior(n: int, m: int, stride: int) -> np.ndarray:
    return np.arange(m, n - m, stride)


def query_plan(grid, radii, stride=None, count=None) -> QueryPlan:
    """Uniformly strided interior query points.

    ``radii`` are the stencil half-widths per axis. Give either ``stride``
    (int or per-axis ints) or ``count``; with ``count`` the largest common
    stride leaving at least ``count`` queries is used.
    """
    radii = [int(r) for r in radii]
    if len(radii) != grid.ndim:
        raise ValueError("need one stencil radius per grid axis")
    avail = [n - 2 * m for n, m in zip(grid.shape, radii)]
    if min(avail) < 1:
        raise ValueError(f"grid {grid.shape} too small for stencil radii {radii}")
    if stride is None and count is None:
        stride = 1
    if count is not None:
        total = int(np.prod(avail))
        if count > total:
            raise ValueError(f"requested {count} queries but only {total} interior points exist")
        s = 1
        while True:
            nxt = int(np.prod([math.ceil(a / (s + 1)) for a in avail]))
            if nxt < count:
                break
            s += 1
        strides = [s] * grid.ndim
    else:
        strides = [stride] * grid.ndim if np.isscalar(stride) else list(stride)
        if any(s < 1 for s in strides):
            raise ValueError("stride must be >= 1")
    return QueryPlan(tuple(_interior(n, m, s) for n, m, s in zip(grid.shape, radii, strides)))


@dataclass(frozen=True, eq=False)
class WeakSystem:
    """Raw weak features plus power-of-two column scales.

    ``G_raw[:, j] == G[:, j] * col_scale[j]`` and ``b_raw == b * b_scale``
    hold exactly because the scales are powers of two.
    """

    G_raw: np.ndarray
    b_raw: np.ndarray  # (Q, responses)
    queries: QueryPlan
    library: FeatureLibrary
    col_scale: np.ndarray
    b_scale: np.ndarray

    @property
    def G(self) -> np.ndarray:
        return self.G_raw / self.col_scale

    @property
    def b(self) -> np.ndarray:
        return self.b_raw / self.b_scale

    @property
    def column_map(self) -> list[str]:
        return self.library.labels()

    def unscale(self, w_scaled: np.ndarray) -> np.ndarray:
        """Map coefficients of the scaled system back to the raw one."""
        w = np.asarray(w_scaled, dtype=float)
        if w.ndim == 1:
            return w * self.b_scale[0] / self.col_scale
        return w * self.b_scale[None, :] / self.col_scale[:, None]

    def to_csv(self, path) -> None:
        names = self.column_map + [f"b{c}" for c in range(self.b_raw.shape[1])]
        data = np.column_stack([self.G_raw, self.b_raw])
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(names) + "\n")
            for row in data:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _pow2_scale(x: np.ndarray, axis=0) -> np.ndarray:
    """Power of two nearest each column's Euclidean norm (1 for zero columns).

    Dividing by the scale and multiplying back is exact as long as the scaled
    entries stay in the normal floating-point range.
    """
    x = np.asarray(x, dtype=float)
    mx = np.max(np.abs(x), axis=axis)
    out = np.ones_like(mx)
    nz = mx > 0
    # normalize by the max first so squaring tiny entries cannot underflow
    safe = np.where(nz, mx, 1.0)
    norm = mx * np.linalg.norm(x / np.expand_dims(safe, axis), axis=axis)
    out[nz] = np.ldexp(1.0, np.round(np.log2(norm[nz])).astype(int))
    return out


def _grid_weights(stencils, axis, order):
    return stencils[axis].weights[order]


def assemble(d, lib: FeatureLibrary, stencils, queries: QueryPlan, method: str = "fft") -> WeakSystem:
    """Build the weak system for ``d/dt u = sum_j w_j D^{a_j} f_j(u)``.

    ``stencils`` has one :class:`Stencil` per grid axis (time last). Column j is
    ``<(-1)^|a_j| D^{a_j} phi, f_j(U)>`` and response c is ``-<d_t phi, U_c>``,
    both sampled at every query point.
    """
    grid = d.grid
    nsp = grid.ndim - 1
    if lib.spatial_dims != nsp:
        raise ValueError(f"library has {lib.spatial_dims} spatial axes, grid has {nsp}")
    if len(stencils) != grid.ndim:
        raise ValueError("need one stencil per grid axis")
    if len(queries) == 0:
        raise ValueError("empty query plan")
    for ax, (st, n) in enumerate(zip(stencils, grid.shape)):
        if 2 * st.radius + 1 > n:
            raise ValueError(f"stencil footprint exceeds grid on axis {ax}")
        ix = queries.indices[ax]
        if ix.min() < st.radius or ix.max() > n - 1 - st.radius:
            raise ValueError(f"query points too close to the boundary on axis {ax}")
        if ax < nsp and lib.max_order(ax) > st.max_order:
            raise ValueError(f"stencil on axis {ax} lacks derivative order {lib.max_order(ax)}")
    if stencils[-1].max_order < 1:
        raise ValueError("time stencil needs order 1")
    conv = fft_convolve if method == "fft" else direct_convolve

    # valid-region index of each query per axis
    sel = tuple(ix - st.radius for ix, st in zip(queries.indices, stencils))

    def sample(arr):
        return arr[np.ix_(*sel)].ravel()

    feats = evaluate_pointwise(lib, d)
    G = np.empty((len(queries), len(lib)))
    # share the time pass between terms with the same nonlinearity
    cache = {}
    t0 = _grid_weights(stencils, -1, 0)
    for j, term in enumerate(lib.terms):
        key = (term.powers, term.trig, term.coord_powers)
        if key not in cache:
            cache[key] = conv(feats[j], [None] * nsp + [t0])
        tpass = cache[key]
        ws = [_grid_weights(stencils, ax, term.dmulti[ax]) for ax in range(nsp)]
        full = conv(tpass, ws + [None]) if nsp else tpass
        G[:, j] = sample(full)

    t1 = _grid_weights(stencils, -1, 1)
    ws0 = [_grid_weights(stencils, ax, 0) for ax in range(nsp)]
    b = np.empty((len(queries), d.components))
    for c in range(d.components):
        b[:, c] = sample(conv(d.values[..., c], ws0 + [t1]))

    if not (np.all(np.isfinite(G)) and np.all(np.isfinite(b))):
        raise NumericalError("weak system has non-finite entries")
    return WeakSystem(G, b, queries, lib, _pow2_scale(G), _pow2_scale(b))


def build_stencils(grid, radii, orders, families=None) -> list[Stencil]:
    """Poly-bump stencils (degree = order + 3) unless ``families`` are given."""
    from weakid.testfn import default_family, discretize

    out = []
    for ax in range(grid.ndim):
        fam = families[ax] if families is not None else default_family(orders[ax])
        out.append(discretize(fam, grid.spacings[ax], int(radii[ax]), int(orders[ax])))
    return out
