"""Fixed-structure parameter estimation: weak-form GLS and an output-error baseline."""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.optimize import minimize

from weakid import kernels
from weakid.errors import NumericalError
from weakid.library import FeatureLibrary, coordinate_arrays
from weakid.weak import WeakSystem

COV_EPS = 1e-10


@dataclass
class GlsResult:
    w: np.ndarray  # (J, responses)
    w_ols: np.ndarray
    covariance_estimate: np.ndarray  # over the active entries of w, response-major
    iterations: int
    converged: bool
    history: list = field(default_factory=list)
    weighted_residuals: list = field(default_factory=list)
    sigma: np.ndarray | None = None


def estimate_noise_std(d) -> np.ndarray:
    """Per-component white-noise std from the top quarter of wavenumbers.

    Each 1-D line along an axis has the chord between its endpoints removed
    (suppresses leakage from non-periodic data), then the median periodogram
    value over the top quarter of wavenumbers is converted to a variance using
    the exponential-distribution median ``ln 2 * mean``. The smallest estimate
    over axes is returned.
    """
    vals = d.values
    out = np.full(d.components, np.inf)
    for ax in range(d.grid.ndim):
        n = vals.shape[ax]
        if n < 16:
            raise ValueError(f"axis {ax} has {n} samples; need at least 16")
        for c in range(d.components):
            v = np.moveaxis(vals[..., c], ax, 0).reshape(n, -1)
            ramp = np.linspace(0.0, 1.0, n)[:, None]
            v = v - (v[:1] + ramp * (v[-1:] - v[:1]))
            # chord removal pins both endpoints to zero: use n-1 free samples
            p = np.abs(np.fft.rfft(v[:-1], axis=0)) ** 2 / (n - 1)
            kmax = p.shape[0]
            top = p[kmax - max(1, kmax // 4):kmax - 1] if kmax > 4 else p[1:]
            est = np.sqrt(np.median(top) / np.log(2.0))
            out[c] = min(out[c], est)
    return out


def _stencil_tensor(stencils, orders):
    w = stencils[0].weights[orders[0]]
    for st, k in zip(stencils[1:], orders[1:]):
        w = np.multiply.outer(w, st.weights[k])
    return w


def _footprint_offsets(grid_shape, radii):
    strides = np.cumprod((grid_shape[1:] + (1,))[::-1])[::-1]
    offs = np.zeros(1, dtype=np.int64)
    for ax, m in enumerate(radii):
        o = np.arange(-m, m + 1, dtype=np.int64) * strides[ax]
        offs = (offs[:, None] + o[None, :]).ravel()
    return offs


class WeakOperator:
    """Linearized map from pointwise data noise to the weak residual ``G w - b``."""

    def __init__(self, d, system: WeakSystem, stencils):
        self.d = d
        self.lib = system.library
        self.shape = d.grid.shape
        self.C = d.components
        nsp = d.grid.ndim - 1
        radii = [st.radius for st in stencils]
        self.offsets = _footprint_offsets(self.shape, radii)
        pts = system.queries.points()
        self.qidx = np.ravel_multi_index(tuple(pts.T), self.shape).astype(np.int64)
        self.Q = self.qidx.size
        keys = sorted({t.dmulti for t in self.lib.terms})
        self.stencil_keys = keys
        self.S = np.stack([_stencil_tensor(stencils, list(k) + [0]).ravel() for k in keys])
        self.V = _stencil_tensor(stencils, [0] * nsp + [1]).ravel()
        self.term_stencil = [keys.index(t.dmulti) for t in self.lib.terms]
        coords = coordinate_arrays(d.grid, self.lib.spatial_dims)
        coords = tuple(np.broadcast_to(c, self.shape) for c in coords)
        # (J, C_in, N) partial derivatives of each term at the data
        self.jac = np.stack([t.jacobian(d.values, coords).reshape(self.C, -1) for t in self.lib.terms])

    def matrix(self, W: np.ndarray) -> sp.csr_matrix:
        """Sparse L with rows (response, query) and columns (point, component)."""
        N = int(np.prod(self.shape))
        blocks = []
        for c in range(W.shape[1]):
            g = np.zeros((len(self.stencil_keys), self.C, N))
            for j, s in enumerate(self.term_stencil):
                if W[j, c] != 0.0:
                    g[s] += W[j, c] * self.jac[j]
            data, pts = kernels.weak_operator(g, self.S, self.offsets, self.qidx, self.V, c)
            rows = np.repeat(np.arange(self.Q), self.C * self.offsets.size)
            cols = (pts[:, None, :] * self.C + np.arange(self.C)[None, :, None]).ravel()
            blocks.append(sp.csr_matrix((data.ravel(), (rows, cols)), shape=(self.Q, N * self.C)))
        return sp.vstack(blocks).tocsr()


def _block_design(G, mask):
    blocks = [G[:, mask[:, c]] for c in range(mask.shape[1])]
    return sla.block_diag(*blocks) if len(blocks) > 1 else blocks[0]


def _gls_solve(A, y, Cov, eps):
    n = Cov.shape[0]
    tr = np.trace(Cov)
    reg = eps * tr / n if tr > 0 else 1.0
    try:
        chol = sla.cho_factor(Cov + reg * np.eye(n), lower=True)
    except np.linalg.LinAlgError:
        raise NumericalError("residual covariance is numerically singular") from None
    Aw = sla.solve_triangular(chol[0], A, lower=True)
    yw = sla.solve_triangular(chol[0], y, lower=True)
    w, *_ = np.linalg.lstsq(Aw, yw, rcond=None)
    r = Aw @ w - yw
    return w, float(r @ r), Aw


def wendy_estimate(d, system: WeakSystem, stencils, sigma=None, mask=None, tol: float = 1e-6,
                   max_iter: int = 100, eps: float = COV_EPS) -> GlsResult:
    """Iteratively reweighted GLS on a fixed-structure weak system.

    The residual covariance is ``L(w) diag(sigma^2) L(w)^T`` where ``L(w)`` is
    the first-order sensitivity of ``G(U) w - b(U)`` to i.i.d. pointwise
    noise in ``U``; it is rebuilt from the current iterate until the relative
    change in ``w`` drops below ``tol``. ``mask`` (J x responses, bool) fixes
    which terms enter each response; default is all of them.
    """
    R = system.b_raw.shape[1]
    J = len(system.library)
    mask = np.ones((J, R), bool) if mask is None else np.asarray(mask, bool)
    if mask.shape != (J, R) or not mask.any(axis=0).all():
        raise ValueError("mask must be (terms, responses) with a term in every response")
    sigma = estimate_noise_std(d) if sigma is None else np.broadcast_to(
        np.asarray(sigma, dtype=float), (d.components,)).copy()
    # work on the column-scaled system for conditioning
    Gs = system.G
    bs = system.b
    A = _block_design(Gs, mask)
    y = bs.T.ravel()
    unscale = (system.b_scale[None, :] / system.col_scale[:, None])
    slots = np.flatnonzero(mask.T.ravel())  # positions of v inside vec(W^T)

    def to_raw(v):
        full = np.zeros(R * J)
        full[slots] = v
        return full.reshape(R, J).T * unscale

    v, *_ = np.linalg.lstsq(A, y, rcond=None)
    w_ols = to_raw(v)
    op = WeakOperator(d, system, stencils)
    noise_var = np.tile(sigma**2, int(np.prod(d.grid.shape)))
    row_scale = np.repeat(1.0 / system.b_scale, op.Q)
    history = [w_ols.copy()]
    wres = []
    converged = False
    Aw = A
    it = 0
    for it in range(1, max_iter + 1):
        L = op.matrix(to_raw(v))
        L = sp.diags(row_scale) @ L
        Cov = (L @ sp.diags(noise_var) @ L.T).toarray()
        v_new, rr, Aw = _gls_solve(A, y, Cov, eps)
        wres.append(rr)
        v = v_new
        history.append(to_raw(v))
        prev = history[-2]
        change = np.linalg.norm(history[-1] - prev) / max(np.linalg.norm(prev), np.finfo(float).tiny)
        if change <= tol:
            converged = True
            break
    if len(wres) > 1 and np.any(np.diff(wres) > 1e-8 * max(wres)):
        warnings.warn("weighted residual increased during GLS iterations", RuntimeWarning)
    # parameter covariance (A^T C^-1 A)^-1 in raw units
    try:
        cov_s = np.linalg.pinv(Aw.T @ Aw)
    except np.linalg.LinAlgError:
        cov_s = np.full((A.shape[1], A.shape[1]), np.nan)
    u = (unscale.T).ravel()[slots]
    cov = cov_s * np.outer(u, u)
    cov = 0.5 * (cov + cov.T)
    return GlsResult(to_raw(v), w_ols, cov, it, converged, history, wres, sigma)


def ols_estimate(system: WeakSystem, mask=None) -> np.ndarray:
    """Plain least squares on the weak system, raw units, shape (J, responses)."""
    J, R = system.G.shape[1], system.b.shape[1]
    mask = np.ones((J, R), bool) if mask is None else np.asarray(mask, bool)
    W = np.zeros((J, R))
    for c in range(R):
        cols = np.flatnonzero(mask[:, c])
        v, *_ = np.linalg.lstsq(system.G[:, cols], system.b[:, c], rcond=None)
        W[cols, c] = v * system.b_scale[c] / system.col_scale[cols]
    return W


# ------------------------------------------------------------- output error


@dataclass
class OeResult:
    w: np.ndarray
    objective: float
    history: list
    nfev: int
    success: bool
    walltime: float = 0.0


def output_error_estimate(d, forward, w0, maxfev: int = 2000, xatol: float = 1e-8,
                          fatol: float = 1e-12) -> OeResult:
    """Nelder-Mead on ``||forward(w) - data||^2``.

    ``forward`` maps a parameter vector to predicted values shaped like
    ``d.values``; any exception or non-finite output scores ``+inf``.
    """
    w0 = np.asarray(w0, dtype=float).ravel()
    if not np.all(np.isfinite(w0)):
        raise ValueError("initial guess must be finite")
    target = d.values
    history = []
    best = [np.inf, w0.copy()]

    def objective(w):
        try:
            pred = forward(w)
            val = float(np.sum((pred - target) ** 2))
        except (NumericalError, ArithmeticError, ValueError, FloatingPointError):
            val = np.inf
        if not np.isfinite(val):
            val = np.inf
        history.append(val)
        if val < best[0]:
            best[0], best[1] = val, np.array(w, dtype=float)
        return val

    t0 = time.perf_counter()
    with np.errstate(all="ignore"):
        res = minimize(objective, w0, method="Nelder-Mead",
                       options={"maxfev": maxfev, "xatol": xatol, "fatol": fatol})
    if not np.isfinite(best[0]):
        raise NumericalError("every output-error evaluation failed")
    return OeResult(best[1], best[0], history, int(res.nfev), bool(res.success),
                    time.perf_counter() - t0)
