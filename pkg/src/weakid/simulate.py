"""Ground-truth generators: ODE integration, Kuramoto-Sivashinsky, particle SDEs."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft
from scipy.integrate import solve_ivp

from weakid import kernels
from weakid.errors import NumericalError
from weakid.grid import Axis, Dataset, Grid
from weakid.library import FeatureLibrary


class OdeModel:
    """``du/dt = W^T f(u)`` for a library ``f`` without spatial derivatives."""

    def __init__(self, library: FeatureLibrary, coefficients):
        if library.spatial_dims:
            raise ValueError("ODE models need a library without spatial axes")
        W = np.asarray(coefficients, dtype=float)
        if W.ndim == 1:
            W = W[:, None]
        if W.shape != (len(library), library.components):
            raise ValueError(f"coefficients must have shape ({len(library)}, {library.components})")
        self.library = library
        self.W = W
        self.dim = library.components
        self._exps = np.array([t.powers for t in library.terms], dtype=float)
        self._trig = [(j, t.trig) for j, t in enumerate(library.terms) if t.trig is not None]

    def features(self, u: np.ndarray) -> np.ndarray:
        f = np.prod(u[None, :] ** self._exps, axis=1)
        for j, (func, freq, comp) in self._trig:
            f[j] *= math.sin(freq * u[comp]) if func == "sin" else math.cos(freq * u[comp])
        return f

    def rhs(self, t, u):
        return self.features(u) @ self.W


def integrate_ode(model: OdeModel, u0, t_axis: Axis, tol: float = 1e-10) -> Dataset:
    """Adaptive RK4(5) integration sampled on a uniform time axis."""
    if tol <= 0:
        raise ValueError("tol must be > 0")
    u0 = np.asarray(u0, dtype=float).reshape(-1)
    if u0.size != model.dim:
        raise ValueError(f"initial state needs {model.dim} entries")
    t = t_axis.coords
    sol = solve_ivp(model.rhs, (t[0], t[-1]), u0, method="RK45", t_eval=t, rtol=tol, atol=tol)
    if sol.status != 0 or not np.all(np.isfinite(sol.y)):
        raise NumericalError(f"ODE integration failed: {sol.message}")
    return Dataset(Grid((t_axis,)), sol.y.T)


# ----------------------------------------------------------------------- KS

KS_COEFFS = (-0.5, -1.0, -1.0)


def ks_initial_condition(n: int, length: float, seed: int = 0, modes: int = 8, amplitude: float = 1.0):
    """Random band-limited periodic data with RMS ``amplitude``."""
    rng = np.random.default_rng(seed)
    x = np.arange(n) * length / n
    u = np.zeros(n)
    for k in range(1, modes + 1):
        u += rng.standard_normal() * np.cos(2 * np.pi * k * x / length + rng.uniform(0, 2 * np.pi))
    return amplitude * u / np.sqrt(np.mean(u * u))


def _etdrk4_coefficients(lin, h, contour_points=32):
    # contour-integral evaluation avoids cancellation for small |h*lin|
    r = np.exp(1j * np.pi * (np.arange(1, contour_points + 1) - 0.5) / contour_points)
    LR = h * lin[:, None] + r[None, :]
    Q = h * np.real(np.mean((np.exp(LR / 2) - 1) / LR, axis=1))
    f1 = h * np.real(np.mean((-4 - LR + np.exp(LR) * (4 - 3 * LR + LR**2)) / LR**3, axis=1))
    f2 = h * np.real(np.mean((2 + LR + np.exp(LR) * (-2 + LR)) / LR**3, axis=1))
    f3 = h * np.real(np.mean((-4 - 3 * LR - LR**2 + np.exp(LR) * (4 - LR)) / LR**3, axis=1))
    return np.exp(h * lin), np.exp(h * lin / 2), Q, f1, f2, f3


def integrate_ks(u0, length: float, t_axis: Axis, coeffs=KS_COEFFS, dt: float | None = None) -> Dataset:
    """Solve ``u_t = a (u^2)_x + b u_xx + c u_xxxx`` on a periodic domain.

    Fourier pseudospectral in space with 2/3 dealiasing, ETDRK4 in time. The
    returned grid's space axis excludes the periodic endpoint ``x = length``.
    """
    u0 = np.asarray(u0, dtype=float)
    n = u0.size
    if n < 4 or n & (n - 1):
        raise ValueError(f"KS grid size must be a power of two, got {n}")
    a_nl, a2, a4 = (float(c) for c in coeffs)
    save_dt = t_axis.spacing
    if dt is None:
        dt = 0.05
    substeps = max(1, math.ceil(save_dt / dt - 1e-9))
    h = save_dt / substeps

    k = 2 * np.pi / length * np.fft.rfftfreq(n, d=1.0 / n)
    lin = -a2 * k**2 + a4 * k**4
    E, E2, Q, f1, f2, f3 = _etdrk4_coefficients(lin, h)
    g = a_nl * 1j * k
    g[np.abs(np.fft.rfftfreq(n, d=1.0 / n)) > n / 3] = 0.0

    def nonlin(v):
        u = sfft.irfft(v, n)
        return g * sfft.rfft(u * u)

    v = sfft.rfft(u0)
    out = np.empty((n, t_axis.n))
    out[:, 0] = u0
    for s in range(1, t_axis.n):
        # blow-up is caught below, so silence overflow chatter on the way there
        with np.errstate(over="ignore", invalid="ignore"):
            for _ in range(substeps):
                Nv = nonlin(v)
                a = E2 * v + Q * Nv
                Na = nonlin(a)
                b = E2 * v + Q * Na
                Nb = nonlin(b)
                c = E2 * a + Q * (2 * Nb - Nv)
                Nc = nonlin(c)
                v = E * v + Nv * f1 + 2 * (Na + Nb) * f2 + Nc * f3
            u = sfft.irfft(v, n)
        if not np.all(np.isfinite(u)):
            raise NumericalError(f"KS solution blew up before t={t_axis.coords[s]:.4g}")
        out[:, s] = u
    grid = Grid((Axis(n, 0.0, length * (n - 1) / n), t_axis))
    return Dataset(grid, out)


# ---------------------------------------------------------------- particles

DRIFTS = {"ou": kernels.DRIFT_OU, "oscillatory": kernels.DRIFT_OSCILLATORY}


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    """First-order particles ``dX = mu(X) dt + sqrt(2 D(X)) dW``.

    ``ou``: mu = -theta x, D constant. ``oscillatory``: mu = -theta x,
    D(x) = D0 (1 + amp sin(2 pi x / eps)).
    """

    positions: np.ndarray
    kind: str = "ou"
    theta: float = 1.0
    D: float = 0.5
    amp: float = 0.0
    eps: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in DRIFTS:
            raise ValueError(f"unknown particle model {self.kind!r}")
        if np.asarray(self.positions).size < 1:
            raise ValueError("need at least one particle")
        if self.D < 0 or abs(self.amp) > 1:
            raise ValueError("diffusion must be nonnegative everywhere")

    @property
    def N(self) -> int:
        return int(np.asarray(self.positions).size)

    def params(self) -> np.ndarray:
        return np.array([self.theta, self.D, self.amp, self.eps])


CHUNK = 16384


def simulate_ips(ens: ParticleEnsemble, t_axis: Axis, dt_internal: float) -> np.ndarray:
    """Euler-Maruyama paths recorded at ``t_axis`` times, shape (n_t, N).

    Each chunk of ``CHUNK`` particles owns a generator spawned from the
    ensemble seed, so results do not depend on how chunks are scheduled.
    """
    save_dt = t_axis.spacing
    if dt_internal <= 0 or dt_internal > save_dt * (1 + 1e-12):
        raise ValueError("need 0 < dt_internal <= save spacing")
    steps = max(1, round(save_dt / dt_internal))
    dt = save_dt / steps
    x = np.array(ens.positions, dtype=np.float64).ravel()
    N = x.size
    kind = DRIFTS[ens.kind]
    params = ens.params()
    starts = range(0, N, CHUNK)
    gens = [np.random.Generator(np.random.PCG64(s))
            for s in np.random.SeedSequence(ens.seed).spawn(len(starts))]
    out = np.empty((t_axis.n, N))
    out[0] = x
    for s in range(1, t_axis.n):
        for g, lo in zip(gens, starts):
            hi = min(lo + CHUNK, N)
            normals = g.standard_normal((steps, hi - lo))
            part = np.ascontiguousarray(x[lo:hi])
            kernels.em_advance(part, normals, dt, kind, params)
            x[lo:hi] = part
        if not np.all(np.isfinite(x)):
            raise NumericalError("particle positions became non-finite")
        out[s] = x
    return out


def histogram_density(traj: np.ndarray, x_axis: Axis, t_axis: Axis, max_outside: float = 0.01) -> Dataset:
    """Per-slice histograms normalized to unit mass; bins are centred on ``x_axis``."""
    traj = np.asarray(traj, dtype=float)
    if traj.shape[0] != t_axis.n:
        raise ValueError("trajectory rows must match the time axis")
    dx = x_axis.spacing
    lo = x_axis.lo - 0.5 * dx
    N = traj.shape[1]
    dens = np.empty((x_axis.n, t_axis.n))
    worst = 0.0
    for s in range(t_axis.n):
        counts, outside = kernels.bin_counts(np.ascontiguousarray(traj[s]), lo, dx, x_axis.n)
        worst = max(worst, outside / N)
        dens[:, s] = counts / (N * dx)
    if worst > max_outside:
        raise ValueError(f"{100 * worst:.2f}% of particles fell outside the histogram range")
    return Dataset(Grid((x_axis, t_axis)), dens)
