"""Compactly supported test functions, their stencils, and support-width selection.

Every family is defined on its own natural interval ``support`` and provides
analytic derivatives there. :func:`discretize` rescales that interval onto
``[-m*h, m*h]`` for a grid of spacing ``h``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial

# Gaussian tail below 1e-12 of the peak
TAKAYA_WINDOW = 7.5
SPECTRAL_THRESHOLD = 0.1
CORNER_MIN_GAP = float(np.log(2.0))


class TestFunctionFamily:
    __test__ = False

    kind: str = ""
    compact: bool = True
    max_derivative: int = 0
    support: tuple[float, float] = (-1.0, 1.0)

    def derivative(self, s, k: int = 0) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if k < 0:
            raise ValueError("derivative order must be >= 0")
        lo, hi = self.support
        out = np.zeros_like(s)
        inside = (s >= lo) & (s <= hi)
        if np.any(inside):
            out[inside] = self._eval(s[inside], k)
        return out

    def __call__(self, s):
        return self.derivative(s, 0)

    def _eval(self, s, k):  # pragma: no cover - abstract
        raise NotImplementedError

    def params(self) -> dict:
        return {}

    def to_config(self) -> dict:
        return {"kind": self.kind, **self.params()}


def _check_order(name, order, k_max):
    if k_max is not None and order < k_max + 1:
        raise ValueError(f"{name} must be >= K_max + 1 = {k_max + 1}, got {order}")


class PolyBump(TestFunctionFamily):
    kind = "poly-bump"

    def __init__(self, q: int, a: float = 1.0):
        if q < 1 or a <= 0:
            raise ValueError("poly-bump needs q >= 1 and a > 0")
        self.q = int(q)
        self.a = float(a)
        self.support = (-self.a, self.a)
        self.max_derivative = self.q - 1
        self._poly = Polynomial([1.0, 0.0, -1.0]) ** self.q

    def _eval(self, s, k):
        return self._poly.deriv(k)(s / self.a) / self.a**k if k else self._poly(s / self.a)

    def params(self):
        return {"q": self.q, "a": self.a}


class CInfBump(TestFunctionFamily):
    """exp(-1 / (1 - (x/a)^2)) on |x| < a: smooth with every derivative vanishing at the edge.

    Derivatives are ``P_k(y) / (1 - y^2)^(2k) * phi`` with ``y = x/a`` and
    ``P_(k+1) = (P_k' (1 - y^2) + 4k y P_k)(1 - y^2) - 2y P_k``.
    """

    kind = "cinf-bump"

    def __init__(self, a: float = 1.0, max_derivative: int = 16):
        if a <= 0:
            raise ValueError("cinf-bump needs a > 0")
        self.a = float(a)
        self.support = (-self.a, self.a)
        self.max_derivative = int(max_derivative)
        one_m = Polynomial([1.0, 0.0, -1.0])
        y = Polynomial([0.0, 1.0])
        polys = [Polynomial([1.0])]
        for k in range(self.max_derivative):
            p = polys[-1]
            polys.append((p.deriv() * one_m + 4 * k * y * p) * one_m - 2 * y * p)
        self._polys = polys

    def _eval(self, s, k):
        if k > self.max_derivative:
            raise ValueError(f"cinf-bump built for derivatives up to {self.max_derivative}")
        y = s / self.a
        out = np.zeros_like(y)
        inner = np.abs(y) < 1
        yi = y[inner]
        gap = 1.0 - yi * yi
        out[inner] = self._polys[k](yi) / gap ** (2 * k) * np.exp(-1.0 / gap) / self.a**k
        return out

    def params(self):
        return {"a": self.a}


class ShinbrotSin(TestFunctionFamily):
    kind = "shinbrot-sin"

    def __init__(self, n: int, omega: float = 1.0):
        if n < 1 or omega <= 0:
            raise ValueError("shinbrot-sin needs n >= 1 and omega > 0")
        self.n = int(n)
        self.omega = float(omega)
        self.support = (0.0, math.pi / self.omega)
        self.max_derivative = self.n - 1
        # sin^n(theta) = (2i)^-n sum_j C(n,j) (-1)^j exp(i (n-2j) theta)
        j = np.arange(self.n + 1)
        self._freq = (self.n - 2 * j).astype(float)
        self._coef = np.array([math.comb(self.n, int(i)) * (-1) ** int(i) for i in j], dtype=complex)
        self._coef /= (2j) ** self.n

    def _eval(self, s, k):
        theta = self.omega * s
        lam = 1j * self._freq * self.omega
        terms = self._coef * lam**k
        out = np.real(np.exp(1j * np.outer(theta, self._freq)) @ terms)
        if k < self.n:
            # sin^n has a zero of order n at both ends; avoid round-off residue there
            out[(s == self.support[0]) | (s == self.support[1])] = 0.0
        return out

    def params(self):
        return {"n": self.n, "omega": self.omega}


def hermite_prob(n: int, r) -> np.ndarray:
    """Probabilists' Hermite polynomial He_n by three-term recurrence."""
    r = np.asarray(r, dtype=float)
    h0 = np.ones_like(r)
    if n == 0:
        return h0
    h1 = r.copy()
    for j in range(1, n):
        h0, h1 = h1, r * h1 - j * h0
    return h1


class TakayaHermite(TestFunctionFamily):
    """The n-th derivative of the unit Gaussian, truncated at |r| = R.

    Derivative order k of this function is the (n+k)-th Gaussian derivative,
    ``(-1)^(n+k) He_(n+k)(r) exp(-r^2/2) / sqrt(2 pi)``.
    """

    kind = "takaya-hermite"
    compact = False

    def __init__(self, n: int, window: float = TAKAYA_WINDOW):
        if n < 0:
            raise ValueError("takaya-hermite needs n >= 0")
        self.n = int(n)
        self.window = float(window)
        self.support = (-self.window, self.window)
        self.max_derivative = 16

    def _eval(self, s, k):
        order = self.n + k
        g = np.exp(-0.5 * s * s) / math.sqrt(2 * math.pi)
        return (-1) ** order * hermite_prob(order, s) * g

    def params(self):
        return {"n": self.n, "window": self.window}


def _falling(a: float, j: int) -> float:
    out = 1.0
    for i in range(j):
        out *= a - i
    return out


class ValeurAsym(TestFunctionFamily):
    """t^alpha (1-t)^beta on [0, 1]."""

    kind = "valeur-asym"

    def __init__(self, alpha: float, beta: float):
        if alpha <= 0 or beta <= 0:
            raise ValueError("valeur-asym needs alpha, beta > 0")
        self.alpha = float(alpha)
        self.beta = float(beta)
        self.support = (0.0, 1.0)
        self.max_derivative = math.ceil(min(self.alpha, self.beta)) - 1

    def _eval(self, s, k):
        out = np.zeros_like(s)
        one_minus = 1.0 - s
        for j in range(k + 1):
            ca = _falling(self.alpha, j)
            cb = _falling(self.beta, k - j) * (-1) ** (k - j)
            if ca == 0.0 or cb == 0.0:
                continue
            with np.errstate(divide="ignore", invalid="ignore"):
                left = np.where(s > 0, s ** (self.alpha - j), 0.0 if self.alpha > j else 1.0)
                right = np.where(one_minus > 0, one_minus ** (self.beta - k + j),
                                 0.0 if self.beta > k - j else 1.0)
            out += math.comb(k, j) * ca * cb * left * right
        return out

    def params(self):
        return {"alpha": self.alpha, "beta": self.beta}


def cas(t):
    return np.cos(t) + np.sin(t)


def _cas_deriv(t, k):
    # cas'' = -cas, so derivatives cycle with period 4
    r = k % 4
    if r == 0:
        return np.cos(t) + np.sin(t)
    if r == 1:
        return np.cos(t) - np.sin(t)
    if r == 2:
        return -np.cos(t) - np.sin(t)
    return -np.cos(t) + np.sin(t)


class PatraCas(TestFunctionFamily):
    kind = "patra-cas"

    def __init__(self, n: int, shift: int, T_w: float = 1.0):
        if n < 1 or shift < 1 or T_w <= 0:
            raise ValueError("patra-cas needs n >= 1, shift >= 1, T_w > 0")
        self.n = int(n)
        self.shift = int(shift)
        self.T_w = float(T_w)
        self.support = (0.0, self.T_w)
        self.max_derivative = self.n - 1
        j = np.arange(self.n + 1)
        self._coef = np.array([(-1) ** int(i) * math.comb(self.n, int(i)) for i in j], dtype=float)
        self._rate = 2 * (self.n + self.shift - j) * math.pi / self.T_w

    def _eval(self, s, k):
        out = np.zeros_like(s)
        for c, a in zip(self._coef, self._rate):
            out += c * a**k * _cas_deriv(a * s, k)
        return out / self.T_w

    def params(self):
        return {"n": self.n, "shift": self.shift, "T_w": self.T_w}


def poly_bump(q: int, a: float = 1.0, k_max: int | None = None) -> PolyBump:
    _check_order("q", q, k_max)
    return PolyBump(q, a)


def cinf_bump(a: float = 1.0) -> CInfBump:
    return CInfBump(a)


def shinbrot_sin(n: int, omega: float = 1.0, k_max: int | None = None) -> ShinbrotSin:
    _check_order("n", n, k_max)
    return ShinbrotSin(n, omega)


def takaya_hermite(n: int, window: float = TAKAYA_WINDOW) -> TakayaHermite:
    return TakayaHermite(n, window)


def valeur_asym(alpha: float, beta: float, k_max: int | None = None) -> ValeurAsym:
    if k_max is not None and min(alpha, beta) <= k_max:
        raise ValueError(f"valeur-asym exponents must exceed K_max={k_max}")
    return ValeurAsym(alpha, beta)


def patra_cas(n: int, shift: int, T_w: float = 1.0) -> PatraCas:
    return PatraCas(n, shift, T_w)


_BUILDERS = {
    "poly-bump": lambda p: PolyBump(p["q"], p.get("a", 1.0)),
    "cinf-bump": lambda p: CInfBump(p.get("a", 1.0)),
    "shinbrot-sin": lambda p: ShinbrotSin(p["n"], p.get("omega", 1.0)),
    "takaya-hermite": lambda p: TakayaHermite(p["n"], p.get("window", TAKAYA_WINDOW)),
    "valeur-asym": lambda p: ValeurAsym(p["alpha"], p["beta"]),
    "patra-cas": lambda p: PatraCas(p["n"], p["shift"], p.get("T_w", 1.0)),
}


def family_from_config(cfg: dict) -> TestFunctionFamily:
    cfg = dict(cfg)
    kind = cfg.pop("kind")
    if kind not in _BUILDERS:
        raise ValueError(f"unknown test function kind {kind!r}")
    return _BUILDERS[kind](cfg)


def default_family(k_axis: int) -> PolyBump:
    return PolyBump(k_axis + 3)


@dataclass(frozen=True, eq=False)
class Stencil:
    """Per-order quadrature weights of a test function on a grid window.

    ``weights[k, m + i]`` multiplies the sample at offset ``i`` from the query
    point and already contains ``(-1)^k``, the trapezoid weight and the spacing.
    """

    radius: int
    spacing: float
    weights: np.ndarray

    @property
    def max_order(self) -> int:
        return self.weights.shape[0] - 1

    @property
    def offsets(self) -> np.ndarray:
        return np.arange(-self.radius, self.radius + 1)


def discretize(f: TestFunctionFamily, spacing: float, m: int, K: int) -> Stencil:
    if m < 1 or m < K:
        raise ValueError(f"stencil radius m={m} too small for derivative order {K}")
    if K > f.max_derivative:
        raise ValueError(f"{f.kind} supplies derivatives up to {f.max_derivative}, need {K}")
    lo, hi = f.support
    # endpoints land exactly on the support boundary
    s = lo + (np.arange(2 * m + 1) / (2 * m)) * (hi - lo)
    s[0], s[-1] = lo, hi
    c = (hi - lo) / (2 * m * spacing)
    trap = np.full(2 * m + 1, spacing)
    trap[0] = trap[-1] = 0.5 * spacing
    w = np.empty((K + 1, 2 * m + 1))
    for k in range(K + 1):
        w[k] = (-1) ** k * f.derivative(s, k) * c**k * trap
    w.setflags(write=False)
    return Stencil(m, float(spacing), w)


def averaged_spectrum(values: np.ndarray, axis: int) -> np.ndarray:
    """|rfft| at wavenumbers 0..n//2 along ``axis``, averaged over all other axes."""
    v = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
    v = v.reshape(v.shape[0], -1)
    return np.abs(np.fft.rfft(v, axis=0)).mean(axis=1)


def _two_piece_fit(y: np.ndarray):
    """Best continuous two-piece linear fit; returns (split, slope_left, slope_right)."""
    k = np.arange(y.size, dtype=float)
    best = (np.inf, 1, 0.0, 0.0)
    for c in range(1, y.size - 1):
        A = np.column_stack([np.ones_like(k), np.minimum(k - c, 0.0), np.maximum(k - c, 0.0)])
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        sse = float(np.sum((A @ coef - y) ** 2))
        if sse < best[0]:
            best = (sse, c, coef[1], coef[2])
    return best[1], best[2], best[3]


def spectral_corner(values: np.ndarray, axis: int, min_gap: float = CORNER_MIN_GAP) -> int | None:
    """Wavenumber separating the signal band from the noise floor.

    Fits a continuous two-piece line to the cumulative spectrum magnitude
    (wavenumbers >= 1). Returns None for data with no spectral content. If the
    mean magnitude left of the split is not at least ``exp(min_gap)`` times the
    floor on the right, the data is treated as pure noise and 1 is returned.
    """
    a = averaged_spectrum(values, axis)[1:]
    if a.size < 5 or not np.any(a > 0):
        return None
    y = np.concatenate([[0.0], np.cumsum(a / a.max())])
    split, left, right = _two_piece_fit(y)
    if left <= 0 or (right > 0 and np.log(left / right) < min_gap):
        return 1
    # first `split` wavenumbers carry the signal; the corner is the next one
    return split + 1


def select_support(
    d,
    axis: int,
    K: int = 0,
    family: TestFunctionFamily | None = None,
    threshold: float = SPECTRAL_THRESHOLD,
    min_gap: float = CORNER_MIN_GAP,
) -> int:
    """Smallest stencil radius whose spectrum is attenuated past the data's corner."""
    values = d.values if hasattr(d, "values") else np.asarray(d)
    n = values.shape[axis]
    if n < 16:
        raise ValueError(f"axis {axis} has {n} samples; need at least 16")
    lo_clamp = K + 1
    hi_clamp = max(lo_clamp, n // 2 - 1)
    kstar = spectral_corner(values, axis, min_gap)
    if kstar is None:
        warnings.warn("data has no spectral content; using the smallest support", RuntimeWarning)
        return lo_clamp
    family = family if family is not None else default_family(K)
    for m in range(lo_clamp, hi_clamp + 1):
        w = discretize(family, 1.0, m, 0).weights[0]
        spec = np.abs(np.fft.rfft(w, n=n))
        if spec[kstar:].max() <= threshold * spec[0]:
            return m
    return hi_clamp
