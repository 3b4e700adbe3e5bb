"""Candidate-term libraries.

A term is split into a pointwise nonlinearity of the data and a derivative
multi-index. The derivative is never applied to data; the weak assembly puts
it on the test function instead.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from weakid.errors import NumericalError


@dataclass(frozen=True)
class Term:
    powers: tuple[int, ...]
    dmulti: tuple[int, ...] = ()
    trig: tuple[str, int, int] | None = None  # (func, freq, component)
    coord_powers: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "powers", tuple(int(p) for p in self.powers))
        object.__setattr__(self, "dmulti", tuple(int(k) for k in self.dmulti))
        cp = tuple(int(a) for a in self.coord_powers) or (0,) * len(self.dmulti)
        object.__setattr__(self, "coord_powers", cp)
        if any(p < 0 for p in self.powers) or any(k < 0 for k in self.dmulti):
            raise ValueError("powers and derivative orders must be >= 0")
        if len(self.coord_powers) != len(self.dmulti):
            raise ValueError("coord_powers needs one entry per spatial axis")
        if self.trig is not None:
            func, freq, comp = self.trig
            if func not in ("sin", "cos"):
                raise ValueError(f"unknown trig function {func!r}")
            object.__setattr__(self, "trig", (func, int(freq), int(comp)))
        if self.is_constant and any(self.dmulti):
            raise ValueError("derivative of a constant is identically zero")

    @property
    def is_constant(self) -> bool:
        return not any(self.powers) and self.trig is None and not any(self.coord_powers)

    @property
    def order(self) -> int:
        return sum(self.dmulti)

    def nonlinearity_label(self, names=None) -> str:
        ncomp = len(self.powers)
        if names is None:
            names = ["u"] if ncomp == 1 else [f"u{i}" for i in range(ncomp)]
        xnames = ["x"] if len(self.dmulti) == 1 else [f"x{i}" for i in range(len(self.dmulti))]
        parts = [f"{xnames[i]}^{a}" for i, a in enumerate(self.coord_powers) if a]
        parts += [f"{names[i]}^{p}" for i, p in enumerate(self.powers) if p]
        if self.trig is not None:
            func, freq, comp = self.trig
            parts.append(f"{func}({freq}*{names[comp]})")
        return "*".join(parts) if parts else "1"

    def label(self, names=None) -> str:
        s = self.nonlinearity_label(names)
        xnames = ["x"] if len(self.dmulti) == 1 else [f"x{i}" for i in range(len(self.dmulti))]
        for i, k in reversed(list(enumerate(self.dmulti))):
            if k:
                s = f"d^{k}/d{xnames[i]}^{k}({s})"
        return s

    def evaluate(self, u: np.ndarray, coords=()) -> np.ndarray:
        """Pointwise value on data ``u`` of shape (..., components)."""
        out = np.ones(u.shape[:-1])
        for i, p in enumerate(self.powers):
            if p:
                out = out * u[..., i] ** p
        if self.trig is not None:
            func, freq, comp = self.trig
            out = out * (np.sin if func == "sin" else np.cos)(freq * u[..., comp])
        for i, a in enumerate(self.coord_powers):
            if a:
                out = out * coords[i] ** a
        return out

    def jacobian(self, u: np.ndarray, coords=()) -> np.ndarray:
        """Partial derivatives w.r.t. each component, shape (components, ...)."""
        ncomp = u.shape[-1]
        jac = np.zeros((ncomp,) + u.shape[:-1])
        base_coord = np.ones(u.shape[:-1])
        for i, a in enumerate(self.coord_powers):
            if a:
                base_coord = base_coord * coords[i] ** a
        trig_val = 1.0
        if self.trig is not None:
            func, freq, tc = self.trig
            trig_val = (np.sin if func == "sin" else np.cos)(freq * u[..., tc])
        for c in range(ncomp):
            # d/du_c of the monomial part
            if self.powers[c]:
                part = np.full(u.shape[:-1], float(self.powers[c]))
                for i, p in enumerate(self.powers):
                    e = p - 1 if i == c else p
                    if e:
                        part = part * u[..., i] ** e
                jac[c] += part * trig_val
            if self.trig is not None and self.trig[2] == c:
                func, freq, _ = self.trig
                dtrig = freq * (np.cos(freq * u[..., c]) if func == "sin" else -np.sin(freq * u[..., c]))
                mono = np.ones(u.shape[:-1])
                for i, p in enumerate(self.powers):
                    if p:
                        mono = mono * u[..., i] ** p
                jac[c] += mono * dtrig
        return jac * base_coord

    def to_config(self) -> dict:
        out = {"powers": list(self.powers), "dmulti": list(self.dmulti)}
        if self.trig is not None:
            out["trig"] = list(self.trig)
        if any(self.coord_powers):
            out["coord_powers"] = list(self.coord_powers)
        return out

    @classmethod
    def from_config(cls, cfg: dict) -> "Term":
        trig = cfg.get("trig")
        return cls(
            tuple(cfg["powers"]),
            tuple(cfg.get("dmulti", ())),
            tuple(trig) if trig is not None else None,
            tuple(cfg.get("coord_powers", ())),
        )


@dataclass(frozen=True)
class FeatureLibrary:
    terms: tuple[Term, ...]
    lhs: str = "d/dt"
    components: int = field(init=False)
    spatial_dims: int = field(init=False)

    def __post_init__(self):
        terms = tuple(self.terms)
        if not terms:
            raise ValueError("library must contain at least one term")
        if len(set(terms)) != len(terms):
            raise ValueError("library contains duplicate terms")
        ncomp = {len(t.powers) for t in terms}
        nsp = {len(t.dmulti) for t in terms}
        if len(ncomp) != 1 or len(nsp) != 1:
            raise ValueError("all terms must share component count and spatial dimension")
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "components", ncomp.pop())
        object.__setattr__(self, "spatial_dims", nsp.pop())

    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    def labels(self, names=None) -> list[str]:
        return [t.label(names) for t in self.terms]

    def index(self, term: Term) -> int:
        return self.terms.index(term)

    def subset(self, indices) -> "FeatureLibrary":
        return FeatureLibrary(tuple(self.terms[i] for i in indices), self.lhs)

    def max_order(self, axis: int) -> int:
        return max((t.dmulti[axis] for t in self.terms), default=0)

    def to_config(self) -> dict:
        return {"terms": [t.to_config() for t in self.terms]}


def _monomials(components: int, degree: int):
    for d in range(degree + 1):
        for combo in itertools.combinations_with_replacement(range(components), d):
            powers = [0] * components
            for c in combo:
                powers[c] += 1
            yield tuple(powers)


def pde_poly_library(K: int, P: int, components: int = 1, spatial_dims: int = 1) -> FeatureLibrary:
    """All distinct d^k/dx^k(u^p), 0 <= k <= K, 0 <= p <= P (total degree for systems)."""
    if K < 0 or P < 0:
        raise ValueError("K and P must be >= 0")
    terms = []
    for powers in _monomials(components, P):
        for dm in _derivative_indices(K, spatial_dims):
            if not any(powers) and any(dm):
                continue
            terms.append(Term(powers, dm))
    return FeatureLibrary(tuple(terms))


def _derivative_indices(K: int, spatial_dims: int):
    for total in range(K + 1):
        for combo in itertools.combinations_with_replacement(range(spatial_dims), total):
            dm = [0] * spatial_dims
            for a in combo:
                dm[a] += 1
            yield tuple(dm)


def ode_poly_trig_library(components: int, max_degree: int, trig_freqs=()) -> FeatureLibrary:
    if components < 1 or max_degree < 0:
        raise ValueError("components must be >= 1 and max_degree >= 0")
    terms = [Term(p) for p in _monomials(components, max_degree)]
    zero = (0,) * components
    for f in trig_freqs:
        for c in range(components):
            terms.append(Term(zero, (), ("sin", int(f), c)))
            terms.append(Term(zero, (), ("cos", int(f), c)))
    return FeatureLibrary(tuple(terms))


def fokker_planck_library(K: int = 2, P: int = 1, coord_degree: int = 1) -> FeatureLibrary:
    """d^k/dx^k(x^a u^p) for 1-D densities, 0 <= k <= K, 0 <= a <= coord_degree, 1 <= p <= P."""
    terms = [Term((0,), (0,))]
    for p in range(1, P + 1):
        for a in range(coord_degree + 1):
            for k in range(K + 1):
                terms.append(Term((p,), (k,), None, (a,)))
    return FeatureLibrary(tuple(terms))


def library_from_config(cfg) -> FeatureLibrary:
    if not isinstance(cfg, dict) or len(cfg) != 1:
        raise ValueError("library config must be a single-key object")
    (kind, body), = cfg.items()
    if kind == "pde_poly":
        return pde_poly_library(body["K"], body["P"], body.get("components", 1),
                                body.get("spatial_dims", 1))
    if kind == "ode_poly_trig":
        return ode_poly_trig_library(body["components"], body["max_degree"],
                                     body.get("trig_freqs", ()))
    if kind == "fokker_planck":
        return fokker_planck_library(body.get("K", 2), body.get("P", 1), body.get("coord_degree", 1))
    if kind == "terms":
        return FeatureLibrary(tuple(Term.from_config(t) for t in body))
    raise ValueError(f"unknown library kind {kind!r}")


def coordinate_arrays(grid, spatial_dims: int):
    """Broadcastable spatial coordinate arrays for a grid whose last axis is time."""
    out = []
    for i in range(spatial_dims):
        shape = [1] * grid.ndim
        shape[i] = grid.shape[i]
        out.append(grid.coords(i).reshape(shape))
    return tuple(out)


def evaluate_pointwise(lib: FeatureLibrary, d) -> np.ndarray:
    """Nonlinearity values for every term, shape (J, *grid.shape)."""
    if d.components != lib.components:
        raise ValueError(f"library expects {lib.components} components, data has {d.components}")
    coords = coordinate_arrays(d.grid, lib.spatial_dims)
    out = np.empty((len(lib),) + d.grid.shape)
    with np.errstate(over="ignore", invalid="ignore"):
        for j, t in enumerate(lib.terms):
            out[j] = t.evaluate(d.values, coords)
            if not np.all(np.isfinite(out[j])):
                raise NumericalError(f"term {j} ({t.label()}) overflowed to non-finite values")
    return out
