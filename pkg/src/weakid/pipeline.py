"""End-to-end discovery: support selection, weak assembly, sparse regression."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from weakid.library import FeatureLibrary
from weakid.sparse import SparseResult, select_lambda
from weakid.testfn import SPECTRAL_THRESHOLD, default_family, select_support
from weakid.weak import WeakSystem, assemble, build_stencils, query_plan


@dataclass
class DiscoverOptions:
    radii: tuple | None = None
    stride: object = None
    query_factor: float = 80.0
    lambdas: object = None
    gamma: float = 0.2
    spectral_threshold: float = SPECTRAL_THRESHOLD
    families: list | None = None  # one test-function family per axis


@dataclass
class Discovery:
    system: WeakSystem
    results: list[SparseResult]
    radii: tuple
    coefficients: np.ndarray  # (J, responses), raw units
    timings: dict = field(default_factory=dict)

    @property
    def library(self) -> FeatureLibrary:
        return self.system.library

    def supports(self):
        return [tuple(np.flatnonzero(self.coefficients[:, c])) for c in range(self.coefficients.shape[1])]


def axis_orders(lib: FeatureLibrary, ndim: int):
    return [lib.max_order(ax) for ax in range(ndim - 1)] + [1]


def default_families(lib: FeatureLibrary, ndim: int):
    """One poly-bump of degree (highest derivative order + 3) shared by all axes."""
    fam = default_family(max(axis_orders(lib, ndim)))
    return [fam] * ndim


def choose_radii(d, lib: FeatureLibrary, threshold: float = SPECTRAL_THRESHOLD, families=None):
    orders = axis_orders(lib, d.grid.ndim)
    families = families or default_families(lib, d.grid.ndim)
    return tuple(select_support(d, ax, K=orders[ax], family=families[ax], threshold=threshold)
                 for ax in range(d.grid.ndim))


def weak_system_for(d, lib: FeatureLibrary, radii=None, stride=None, query_factor=80.0,
                    threshold=SPECTRAL_THRESHOLD, families=None):
    families = families or default_families(lib, d.grid.ndim)
    if radii is None:
        radii = choose_radii(d, lib, threshold, families)
    orders = axis_orders(lib, d.grid.ndim)
    stencils = build_stencils(d.grid, radii, orders, families)
    if stride is not None:
        plan = query_plan(d.grid, radii, stride=stride)
    else:
        avail = int(np.prod([n - 2 * m for n, m in zip(d.grid.shape, radii)]))
        plan = query_plan(d.grid, radii, count=min(avail, int(np.ceil(query_factor * len(lib)))))
    return assemble(d, lib, stencils, plan), tuple(int(r) for r in radii), stencils


def discover(d, lib: FeatureLibrary, opts: DiscoverOptions | None = None) -> Discovery:
    opts = opts or DiscoverOptions()
    t0 = time.perf_counter()
    families = opts.families
    radii = opts.radii
    if radii is None:
        radii = choose_radii(d, lib, opts.spectral_threshold, families)
    t1 = time.perf_counter()
    system, radii, _ = weak_system_for(d, lib, radii, opts.stride, opts.query_factor,
                                       families=families)
    t2 = time.perf_counter()
    G = system.G
    results = []
    W = np.zeros((len(lib), system.b_raw.shape[1]))
    for c in range(system.b_raw.shape[1]):
        res = select_lambda(G, system.b[:, c], opts.lambdas, opts.gamma)
        results.append(res)
        W[:, c] = res.w * system.b_scale[c] / system.col_scale
    t3 = time.perf_counter()
    timings = {"support": t1 - t0, "assembly": t2 - t1, "regression": t3 - t2}
    return Discovery(system, results, radii, W, timings)
