"""Config-driven runs behind the command-line subcommands.

Every function here takes an already resolved config (see ``weakid.config``)
and returns plain data; file writing is left to the CLI.
"""

from __future__ import annotations

import warnings
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp

from weakid.errors import ConfigError, NumericalError
from weakid.grid import Axis, Dataset, NoiseSpec, add_noise
from weakid.library import FeatureLibrary, Term, library_from_config
from weakid.models import KS_TERMS, MODELS
from weakid.pipeline import DiscoverOptions, Discovery, discover, weak_system_for
from weakid.simulate import (OdeModel, ParticleEnsemble, histogram_density, integrate_ks,
                             integrate_ode, ks_initial_condition, simulate_ips)
from weakid.testfn import family_from_config
from weakid.wendy import ols_estimate, output_error_estimate, wendy_estimate

ODE_MODELS = ("logistic", "lorenz", "fitzhugh_nagumo")
PARTICLE_MODELS = ("ou", "oscillatory")
GEOMEAN_FLOOR = 1e-16


# ------------------------------------------------------------------ simulate


def reduced_model(name: str):
    """Generating library restricted to the true terms, with its coefficients."""
    spec = MODELS[name]()
    W = spec.true_matrix()
    idx = np.flatnonzero(np.any(W != 0, axis=1))
    return spec.library.subset(idx), W[idx]


def simulate_particles(cfg: dict):
    """Trajectories (n_t, N) plus the histogram axes for a particle config."""
    p = cfg["params"]
    init_seq, path_seq = np.random.SeedSequence(cfg["seed"]).spawn(2)
    x0 = np.random.default_rng(init_seq).normal(p["init_mean"], p["init_std"], int(p["N"]))
    try:
        ens = ParticleEnsemble(x0, cfg["model"], p["theta"], p["D"], p["amp"], p["eps"],
                               seed=int(path_seq.generate_state(1)[0]))
        t_axis = Axis(int(p["n_t"]), 0.0, float(p["t_end"]))
        x_axis = Axis(int(p["n_x"]), float(p["x_lo"]), float(p["x_hi"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return simulate_ips(ens, t_axis, p["dt_internal"]), x_axis, t_axis


def simulate_dataset(cfg: dict) -> Dataset:
    model, p = cfg["model"], cfg["params"]
    try:
        if model == "ks":
            u0 = ks_initial_condition(p["n"], p["length"], cfg["seed"], p["ic_modes"], p["ic_amplitude"])
            d = integrate_ks(u0, p["length"], Axis(int(p["n_t"]), 0.0, float(p["t_end"])), dt=p["dt"])
        elif model in ODE_MODELS:
            lib, W = reduced_model(model)
            if len(p["u0"]) != lib.components:
                raise ConfigError(f"'u0' needs {lib.components} entries for {model}")
            d = integrate_ode(OdeModel(lib, W), p["u0"], Axis(int(p["n_t"]), 0.0, float(p["t_end"])),
                              p["tol"])
        else:
            traj, x_axis, t_axis = simulate_particles(cfg)
            d = histogram_density(traj, x_axis, t_axis)
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"simulate {model}: {exc}") from None
    noise = cfg["noise"]
    if noise["level"] > 0:
        d = add_noise(d, NoiseSpec(noise["level"], noise["seed"]))
    return d


def data_for(cfg: dict) -> Dataset:
    """Dataset named by ``input`` or produced by an embedded ``simulate`` block."""
    if "input" in cfg:
        from weakid.io import read_dataset

        return read_dataset(cfg["input"])
    return simulate_dataset(cfg["simulate"])


# ------------------------------------------------------------------ discover


def _lambda_grid(spec):
    if spec is None:
        return None
    if isinstance(spec, dict):
        try:
            return np.logspace(np.log10(spec["lo"]), np.log10(spec["hi"]), int(spec["n"]))
        except KeyError as exc:
            raise ConfigError(f"lambdas grid needs key {exc}") from None
    grid = np.asarray(spec, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(grid <= 0):
        raise ConfigError("'lambdas' must be a nonempty list of positive thresholds")
    return grid


def _families(spec, ndim):
    if spec is None:
        return None
    specs = spec if isinstance(spec, list) else [spec] * ndim
    if len(specs) != ndim:
        raise ConfigError(f"'test_function' needs {ndim} entries, one per axis")
    try:
        return [family_from_config(s) for s in specs]
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"test_function: {exc}") from None


def build_library(spec) -> FeatureLibrary:
    try:
        lib = library_from_config(spec)
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"library: {exc}") from None
    if len(lib) == 0:
        raise ConfigError("library has no terms")
    return lib


def discovery_options(cfg: dict, ndim: int) -> DiscoverOptions:
    radii = cfg["radii"]
    if radii is not None:
        if len(radii) != ndim:
            raise ConfigError(f"'radii' needs {ndim} entries")
        radii = tuple(int(r) for r in radii)
    return DiscoverOptions(radii=radii, stride=cfg["stride"], query_factor=cfg["query_factor"],
                           lambdas=_lambda_grid(cfg["lambdas"]), gamma=cfg["gamma"],
                           spectral_threshold=cfg["spectral_threshold"],
                           families=_families(cfg["test_function"], ndim))


def run_discovery(d: Dataset, cfg: dict) -> Discovery:
    lib = build_library(cfg["library"])
    if lib.components != d.components:
        raise ConfigError(f"library expects {lib.components} components, data has {d.components}")
    if lib.spatial_dims != d.grid.ndim - 1:
        raise ConfigError(f"library has {lib.spatial_dims} spatial axes, data has {d.grid.ndim - 1}")
    try:
        return discover(d, lib, discovery_options(cfg, d.grid.ndim))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"discover: {exc}") from None


def model_report(disc: Discovery) -> dict:
    lib = disc.library
    labels = lib.labels()
    responses = []
    for c, res in enumerate(disc.results):
        w = disc.coefficients[:, c]
        responses.append({
            "response": f"d/dt(u{c})",
            "terms": [{"term": labels[j], "index": int(j), "coefficient": float(w[j])}
                      for j in np.flatnonzero(w)],
            "lambda_star": float(res.lambda_star),
            "residual": float(res.residual),
        })
    return {"library": labels, "radii": list(disc.radii), "queries": len(disc.system.queries),
            "responses": responses}


def loss_curve_rows(disc: Discovery):
    return [(c, lam, val) for c, res in enumerate(disc.results) for lam, val in res.loss_curve]


# ------------------------------------------------------------------ estimate


@dataclass
class Problem:
    name: str
    library: FeatureLibrary
    truth: np.ndarray  # (J, responses)

    @property
    def mask(self) -> np.ndarray:
        return self.truth != 0

    def labels(self):
        names = self.library.labels()
        return [f"u{c}:{names[j]}" for c, j in self._slots()]

    def _slots(self):
        return [(c, j) for c in range(self.truth.shape[1]) for j in np.flatnonzero(self.mask[:, c])]

    def vector(self, W) -> np.ndarray:
        return np.array([W[j, c] for c, j in self._slots()])

    def matrix(self, v) -> np.ndarray:
        W = np.zeros_like(self.truth)
        for (c, j), x in zip(self._slots(), v):
            W[j, c] = x
        return W


def problem(name: str) -> Problem:
    lib, W = reduced_model(name)
    return Problem(name, lib, W)


def forward_model(prob: Problem, d: Dataset, cfg: dict):
    """Maps an output-error parameter vector to a predicted dataset.

    Returns ``(forward, extra0)``. For KS the state is started from the
    observed first slice and the parameters are the coefficients alone. For
    ODEs the initial state is fitted too: the vector is the coefficients
    followed by ``u(0)``, and ``extra0`` (the observed first sample) seeds it.
    """
    t_axis = d.grid.axes[-1]
    n = prob.vector(prob.truth).size
    if prob.name == "ks":
        x_axis = d.grid.axes[0]
        length = x_axis.hi - x_axis.lo + x_axis.spacing
        u0 = d.values[:, 0, 0].copy()
        dt = cfg["simulate"]["params"]["dt"] if "simulate" in cfg else None
        order = [prob.library.index(t) for t in KS_TERMS]

        def forward(v):
            W = prob.matrix(v)
            return integrate_ks(u0, length, t_axis, coeffs=W[order, 0], dt=dt).values
        return forward, np.empty(0)

    def forward(v):
        model = OdeModel(prob.library, prob.matrix(v[:n]))
        return integrate_ode(model, v[n:], t_axis, 1e-8).values
    return forward, initial_state_guess(d)


def initial_state_guess(d: Dataset) -> np.ndarray:
    """Quadratic least-squares fit to the leading samples, evaluated at t0."""
    t = d.grid.axes[-1].coords
    k = min(t.size, max(5, t.size // 20))
    V = np.vander(t[:k] - t[0], 3)
    coef, *_ = np.linalg.lstsq(V, d.values[:k].reshape(k, -1), rcond=None)
    return coef[-1].copy()


def trial_seed(base: int, level_index: int, trial: int) -> int:
    return int(np.random.SeedSequence([int(base), level_index, trial]).generate_state(1, np.uint64)[0])


def _row(method, seed, level, walltime, prob, v):
    truth = prob.vector(prob.truth)
    v = np.asarray(v, dtype=float)
    rel = np.abs(v - truth) / np.abs(truth)
    row = {"method": method, "seed": seed, "noise_level": level, "walltime_s": walltime}
    row.update({f"err[{lab}]": float(e) for lab, e in zip(prob.labels(), rel)})
    row["rel_error"] = (float(np.linalg.norm(v - truth) / np.linalg.norm(truth))
                        if np.all(np.isfinite(v)) else float("inf"))
    row.update({f"param[{lab}]": float(x) for lab, x in zip(prob.labels(), v)})
    return row


def run_trial(prob: Problem, clean: Dataset, level: float, seed: int, methods, cfg: dict):
    """One noisy realization scored by each requested method."""
    d = add_noise(clean, NoiseSpec(level, seed)) if level > 0 else clean
    wcfg, ocfg = cfg["wendy"], cfg["oe"]
    radii = None if cfg["radii"] is None else tuple(int(r) for r in cfg["radii"])
    rows = []
    system = stencils = None
    if "wendy" in methods or "ols" in methods:
        t0 = time.perf_counter()
        system, _, stencils = weak_system_for(d, prob.library, radii, None, wcfg["query_factor"],
                                              cfg["spectral_threshold"])
        t_asm = time.perf_counter() - t0
    for method in methods:
        if method == "wendy":
            t0 = time.perf_counter()
            res = wendy_estimate(d, system, stencils, sigma=wcfg["sigma"], mask=prob.mask,
                                 tol=wcfg["tol"], max_iter=wcfg["max_iter"])
            rows.append(_row("wendy", seed, level, t_asm + time.perf_counter() - t0, prob,
                             prob.vector(res.w)))
        elif method == "ols":
            t0 = time.perf_counter()
            W = ols_estimate(system, prob.mask)
            rows.append(_row("ols", seed, level, t_asm + time.perf_counter() - t0, prob, prob.vector(W)))
        elif method == "oe":
            truth = prob.vector(prob.truth)
            if ocfg["w0"] is not None:
                w0 = np.asarray(ocfg["w0"], dtype=float)
                if w0.shape != truth.shape:
                    raise ConfigError(f"'oe.w0' needs {truth.size} entries")
            else:
                rng = np.random.default_rng(seed)
                w0 = truth * (1 + ocfg["perturb"] * rng.uniform(-1, 1, truth.size))
            forward, extra0 = forward_model(prob, d, cfg)
            t0 = time.perf_counter()
            try:
                res = output_error_estimate(d, forward, np.concatenate([w0, extra0]),
                                            maxfev=int(ocfg["maxfev"]))
                rows.append(_row("oe", seed, level, res.walltime, prob, res.w[:truth.size]))
            except NumericalError as exc:
                # a failed fit is a result, not a reason to drop the whole batch
                warnings.warn(f"output-error trial (seed {seed}) failed: {exc}", RuntimeWarning)
                rows.append(_row("oe", seed, level, time.perf_counter() - t0, prob,
                                 np.full(truth.size, np.nan)))
        else:
            raise ConfigError(f"unknown method {method!r}")
    return rows


def estimate_methods(method: str):
    return ["wendy", "oe"] if method == "both" else [method]


def run_trials(prob, clean, levels, trials, methods, cfg, threads=1):
    """All (level, trial) pairs, rows ordered by level then trial regardless of scheduling."""
    jobs = [(level, trial_seed(cfg["seed"], li, t)) for li, level in enumerate(levels)
            for t in range(trials)]

    def work(job):
        return run_trial(prob, clean, job[0], job[1], methods, cfg)

    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(work, jobs))
    else:
        chunks = [work(j) for j in jobs]
    return [row for chunk in chunks for row in chunk]


def geometric_mean(errors) -> float:
    e = np.maximum(np.asarray(errors, dtype=float), GEOMEAN_FLOOR)
    return float(np.exp(np.mean(np.log(e))))


def summarize(rows):
    out = []
    keys = []
    for r in rows:
        k = (r["method"], r["noise_level"])
        if k not in keys:
            keys.append(k)
    for method, level in keys:
        sel = [r for r in rows if r["method"] == method and r["noise_level"] == level]
        out.append({"method": method, "noise_level": level, "trials": len(sel),
                    "geomean_rel_error": geometric_mean([r["rel_error"] for r in sel]),
                    "median_walltime_s": float(np.median([r["walltime_s"] for r in sel]))})
    return out


# --------------------------------------------------------------- coarsegrain


def _fd_matrices(n, dx):
    d1 = sp.diags([-0.5, 0.5], [-1, 1], shape=(n, n)) / dx
    d2 = sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(n, n)) / dx**2
    return d1.tocsr(), d2.tocsr()


def solve_density_pde(lib: FeatureLibrary, w, x, t, p0):
    """Method-of-lines solve of ``p_t = sum_j w_j d^k(x^a p^q)`` with zero boundary values."""
    n = x.size
    d1, d2 = _fd_matrices(n, x[1] - x[0])
    active = [(lib.terms[j], w[j]) for j in np.flatnonzero(w)]

    def deriv(f, k):
        while k >= 2:
            f, k = d2 @ f, k - 2
        return d1 @ f if k == 1 else f

    def rhs(_, p):
        out = np.zeros(n)
        for term, c in active:
            out += c * deriv(term.evaluate(p[:, None], (x,)), term.dmulti[0])
        return out

    sol = solve_ivp(rhs, (t[0], t[-1]), p0, method="LSODA", t_eval=t, rtol=1e-6, atol=1e-9)
    if not sol.success or sol.y.shape[1] != t.size or not np.all(np.isfinite(sol.y)):
        raise NumericalError(f"density PDE solve failed: {sol.message}")
    return sol.y  # (n_x, n_t)


def coarsegrain_targets(pcfg: dict):
    p = pcfg["params"]
    drift = Term((1,), (1,), None, (1,))
    diffusion = Term((1,), (2,))
    if pcfg["model"] == "ou":
        return {drift: p["theta"], diffusion: p["D"]}, None
    # homogenized diffusivity lies between the harmonic and arithmetic means of a(x)
    bounds = (p["D"] * np.sqrt(1 - p["amp"] ** 2), p["D"])
    return ({drift: p["theta"]} if p["theta"] else {}) | {diffusion: None}, bounds


def run_coarsegrain(cfg: dict):
    pcfg = cfg["particles"]
    traj, x_axis, t_axis = simulate_particles(pcfg)
    d = histogram_density(traj, x_axis, t_axis)
    disc = run_discovery(d, cfg)
    lib = disc.library
    w = disc.coefficients[:, 0]
    res = disc.results[0]
    targets, bounds = coarsegrain_targets(pcfg)
    target_rows = []
    for term, value in targets.items():
        j = lib.index(term)
        row = {"term": term.label(), "discovered": float(w[j]), "target": value}
        if value is not None:
            row["rel_error"] = float(abs(w[j] - value) / abs(value))
        else:
            row["bounds"] = [float(b) for b in bounds]
            row["within_bounds"] = bool(bounds[0] <= w[j] <= bounds[1])
        target_rows.append(row)
    support = set(np.flatnonzero(w))
    expected = {lib.index(t) for t in targets}
    x, t = x_axis.coords, t_axis.coords
    try:
        p_pde = solve_density_pde(lib, w, x, t, d.values[:, 0, 0])
        l1 = np.sum(np.abs(p_pde - d.values[..., 0]), axis=0) * x_axis.spacing
        l1_rows = [(float(ti), float(e)) for ti, e in zip(t, l1)]
        l1_summary = {"mean": float(l1.mean()), "final": float(l1[-1]), "max": float(l1.max())}
    except NumericalError as exc:
        l1_rows, l1_summary = [], {"error": str(exc)}
    report = {
        "model": pcfg["model"],
        "particles": int(pcfg["params"]["N"]),
        "support": [lib.terms[j].label() for j in sorted(support)],
        "coefficients": {lib.terms[j].label(): float(w[j]) for j in sorted(support)},
        "support_matches_target": support == expected,
        "targets": target_rows,
        "lambda_star": float(res.lambda_star),
        "residual": float(res.residual),
        "high_residual": bool(res.residual > cfg["residual_warning"]),
        "radii": list(disc.radii),
        "density_l1": l1_summary,
    }
    return report, l1_rows, disc
