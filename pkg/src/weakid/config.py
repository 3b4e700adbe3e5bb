"""JSON run configuration: defaults, validation and resolution.

A user document is merged over the command's defaults. Unknown keys are
rejected, except inside the free-form objects listed in ``OPEN_KEYS``. The
resolved document contains every value a run used, so feeding it back in
reproduces the run.
"""

from __future__ import annotations

import copy
import json
import math

from weakid.errors import ConfigError

SCHEMA_VERSION = 1
MODELS = ("ks", "logistic", "lorenz", "fitzhugh_nagumo", "ou", "oscillatory")
PROBLEMS = ("ks", "logistic", "lorenz", "fitzhugh_nagumo")
METHODS = ("wendy", "oe", "both")

# keys whose value is passed through without key checking
OPEN_KEYS = {"library", "test_function", "lambdas", "u0", "radii", "stride", "w0", "sigma"}

SIMULATE_DEFAULTS = {
    "ks": {"n": 256, "length": 32 * math.pi, "t_end": 150.0, "n_t": 301, "dt": 0.05,
           "ic_modes": 8, "ic_amplitude": 1.0},
    "logistic": {"t_end": 10.0, "n_t": 512, "u0": [0.1], "tol": 1e-10},
    "lorenz": {"t_end": 10.0, "n_t": 1001, "u0": [-8.0, 7.0, 27.0], "tol": 1e-10},
    "fitzhugh_nagumo": {"t_end": 100.0, "n_t": 2001, "u0": [-1.0, 1.0], "tol": 1e-10},
    "ou": {"N": 100000, "theta": 1.0, "D": 0.5, "amp": 0.0, "eps": 1.0, "init_mean": 2.0,
           "init_std": 0.3, "x_lo": -4.0, "x_hi": 4.0, "n_x": 161, "t_end": 4.0, "n_t": 201,
           "dt_internal": 0.005},
    "oscillatory": {"N": 20000, "theta": 0.0, "D": 0.5, "amp": 0.9, "eps": 0.1, "init_mean": 0.0,
                    "init_std": 0.5, "x_lo": -4.0, "x_hi": 4.0, "n_x": 81, "t_end": 1.0,
                    "n_t": 101, "dt_internal": 2e-4},
}

DISCOVERY_DEFAULTS = {
    "radii": None,
    "stride": None,
    "query_factor": 80.0,
    "spectral_threshold": 0.1,
    "lambdas": {"lo": 1e-4, "hi": 1.0, "n": 40},
    "gamma": 0.2,
    "test_function": None,
}

WENDY_DEFAULTS = {"sigma": None, "tol": 1e-6, "max_iter": 100, "query_factor": 80.0}
OE_DEFAULTS = {"w0": None, "perturb": 0.25, "maxfev": 300}


def simulate_defaults(model: str) -> dict:
    if model not in MODELS:
        raise ConfigError(f"unknown model {model!r}; expected one of {', '.join(MODELS)}")
    return {"schema": SCHEMA_VERSION, "model": model, "seed": 0,
            "params": copy.deepcopy(SIMULATE_DEFAULTS[model]), "noise": {"level": 0.0, "seed": 0},
            "format": "bin"}


def _merge(defaults: dict, user: dict, path: str = "") -> dict:
    out = copy.deepcopy(defaults)
    for key, val in user.items():
        where = f"{path}{key}"
        if key not in defaults:
            raise ConfigError(f"unknown config key '{where}'")
        if key in OPEN_KEYS or not isinstance(defaults[key], dict) or not isinstance(val, dict):
            out[key] = copy.deepcopy(val)
        else:
            out[key] = _merge(defaults[key], val, where + ".")
    return out


def _require(cfg: dict, *keys):
    for k in keys:
        if k not in cfg:
            raise ConfigError(f"missing required config key '{k}'")


def _check_schema(cfg: dict):
    schema = cfg.get("schema", SCHEMA_VERSION)
    if schema != SCHEMA_VERSION:
        raise ConfigError(f"unsupported config schema {schema!r}; expected {SCHEMA_VERSION}")


def _data_source(cfg: dict, command: str) -> dict:
    """Either an input file or an embedded simulate block."""
    if "input" in cfg and "simulate" in cfg:
        raise ConfigError(f"{command}: give either 'input' or 'simulate', not both")
    if "input" in cfg:
        if not isinstance(cfg["input"], str):
            raise ConfigError("'input' must be a file path")
        return {"input": cfg["input"]}
    if "simulate" in cfg:
        return {"simulate": resolve_simulate(cfg["simulate"], nested=True)}
    raise ConfigError("missing required config key 'input' (or 'simulate')")


def resolve_simulate(cfg: dict, nested: bool = False) -> dict:
    if not nested:
        _check_schema(cfg)
    _require(cfg, "model")
    defaults = simulate_defaults(cfg["model"])
    if nested:
        defaults.pop("schema")
    out = _merge(defaults, cfg)
    if out["format"] not in ("bin", "csv"):
        raise ConfigError(f"unknown dataset format {out['format']!r}; expected 'bin' or 'csv'")
    if not out["noise"]["level"] >= 0:
        raise ConfigError("noise 'level' must be >= 0")
    return out


def resolve_noise(cfg: dict) -> dict:
    _check_schema(cfg)
    _require(cfg, "input", "level")
    out = _merge({"schema": SCHEMA_VERSION, "input": None, "level": 0.0, "seed": 0}, cfg)
    if not out["level"] >= 0:
        raise ConfigError("noise 'level' must be >= 0")
    return out


def resolve_discover(cfg: dict) -> dict:
    _check_schema(cfg)
    _require(cfg, "library")
    body = {k: v for k, v in cfg.items() if k not in ("input", "simulate")}
    defaults = {"schema": SCHEMA_VERSION, "library": None, "seed": 0, **DISCOVERY_DEFAULTS}
    out = _merge(defaults, body)
    if not out["library"]:
        raise ConfigError("'library' must not be empty")
    out.update(_data_source(cfg, "discover"))
    return out


def _check_trials(out):
    if not isinstance(out["trials"], int) or out["trials"] < 1:
        raise ConfigError("'trials' must be an integer >= 1")


def _check_problem(name):
    if name not in PROBLEMS:
        raise ConfigError(f"unknown problem {name!r}; expected one of {', '.join(PROBLEMS)}")


def resolve_estimate(cfg: dict) -> dict:
    _check_schema(cfg)
    _require(cfg, "problem")
    _check_problem(cfg["problem"])
    defaults = {"schema": SCHEMA_VERSION, "problem": None, "method": "wendy", "seed": 0,
                "noise_level": 0.0, "trials": 1, "wendy": dict(WENDY_DEFAULTS),
                "oe": dict(OE_DEFAULTS), "radii": None, "spectral_threshold": 0.1}
    body = {k: v for k, v in cfg.items() if k not in ("input", "simulate")}
    out = _merge(defaults, body)
    if out["method"] not in METHODS:
        raise ConfigError(f"unknown method {out['method']!r}; expected one of {', '.join(METHODS)}")
    _check_trials(out)
    if "input" in cfg and "simulate" in cfg:
        raise ConfigError("estimate: give either 'input' or 'simulate', not both")
    if "input" in cfg:
        out["input"] = cfg["input"]
    else:
        sim = dict(cfg.get("simulate", {}))
        sim.setdefault("model", cfg["problem"])
        out["simulate"] = resolve_simulate(sim, nested=True)
    return out


def resolve_coarsegrain(cfg: dict) -> dict:
    _check_schema(cfg)
    _require(cfg, "particles")
    p = cfg["particles"]
    if not isinstance(p, dict):
        raise ConfigError("'particles' must be an object")
    _require(p, "model")
    if p["model"] not in ("ou", "oscillatory"):
        raise ConfigError(f"unknown particle model {p['model']!r}")
    defaults = {"schema": SCHEMA_VERSION, "particles": simulate_defaults(p["model"]),
                "library": {"fokker_planck": {"K": 2, "P": 1, "coord_degree": 1}},
                "residual_warning": 0.2, **{k: v for k, v in DISCOVERY_DEFAULTS.items()}}
    defaults["particles"].pop("schema")
    body = dict(cfg)
    if "seed" in body:
        # a top-level seed (e.g. from --seed) drives the particle simulation
        body["particles"] = {**body["particles"], "seed": body.pop("seed")}
    out = _merge(defaults, body)
    out["seed"] = out["particles"]["seed"]
    return out


def resolve_bench(cfg: dict) -> dict:
    _check_schema(cfg)
    _require(cfg, "problem")
    _check_problem(cfg["problem"])
    defaults = {"schema": SCHEMA_VERSION, "problem": None, "methods": ["wendy", "oe"],
                "noise_levels": [0.2], "trials": 5, "seed": 0, "wendy": dict(WENDY_DEFAULTS),
                "oe": dict(OE_DEFAULTS), "radii": None, "spectral_threshold": 0.1}
    body = {k: v for k, v in cfg.items() if k != "simulate"}
    out = _merge(defaults, body)
    for m in out["methods"]:
        if m not in ("wendy", "oe", "ols"):
            raise ConfigError(f"unknown method {m!r}")
    _check_trials(out)
    sim = dict(cfg.get("simulate", {}))
    sim.setdefault("model", cfg["problem"])
    out["simulate"] = resolve_simulate(sim, nested=True)
    return out


RESOLVERS = {
    "simulate": resolve_simulate,
    "noise": resolve_noise,
    "discover": resolve_discover,
    "estimate": resolve_estimate,
    "coarsegrain": resolve_coarsegrain,
    "bench": resolve_bench,
}


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def resolve(command: str, cfg: dict, seed: int | None = None) -> dict:
    cfg = copy.deepcopy(cfg)
    if seed is not None:
        cfg["seed"] = int(seed)
    return RESOLVERS[command](cfg)
