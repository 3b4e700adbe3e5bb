import csv
import json

import numpy as np
import pytest

from weakid import cli
from weakid.config import load_config, resolve
from weakid.errors import ConfigError
from weakid.grid import Dataset, make_grid
from weakid.io import read_dataset, write_dataset
from weakid.runs import geometric_mean, summarize


def run(tmp_path, command, cfg, name="out", extra=()):
    cfg_path = tmp_path / f"{name}.json"
    cfg_path.write_text(json.dumps(cfg))
    out = tmp_path / name
    code = cli.main([command, "--config", str(cfg_path), "--out", str(out), *extra])
    return code, out


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


# ------------------------------------------------------------------ config


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="bogus"):
        resolve("simulate", {"schema": 1, "model": "ks", "bogus": 1})
    with pytest.raises(ConfigError, match="params.nn"):
        resolve("simulate", {"schema": 1, "model": "ks", "params": {"nn": 3}})


def test_missing_key_named():
    with pytest.raises(ConfigError, match="'model'"):
        resolve("simulate", {"schema": 1})
    with pytest.raises(ConfigError, match="'library'"):
        resolve("discover", {"schema": 1, "input": "x.bin"})


def test_schema_version_checked():
    with pytest.raises(ConfigError, match="schema"):
        resolve("simulate", {"schema": 2, "model": "ks"})


def test_defaults_are_echoed():
    cfg = resolve("simulate", {"model": "ks"}, seed=7)
    assert cfg["seed"] == 7 and cfg["schema"] == 1
    assert cfg["params"]["n"] == 256 and cfg["params"]["n_t"] == 301
    assert cfg["params"]["length"] == pytest.approx(32 * np.pi)
    d = resolve("discover", {"input": "a.bin", "library": {"pde_poly": {"K": 2, "P": 2}}})
    for key in ("gamma", "lambdas", "query_factor", "spectral_threshold", "radii", "stride"):
        assert key in d


def test_load_config_errors(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(p)
    p.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_config(p)


def test_geometric_mean_clamps_zeros():
    assert geometric_mean([0.0, 1e-16]) == pytest.approx(1e-16)
    assert geometric_mean([1e-2, 1e-4]) == pytest.approx(1e-3)
    rows = [{"method": "wendy", "noise_level": 0.1, "rel_error": 0.01, "walltime_s": 1.0},
            {"method": "wendy", "noise_level": 0.1, "rel_error": 0.0001, "walltime_s": 3.0}]
    (s,) = summarize(rows)
    assert s["geomean_rel_error"] == pytest.approx(1e-3) and s["trials"] == 2
    assert s["median_walltime_s"] == 2.0


# ------------------------------------------------------------------ exit codes


def test_missing_key_exit_code(tmp_path, capsys):
    code, _ = run(tmp_path, "simulate", {"schema": 1})
    assert code == 2
    assert "'model'" in capsys.readouterr().err


def test_empty_library_exit_code(tmp_path):
    code, _ = run(tmp_path, "discover", {"schema": 1, "input": "x.bin", "library": {}})
    assert code == 2


def test_unknown_method_exit_code(tmp_path):
    code, _ = run(tmp_path, "estimate", {"schema": 1, "problem": "logistic", "method": "magic"})
    assert code == 2


def test_unknown_model_and_bad_library(tmp_path):
    assert run(tmp_path, "simulate", {"schema": 1, "model": "navier"})[0] == 2
    code, _ = run(tmp_path, "discover", {"schema": 1, "input": "x.bin", "library": {"nope": {}}},
                  name="lib")
    assert code in (2, 4)


def test_io_failure_exit_code(tmp_path):
    code, _ = run(tmp_path, "discover", {"schema": 1, "input": str(tmp_path / "missing.bin"),
                                         "library": {"pde_poly": {"K": 1, "P": 1}}})
    assert code == 4
    bad = tmp_path / "corrupt.bin"
    bad.write_bytes(b"WFSDgarbage")
    code, _ = run(tmp_path, "noise", {"schema": 1, "input": str(bad), "level": 0.1}, name="n")
    assert code == 4


def test_numerical_failure_exit_code(tmp_path):
    g = make_grid([(64, 0.0, 1.0), (64, 0.0, 1.0)])
    path = tmp_path / "zeros.bin"
    write_dataset(Dataset(g, np.zeros((64, 64))), path)
    with pytest.warns(RuntimeWarning):
        code, _ = run(tmp_path, "discover", {"schema": 1, "input": str(path),
                                             "library": {"pde_poly": {"K": 2, "P": 2}}})
    assert code == 3


# ------------------------------------------------------------------ commands


@pytest.fixture(scope="module")
def ks_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("ks")
    code, out = run(tmp, "simulate", {"schema": 1, "model": "ks"}, name="sim", extra=["--seed", "0"])
    assert code == 0
    return tmp, out


def test_simulate_ks_default(ks_run):
    _, out = ks_run
    d = read_dataset(out / "dataset.bin")
    assert d.grid.shape == (256, 301)
    resolved = json.loads((out / "resolved_config.json").read_text())
    assert resolved["seed"] == 0 and resolved["params"]["n_t"] == 301


def test_simulate_csv_and_noise(tmp_path):
    code, out = run(tmp_path, "simulate", {"schema": 1, "model": "logistic", "format": "csv"})
    assert code == 0
    d = read_dataset(out / "dataset.csv")
    assert d.grid.shape == (512,)
    code, nout = run(tmp_path, "noise", {"schema": 1, "input": str(out / "dataset.csv"),
                                         "level": 0.1, "seed": 3}, name="noisy")
    assert code == 0
    n = read_dataset(nout / "dataset.csv")
    assert not np.array_equal(n.values, d.values)


def test_discover_noiseless_ks(ks_run, capsys):
    tmp, sim = ks_run
    code, out = run(tmp, "discover", {"schema": 1, "input": str(sim / "dataset.bin"),
                                      "library": {"pde_poly": {"K": 6, "P": 6}}}, name="disc")
    assert code == 0
    report = json.loads((out / "model.json").read_text())
    terms = {t["term"]: t["coefficient"] for t in report["responses"][0]["terms"]}
    target = {"d^1/dx^1(u^2)": -0.5, "d^2/dx^2(u^1)": -1.0, "d^4/dx^4(u^1)": -1.0}
    assert set(terms) == set(target)
    for k, v in target.items():
        assert abs(terms[k] - v) <= 1e-2 * abs(v)
    rows = read_rows(out / "loss_curve.csv")
    assert len(rows) == 40
    assert "d^4/dx^4(u^1)" in capsys.readouterr().out


def test_discover_with_embedded_simulation(tmp_path):
    cfg = {"schema": 1, "simulate": {"model": "logistic"},
           "library": {"ode_poly_trig": {"components": 1, "max_degree": 3}},
           "lambdas": [0.01, 0.1, 0.5], "test_function": {"kind": "poly-bump", "q": 5}}
    code, out = run(tmp_path, "discover", cfg)
    assert code == 0
    report = json.loads((out / "model.json").read_text())
    assert {t["term"] for t in report["responses"][0]["terms"]} == {"u^1", "u^2"}
    resolved = json.loads((out / "resolved_config.json").read_text())
    assert resolved["simulate"]["params"]["n_t"] == 512


def test_estimate_wendy_logistic(tmp_path):
    code, out = run(tmp_path, "estimate", {"schema": 1, "problem": "logistic", "method": "wendy"})
    assert code == 0
    (row,) = read_rows(out / "estimate.csv")
    assert float(row["rel_error"]) <= 1e-3
    assert list(row)[:4] == ["method", "seed", "noise_level", "walltime_s"]


def test_estimate_both_emits_two_rows_per_trial(tmp_path):
    cfg = {"schema": 1, "problem": "logistic", "method": "both", "noise_level": 0.05, "trials": 2,
           "oe": {"maxfev": 60}}
    code, out = run(tmp_path, "estimate", cfg)
    assert code == 0
    rows = read_rows(out / "estimate.csv")
    assert [r["method"] for r in rows] == ["wendy", "oe", "wendy", "oe"]
    assert rows[0]["seed"] == rows[1]["seed"] != rows[2]["seed"]


def test_bench_single_trial_matches_estimate(tmp_path):
    common = {"schema": 1, "problem": "logistic", "seed": 5, "oe": {"maxfev": 60}}
    code, est = run(tmp_path, "estimate", {**common, "method": "both", "noise_level": 0.1},
                    name="est")
    assert code == 0
    code, bench = run(tmp_path, "bench", {**common, "methods": ["wendy", "oe"],
                                          "noise_levels": [0.1], "trials": 1}, name="bench")
    assert code == 0
    a, b = read_rows(est / "estimate.csv"), read_rows(bench / "bench.csv")
    strip = lambda rows: [{k: v for k, v in r.items() if k != "walltime_s"} for r in rows]
    assert strip(a) == strip(b)
    summary = read_rows(bench / "summary.csv")
    assert [s["method"] for s in summary] == ["wendy", "oe"]


def test_bench_threads_do_not_change_results(tmp_path):
    cfg = {"schema": 1, "problem": "logistic", "methods": ["wendy", "ols"],
           "noise_levels": [0.05, 0.1], "trials": 2}
    _, one = run(tmp_path, "bench", cfg, name="one")
    _, two = run(tmp_path, "bench", cfg, name="two", extra=["--threads", "2"])
    strip = lambda rows: [{k: v for k, v in r.items() if k != "walltime_s"} for r in rows]
    assert strip(read_rows(one / "bench.csv")) == strip(read_rows(two / "bench.csv"))


def test_coarsegrain_small_ensemble_flags(tmp_path):
    cfg = {"schema": 1, "particles": {"model": "ou", "params": {"N": 100}}}
    code, out = run(tmp_path, "coarsegrain", cfg)
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["high_residual"] is True
    assert "density_l1" in report


def test_invalid_threads(tmp_path):
    code, _ = run(tmp_path, "simulate", {"schema": 1, "model": "logistic"}, extra=["--threads", "0"])
    assert code == 2


def test_initial_state_guess_recovers_quadratic():
    from weakid.runs import initial_state_guess
    g = make_grid([(200, 0.0, 2.0)])
    t = g.axes[-1].coords
    d = Dataset(g, np.stack([1.5 - 2 * t + 0.5 * t**2, np.full_like(t, -3.0)], axis=-1))
    assert np.allclose(initial_state_guess(d), [1.5, -3.0], atol=1e-10)


def test_failed_oe_trial_is_recorded_not_fatal(tmp_path, monkeypatch):
    from weakid import runs

    def boom(*a, **k):
        raise runs.NumericalError("every output-error evaluation failed")

    monkeypatch.setattr(runs, "output_error_estimate", boom)
    cfg = {"schema": 1, "problem": "logistic", "method": "both", "noise_level": 0.05}
    with pytest.warns(RuntimeWarning, match="output-error"):
        code, out = run(tmp_path, "estimate", cfg)
    assert code == 0
    wendy_row, oe_row = read_rows(out / "estimate.csv")
    assert float(wendy_row["rel_error"]) < 0.1
    assert float(oe_row["rel_error"]) == np.inf
    assert geometric_mean([0.1, np.inf]) == np.inf


def test_rerun_from_resolved_config_is_identical(tmp_path):
    cfg = {"schema": 1, "problem": "lorenz", "methods": ["wendy", "ols"],
           "noise_levels": [0.1], "trials": 2, "seed": 11}
    _, first = run(tmp_path, "bench", cfg, name="first")
    code = cli.main(["bench", "--config", str(first / "resolved_config.json"),
                     "--out", str(tmp_path / "second")])
    assert code == 0
    second = tmp_path / "second"
    assert json.loads((first / "resolved_config.json").read_text()) == \
        json.loads((second / "resolved_config.json").read_text())
    strip = lambda rows: [{k: v for k, v in r.items() if k != "walltime_s"} for r in rows]
    assert strip(read_rows(first / "bench.csv")) == strip(read_rows(second / "bench.csv"))


def test_simulate_rerun_bytes_identical(tmp_path):
    _, a = run(tmp_path, "simulate", {"schema": 1, "model": "ou", "params": {"N": 2000},
                                      "noise": {"level": 0.05, "seed": 4}}, name="a")
    cli.main(["simulate", "--config", str(a / "resolved_config.json"), "--out", str(tmp_path / "b")])
    assert (a / "dataset.bin").read_bytes() == (tmp_path / "b" / "dataset.bin").read_bytes()


def test_seed_override_reaches_particles():
    cfg = resolve("coarsegrain", {"particles": {"model": "ou", "seed": 3}}, seed=9)
    assert cfg["seed"] == 9 and cfg["particles"]["seed"] == 9
    cfg = resolve("coarsegrain", {"particles": {"model": "ou", "seed": 3}})
    assert cfg["seed"] == 3
    again = resolve("coarsegrain", cfg)
    assert again == cfg
