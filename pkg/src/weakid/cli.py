"""``weakid`` command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from weakid import runs
from weakid.config import load_config, resolve
from weakid.errors import ConfigError, DatasetFormatError, NumericalError
from weakid.io import read_dataset, write_dataset

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
COMMANDS = ("simulate", "noise", "discover", "estimate", "coarsegrain", "bench")


def _write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=False)
        fh.write("\n")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])


def _write_dict_rows(path: Path, rows) -> None:
    header = list(rows[0]) if rows else ["method", "seed", "noise_level", "walltime_s", "rel_error"]
    _write_csv(path, header, ([r[k] for k in header] for r in rows))


def _dataset_name(fmt: str) -> str:
    return "dataset.csv" if fmt == "csv" else "dataset.bin"


def cmd_simulate(cfg, out: Path, args):
    d = runs.simulate_dataset(cfg)
    path = out / _dataset_name(cfg["format"])
    write_dataset(d, path)
    print(f"{cfg['model']}: wrote {'x'.join(map(str, d.grid.shape))} grid, "
          f"{d.components} component(s) to {path}")


def cmd_noise(cfg, out: Path, args):
    from weakid.grid import NoiseSpec, add_noise

    d = read_dataset(cfg["input"])
    noisy = add_noise(d, NoiseSpec(cfg["level"], cfg["seed"]))
    fmt = "csv" if str(cfg["input"]).endswith(".csv") else "bin"
    path = out / _dataset_name(fmt)
    write_dataset(noisy, path)
    print(f"added {100 * cfg['level']:g}% noise (seed {cfg['seed']}) -> {path}")


def _term_table(report):
    lines = []
    for resp in report["responses"]:
        lines.append(f"{resp['response']}  (lambda*={resp['lambda_star']:.3g}, "
                     f"residual={resp['residual']:.3g})")
        width = max([len(t["term"]) for t in resp["terms"]] + [4])
        for t in resp["terms"]:
            lines.append(f"  {t['term']:<{width}}  {t['coefficient']: .6g}")
    return "\n".join(lines)


def cmd_discover(cfg, out: Path, args):
    d = runs.data_for(cfg)
    disc = runs.run_discovery(d, cfg)
    report = runs.model_report(disc)
    _write_json(out / "model.json", report)
    _write_csv(out / "loss_curve.csv", ["response", "lambda", "loss"], runs.loss_curve_rows(disc))
    _write_json(out / "timing.json", {k: float(v) for k, v in disc.timings.items()})
    print(_term_table(report))


def _print_rows(rows):
    for r in rows:
        print(f"{r['method']:>6}  noise={r['noise_level']:<5g} seed={r['seed']:<20d} "
              f"rel_error={r['rel_error']:.4g}  walltime={r['walltime_s']:.3f}s")


def cmd_estimate(cfg, out: Path, args):
    prob = runs.problem(cfg["problem"])
    clean = runs.data_for(cfg)
    if clean.components != prob.library.components:
        raise ConfigError(f"{cfg['problem']} expects {prob.library.components} components, "
                          f"data has {clean.components}")
    rows = runs.run_trials(prob, clean, [cfg["noise_level"]], cfg["trials"],
                           runs.estimate_methods(cfg["method"]), cfg, args.threads)
    _write_dict_rows(out / "estimate.csv", rows)
    _print_rows(rows)


def cmd_coarsegrain(cfg, out: Path, args):
    report, l1_rows, _ = runs.run_coarsegrain(cfg)
    _write_json(out / "report.json", report)
    _write_csv(out / "density_l1.csv", ["t", "l1_error"], l1_rows)
    print(f"{report['model']} (N={report['particles']}): support {report['support']}")
    for t in report["targets"]:
        print(f"  {t['term']}: discovered {t['discovered']:.4g}, target {t['target']}"
              + (f", bounds {t['bounds']}" if "bounds" in t else ""))
    if report["high_residual"]:
        print(f"  warning: high residual {report['residual']:.3g}; the fit may be unreliable")


def cmd_bench(cfg, out: Path, args):
    prob = runs.problem(cfg["problem"])
    clean = runs.simulate_dataset(cfg["simulate"])
    rows = runs.run_trials(prob, clean, cfg["noise_levels"], cfg["trials"], cfg["methods"], cfg,
                           args.threads)
    _write_dict_rows(out / "bench.csv", rows)
    summary = runs.summarize(rows)
    _write_dict_rows(out / "summary.csv", summary)
    print(f"{'method':>6}  {'noise':>6}  {'trials':>6}  {'geomean err':>12}  {'median s':>9}")
    for s in summary:
        print(f"{s['method']:>6}  {s['noise_level']:>6g}  {s['trials']:>6d}  "
              f"{s['geomean_rel_error']:>12.4g}  {s['median_walltime_s']:>9.3f}")


HANDLERS = {
    "simulate": cmd_simulate,
    "noise": cmd_noise,
    "discover": cmd_discover,
    "estimate": cmd_estimate,
    "coarsegrain": cmd_coarsegrain,
    "bench": cmd_bench,
}


def _seed(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="weakid", description="Weak-form model discovery and estimation.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", default="weakid-out", help="output directory (default: %(default)s)")
    parser.add_argument("--seed", type=_seed, default=None, help="override the config seed")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for trial fan-out")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("weakid: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = resolve(args.command, load_config(args.config), args.seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "resolved_config.json", cfg)
        t0 = time.perf_counter()
        with np.errstate(over="warn"):
            HANDLERS[args.command](cfg, out, args)
        print(f"done in {time.perf_counter() - t0:.2f}s; outputs in {out}{os.sep}")
    except ConfigError as exc:
        print(f"weakid {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, FloatingPointError) as exc:
        print(f"weakid {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, DatasetFormatError) as exc:
        print(f"weakid {args.command}: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
