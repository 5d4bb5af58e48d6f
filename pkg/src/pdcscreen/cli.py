"""Command line entry point: ``simulate``, ``screen`` and ``bench``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 too many failed
replications.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .harness import ExperimentConfig, ReplicationBudgetExceeded, run_experiment, screen_csv, write_summary
from .screening import Method, ScreenConfig
from .simulate import InnovationDist, ModelSpec, simulate

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_BUDGET = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive(v: str) -> int:
    i = int(v)
    if i < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return i


def _nonneg(v: str) -> int:
    i = int(v)
    if i < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {v}")
    return i


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pdcscreen", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="simulate a benchmark panel to CSV")
    s.add_argument("--model", type=int, choices=range(1, 7), required=True)
    s.add_argument("--m", type=_positive, default=500)
    s.add_argument("--n", type=_positive, default=200)
    s.add_argument("--dist", choices=["gaussian", "t5", "t3"], default="gaussian")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--h", type=_positive, default=None, help="extra rows kept for lags (3; 2 for model 6)")
    s.add_argument("--scenario", type=int, choices=[1, 2], default=1, help="model 6 only")
    s.add_argument("--sigma-sign", type=int, choices=[1, -1], default=1, help="model 6 only")
    s.add_argument("--out", required=True, help="CSV path; a .json sidecar is written next to it")

    s = sub.add_parser("screen", help="rank lagged covariates of a CSV panel")
    s.add_argument("--input", required=True)
    s.add_argument("--response", required=True, help="response column name")
    s.add_argument("--h", type=_positive, required=True)
    s.add_argument("--horizon", type=_nonneg, default=0)
    s.add_argument("--method", choices=["sis", "dcsis", "pdcsis", "pdcsis-plus"], default="pdcsis")
    s.add_argument("--estimator", choices=["v", "u"], default=None)
    s.add_argument("--top-d", type=_positive, default=None)
    s.add_argument("--threshold", type=float, default=None)
    s.add_argument("--n-resp-lags", type=_nonneg, default=None)
    s.add_argument("--seed", type=int, default=0, help="decoy seed for pdcsis-plus")
    s.add_argument("--out", required=True, help="output stem; writes <out>.json and <out>.csv")

    s = sub.add_parser("bench", help="run a replication experiment from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--parallelism", default=None, help="worker count or 'auto'; overrides the config")
    return p


def _cmd_simulate(a) -> int:
    h = a.h if a.h is not None else (2 if a.model == 6 else 3)
    spec = ModelSpec(model_id=a.model, m=a.m, n=a.n, h=h, dist=InnovationDist.parse(a.dist),
                     scenario=a.scenario, sigma_sign=a.sigma_sign)
    data, truth, partition = simulate(spec, a.seed)
    out = Path(a.out)
    if out.suffix != ".csv":
        out = out.with_name(out.name + ".csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    m = spec.m
    xnames = [f"x{k + 1}" for k in range(m)]
    if partition is None:
        header, values = ["t", "y"] + xnames, np.column_stack([data.y, data.X])
        truth_doc = [{"column": int(j), "series": xnames[j % m], "lag": int(j // m + 1)} for j in truth]
    else:
        header, values = ["t"] + xnames, data
        truth_doc = [{"target_group": int(i), "lag": int(l), "source_group": int(j)} for i, l, j in truth]
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for t, row in enumerate(values):
            w.writerow([t] + [repr(float(v)) for v in row])
    side = {"spec": spec.to_dict(), "seed": a.seed, "rows": int(values.shape[0]),
            "true_set": truth_doc}
    if partition is not None:
        side["groups"] = [partition.members(g).tolist() for g in range(partition.e)]
    out.with_suffix(".json").write_text(json.dumps(side, indent=2) + "\n")
    print(out)
    return EXIT_OK


def _cmd_screen(a) -> int:
    try:
        cfg = ScreenConfig(method=Method.coerce(a.method), estimator=a.estimator, top_d=a.top_d,
                           threshold=a.threshold)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    result, report = screen_csv(a.input, a.response, a.h, a.horizon, cfg, a.out, seed=a.seed,
                                n_resp_lags=a.n_resp_lags, time_index=None)
    for row in report["selected"]:
        print(f"{row['rank']:>5}  {row['series']}[t-{row['lag']}]  {row['statistic']:.6g}")
    return EXIT_OK


def _cmd_bench(a) -> int:
    try:
        cfg = ExperimentConfig.load(a.config)
    except (TypeError, ValueError, KeyError) as exc:
        raise UsageError(f"invalid config {a.config}: {exc}") from exc
    start = time.perf_counter()
    try:
        table = run_experiment(cfg, a.parallelism)
    except ReplicationBudgetExceeded as exc:
        if exc.summary is not None:
            write_summary(cfg, exc.summary, a.out_dir)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    write_summary(cfg, table, a.out_dir)
    sys.stdout.write(table.to_text())
    print(f"runtime: {time.perf_counter() - start:.2f}s", file=sys.stderr)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    a = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"simulate": _cmd_simulate, "screen": _cmd_screen, "bench": _cmd_bench}[a.command]
    try:
        return handler(a)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA if a.command == "screen" else EXIT_USAGE
    except KeyError as exc:
        print(f"data error: {exc.args[0] if exc.args else exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, FloatingPointError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
