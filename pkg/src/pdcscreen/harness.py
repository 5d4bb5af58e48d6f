"""Seeded replication experiments and real-panel screening reports.

Replication ``i`` of an experiment draws everything from
``derive_seed(master_seed, i)``, so results do not depend on execution
order or on how many worker processes are used.  Summaries are reduced in
replication-index order and medians use the midpoint rule (mean of the two
central order statistics for an even count).
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import time
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from joblib import Parallel, delayed
from threadpoolctl import threadpool_limits

from .lagged import build_lagged, read_panel_csv
from .screening import (
    Method,
    ScreenConfig,
    ScreenResult,
    group_dcsis_stats,
    group_pdcsis_stats,
    mms,
    screen,
)
from .simulate import InnovationDist, ModelSpec, model6_design, simulate, true_set

logger = logging.getLogger(__name__)

MAX_FAILED_FRACTION = 0.05
TIE_RULE = "ties broken by ascending column index"


class ReplicationBudgetExceeded(RuntimeError):
    def __init__(self, failed: int, reps: int, summary: "SummaryTable | None" = None):
        super().__init__(f"{failed} of {reps} replications failed (budget {MAX_FAILED_FRACTION:.0%})")
        self.failed = failed
        self.reps = reps
        self.summary = summary


def derive_seed(master_seed: int, index: int) -> int:
    """64-bit seed for replication ``index``.

    Hashes ``(master_seed, index)`` through numpy's ``SeedSequence`` (a
    hash-based entropy mixer), so neighbouring indices give unrelated seeds.
    """
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _stream(seed: int, label: str) -> np.random.Generator:
    # keyed by label so adding a method never shifts another method's stream
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(zlib.crc32(label.encode()),)))


@dataclass(frozen=True)
class MethodSpec:
    method: Method
    label: str
    config: ScreenConfig

    @classmethod
    def from_dict(cls, d: dict | str) -> "MethodSpec":
        if isinstance(d, str):
            d = {"method": d}
        d = dict(d)
        method = Method.coerce(d.pop("method"))
        label = d.pop("label", None) or method.value
        return cls(method, label, ScreenConfig(method=method, **d))

    def to_dict(self) -> dict:
        cfg = asdict(self.config)
        cfg["method"] = self.method.value
        cfg["estimator"] = self.config.estimator.value
        cfg.pop("n_jobs", None)
        cfg["label"] = self.label
        return cfg


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to rerun an experiment bit-for-bit.

    Either ``model`` (a simulation design) or ``input_csv`` (a fixed panel,
    with ``true_columns`` naming the Z columns to track) must be given.
    """

    methods: tuple[MethodSpec, ...]
    model: ModelSpec | None = None
    input_csv: str | None = None
    response: str | int | None = None
    true_columns: tuple[int, ...] = ()
    h: int | None = None
    horizon: int = 0
    n_resp_lags: int | None = None
    reps: int = 100
    master_seed: int = 0
    parallelism: int | str = 1

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError(f"reps must be >= 1, got {self.reps}")
        if not self.methods:
            raise ValueError("at least one method is required")
        labels = [m.label for m in self.methods]
        if len(set(labels)) != len(labels):
            raise ValueError(f"method labels must be unique, got {labels}")
        if (self.model is None) == (self.input_csv is None):
            raise ValueError("give exactly one of 'model' and 'input_csv'")
        if self.input_csv is not None and not self.true_columns:
            raise ValueError("'true_columns' is required with 'input_csv'")
        grouped = {m.method in (Method.GROUP_PDCSIS, Method.GROUP_DCSIS) for m in self.methods}
        if len(grouped) > 1:
            raise ValueError("group and univariate methods cannot share an experiment")
        if grouped == {True} and (self.model is None or self.model.model_id != 6):
            raise ValueError("group methods need model 6")
        if grouped == {False} and self.model is not None and self.model.model_id == 6:
            raise ValueError("model 6 needs the group methods")

    @property
    def lag_depth(self) -> int:
        if self.h is not None:
            return self.h
        return self.model.h if self.model is not None else 3

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        model = d.pop("model", None)
        if model is not None:
            model = dict(model)
            model["dist"] = InnovationDist.parse(model.get("dist", "gaussian"))
            if "noise" in model:
                model["noise"] = InnovationDist.parse(model["noise"])
            if "beta" in model:
                model["beta"] = tuple(model["beta"])
            model = ModelSpec(**model)
        methods = tuple(MethodSpec.from_dict(m) for m in d.pop("methods", ()))
        known = set(cls.__dataclass_fields__) - {"methods", "model"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "true_columns" in d:
            d["true_columns"] = tuple(int(v) for v in d["true_columns"])
        return cls(methods=methods, model=model, **d)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        out: dict[str, Any] = {
            "model": None if self.model is None else self.model.to_dict(),
            "input_csv": self.input_csv,
            "response": self.response,
            "true_columns": list(self.true_columns),
            "h": self.lag_depth,
            "horizon": self.horizon,
            "n_resp_lags": self.n_resp_lags,
            "reps": self.reps,
            "master_seed": self.master_seed,
            "methods": [m.to_dict() for m in self.methods],
        }
        return out


@dataclass
class SummaryTable:
    """Median MMS per method and median rank per (method, tracked column)."""

    labels: list[str]
    tracked: list[str]
    median_mms: dict[str, float]
    median_ranks: dict[str, dict[str, float]]
    reps: int
    failed: int
    runtime: float = field(default=0.0, compare=False)
    replications: list[dict] = field(default_factory=list, repr=False)

    def to_text(self) -> str:
        head = ["method", "MMS"] + self.tracked
        rows = [[lab, _fmt(self.median_mms[lab])] + [_fmt(self.median_ranks[lab][c]) for c in self.tracked]
                for lab in self.labels]
        widths = [max(len(r[i]) for r in [head] + rows) for i in range(len(head))]
        lines = ["  ".join(v.rjust(w) for v, w in zip(r, widths)) for r in [head] + rows]
        lines.append(f"replications: {self.reps - self.failed} ok, {self.failed} failed; "
                     f"medians by midpoint rule; {TIE_RULE}")
        return "\n".join(lines) + "\n"


def _fmt(v: float) -> str:
    if v != v:
        return "nan"
    return str(int(v)) if float(v).is_integer() else f"{v:g}"


def _median(values) -> float:
    return float(np.median(values)) if len(values) else float("nan")


def _prepare(cfg: ExperimentConfig, seed: int):
    if cfg.model is not None:
        return simulate(cfg.model, seed)
    panel = read_panel_csv(cfg.input_csv, cfg.response if cfg.response is not None else 0)
    return panel, np.asarray(cfg.true_columns, dtype=int), None


def tracked_labels(cfg: ExperimentConfig) -> list[str]:
    """Column labels for the tracked (true) covariates or group triples."""
    if cfg.model is not None and cfg.model.model_id == 6:
        d = model6_design(cfg.model.scenario, cfg.model.sigma_sign, cfg.model.m, cfg.model.group_size)
        return [f"G{i + 1}<-G{j + 1}[t-{l}]" for i, l, j in d.true_triples]
    if cfg.model is not None:
        cols, m = true_set(cfg.model.model_id, cfg.model.m), cfg.model.m
    else:
        cols, m = np.asarray(cfg.true_columns), None
    if m is None:
        return [f"col{j}" for j in cols]
    return [f"X{j % m + 1}[t-{j // m + 1}]" for j in cols]


def run_replication(cfg: ExperimentConfig, index: int) -> dict:
    """One replication: same data for every method; errors are captured, not raised."""
    seed = derive_seed(cfg.master_seed, index)
    rec: dict[str, Any] = {"index": index, "seed": seed, "mms": {}, "ranks": {}, "error": None}
    try:
        with threadpool_limits(1):
            data, truth, partition = _prepare(cfg, seed)
            if partition is not None:
                for ms in cfg.methods:
                    fn = group_pdcsis_stats if ms.method is Method.GROUP_PDCSIS else group_dcsis_stats
                    res = fn(data, partition, cfg.lag_depth, ms.config.estimator)
                    idx = res.triple_index(truth)
                    _record(rec, ms.label, res.ranking, idx)
            else:
                ds = build_lagged(data, cfg.lag_depth, cfg.horizon, cfg.n_resp_lags)
                for ms in cfg.methods:
                    res: ScreenResult = screen(ds, ms.config, _stream(seed, ms.label))
                    _record(rec, ms.label, res.ranking, truth)
    except Exception as exc:  # noqa: BLE001 - counted against the failure budget
        rec["error"] = f"{type(exc).__name__}: {exc}"
        rec["mms"], rec["ranks"] = {}, {}
    return rec


def _record(rec: dict, label: str, ranking: np.ndarray, truth: np.ndarray) -> None:
    pos = np.empty(ranking.size, dtype=int)
    pos[ranking] = np.arange(1, ranking.size + 1)
    rec["mms"][label] = mms(ranking, truth)
    rec["ranks"][label] = [int(v) for v in pos[truth]]


def summarize(cfg: ExperimentConfig, records: list[dict], runtime: float = 0.0) -> SummaryTable:
    records = sorted(records, key=lambda r: r["index"])
    ok = [r for r in records if r["error"] is None]
    labels = [m.label for m in cfg.methods]
    tracked = tracked_labels(cfg)
    med_mms = {lab: _median([r["mms"][lab] for r in ok]) for lab in labels}
    med_ranks = {}
    for lab in labels:
        ranks = np.array([r["ranks"][lab] for r in ok], dtype=float).reshape(len(ok), len(tracked))
        med_ranks[lab] = {c: _median(ranks[:, i]) for i, c in enumerate(tracked)}
    return SummaryTable(labels, tracked, med_mms, med_ranks, len(records),
                        len(records) - len(ok), runtime, records)


def run_experiment(cfg: ExperimentConfig, parallelism: int | str | None = None) -> SummaryTable:
    """Run all replications and reduce them in index order.

    Raises :class:`ReplicationBudgetExceeded` when more than 5% of the
    replications fail.
    """
    workers = cfg.parallelism if parallelism is None else parallelism
    workers = -1 if workers in ("auto", "AUTO") else int(workers)
    start = time.perf_counter()
    if workers == 1:
        records = [run_replication(cfg, i) for i in range(cfg.reps)]
    else:
        records = Parallel(n_jobs=workers, backend="loky")(
            delayed(run_replication)(cfg, i) for i in range(cfg.reps))
    table = summarize(cfg, records, time.perf_counter() - start)
    for r in table.replications:
        if r["error"]:
            logger.warning("replication %d failed: %s", r["index"], r["error"])
    if table.failed > MAX_FAILED_FRACTION * cfg.reps:
        raise ReplicationBudgetExceeded(table.failed, cfg.reps, table)
    return table


def git_blob_hash(data: bytes) -> str:
    """Content hash in git's blob format (sha1 over ``"blob <len>\\0" + data``)."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def write_summary(cfg: ExperimentConfig, table: SummaryTable, out_dir: str | Path) -> list[Path]:
    """Write ``summary.{txt,csv,json}`` and ``replications.csv``.

    The files hold no timing information, so reruns are byte-identical.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config_echo = cfg.to_dict()
    config_bytes = json.dumps(config_echo, sort_keys=True).encode()
    provenance = {"config_hash": git_blob_hash(config_bytes)}
    if cfg.input_csv is not None:
        provenance["input_hash"] = git_blob_hash(Path(cfg.input_csv).read_bytes())
    doc = {
        "config": config_echo,
        "provenance": provenance,
        "tie_rule": TIE_RULE,
        "median_rule": "midpoint",
        "replications": table.reps,
        "failed": table.failed,
        "methods": {
            lab: {"median_mms": table.median_mms[lab], "median_ranks": table.median_ranks[lab]}
            for lab in table.labels
        },
    }
    paths = []
    p = out / "summary.json"
    p.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    paths.append(p)

    p = out / "summary.txt"
    p.write_text(table.to_text())
    paths.append(p)

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "median_mms"] + table.tracked)
    for lab in table.labels:
        w.writerow([lab, _fmt(table.median_mms[lab])] + [_fmt(table.median_ranks[lab][c]) for c in table.tracked])
    p = out / "summary.csv"
    p.write_text(buf.getvalue())
    paths.append(p)

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["replication", "seed", "method", "mms"] + table.tracked + ["error"])
    for r in table.replications:
        if r["error"]:
            w.writerow([r["index"], r["seed"], "", "", *[""] * len(table.tracked), r["error"]])
            continue
        for lab in table.labels:
            w.writerow([r["index"], r["seed"], lab, r["mms"][lab], *r["ranks"][lab], ""])
    p = out / "replications.csv"
    p.write_text(buf.getvalue())
    paths.append(p)
    return paths


def screen_csv(
    input_path: str | Path,
    response: str | int,
    h: int,
    horizon: int,
    cfg: ScreenConfig,
    out: str | Path | None = None,
    seed: int | None = None,
    n_resp_lags: int | None = None,
    time_index: bool | None = None,
) -> tuple[ScreenResult, dict]:
    """Screen a real panel; optionally write ``<out>.json`` and ``<out>.csv``."""
    panel = read_panel_csv(input_path, response, time_index)
    ds = build_lagged(panel, h, horizon, n_resp_lags)
    result = screen(ds, cfg, np.random.default_rng(seed))
    ranks = result.ranks()
    selected = set(result.selected.tolist())
    rows = []
    for j in result.ranking:
        k, l = ds.series_lag(int(j))
        rows.append({"rank": int(ranks[j]), "column": int(j), "series": panel.names[k], "lag": l,
                     "statistic": float(result.stats[j]), "selected": int(j) in selected})
    report = {
        "input": str(input_path),
        "input_hash": git_blob_hash(Path(input_path).read_bytes()),
        "response": panel.response_name,
        "h": h,
        "horizon": horizon,
        "n_effective": ds.n,
        "method": cfg.method.value,
        "estimator": cfg.estimator.value,
        "top_d": cfg.top_d,
        "threshold": cfg.threshold,
        "tie_rule": TIE_RULE,
        "selected": [r for r in rows if r["selected"]],
        "ranking": rows,
    }
    if result.threshold_used is not None:
        report["plus_threshold"] = result.threshold_used
        report["strong_sets"] = [[int(j) for j in s] for s in result.strong_sets]
    if out is not None:
        base = Path(out)
        base = base.with_suffix("") if base.suffix in (".json", ".csv") else base
        base.parent.mkdir(parents=True, exist_ok=True)
        base.with_suffix(".json").write_text(json.dumps(report, indent=2) + "\n")
        with open(base.with_suffix(".csv"), "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
    return result, report
