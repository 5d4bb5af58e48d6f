"""Acceptance criteria, one test each; every test prints a PASS/FAIL line.

The Monte Carlo criteria use the full-size designs (m = 500 series, h = 3
lags so p = 1500 columns, n = 200) and take several minutes on one core.
"""
import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from pdcscreen.cli import main
from pdcscreen.harness import ExperimentConfig, run_experiment
from pdcscreen.lagged import build_lagged
from pdcscreen.screening import ScreenConfig, pdcsis_plus_stats, pdcsis_stats, screen
from pdcscreen.simulate import ModelSpec, gen_model

from test_dcor import check_instance, random_instance

HERE = Path(__file__).parent


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {n}] {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail
    return emit


def experiment(model, methods, reps, seed, **model_kw):
    cfg = ExperimentConfig.from_dict({
        "model": {"model_id": model, "m": 500, "n": 200, **model_kw},
        "methods": methods, "reps": reps, "master_seed": seed, "parallelism": 1})
    return run_experiment(cfg)


@pytest.fixture(scope="module")
def model2():
    return experiment(2, ["dcsis", "pdcsis", "pdcsis-plus"], 100, 2002, h=3)


def test_criterion_1_oracle_suite(report):
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    for _ in range(50):
        check_instance(*random_instance(rng), tol=1e-10)
    took = time.perf_counter() - start
    report(1, took < 10.0, f"50 oracle instances agree to 1e-10 in {took:.2f}s (< 10s)")


def test_criterion_2_reductions(report):
    ok_dc = ok_plus = 0
    for seed in range(20):
        panel, _ = gen_model(ModelSpec(2, m=100, n=200), seed=seed)
        ds = build_lagged(panel, 3)
        ok_dc += all(
            np.array_equal(pdcsis_stats(ds, ScreenConfig("pdcsis", estimator=k, condition=False)).ranking,
                           screen(ds, ScreenConfig("dcsis", estimator=k)).ranking)
            for k in ("u", "v"))
        plus0 = pdcsis_plus_stats(ds, ScreenConfig("pdcsis-plus", plus_cap=0), np.random.default_rng(seed))
        plain = pdcsis_stats(ds, ScreenConfig("pdcsis"))
        ok_plus += np.array_equal(plus0.ranking, plain.ranking) and np.array_equal(plus0.stats, plain.stats)
    report(2, ok_dc == 20 and ok_plus == 20,
           f"empty conditioning = DC-SIS on {ok_dc}/20, cap 0 = PDC-SIS on {ok_plus}/20")


def test_criterion_3_model1(report):
    t = experiment(1, ["sis", "pdcsis"], 100, 1001, h=3)
    p, s = t.median_mms["pdcsis"], t.median_mms["sis"]
    report(3, 4 <= p <= 20 and 5 <= s <= 25,
           f"model 1 median MMS: PDC-SIS {p} in [4, 20], SIS {s} in [5, 25]")


def test_criterion_4_model2_pdcsis_vs_dcsis(report, model2):
    p, d = model2.median_mms["pdcsis"], model2.median_mms["dcsis"]
    rp, rd = model2.median_ranks["pdcsis"]["X1[t-2]"], model2.median_ranks["dcsis"]["X1[t-2]"]
    report(4, p < d and p / d < 0.5 and rp < rd,
           f"model 2 median MMS PDC-SIS {p} vs DC-SIS {d} (ratio {p / d:.3f} < 0.5); "
           f"median rank of X1[t-2] {rp} vs {rd}")


def test_criterion_5_model2_plus(report, model2):
    q, p = model2.median_mms["pdcsis-plus"], model2.median_mms["pdcsis"]
    report(5, q < p, f"model 2 median MMS PDC-SIS+ {q} < PDC-SIS {p}")


def test_criterion_6_model5_t5(report):
    t = experiment(5, ["pdcsis", "pdcsis-plus"], 100, 5005, h=3, dist="t5")
    q, p = t.median_mms["pdcsis-plus"], t.median_mms["pdcsis"]
    report(6, q <= p, f"model 5 (t5) median MMS PDC-SIS+ {q} <= PDC-SIS {p}")


def test_criterion_7_model6_groups(report):
    t = experiment(6, ["group-pdcsis", "group-dcsis"], 50, 6006, h=2, scenario=1, sigma_sign=1)
    g, d = t.median_mms["group-pdcsis"], t.median_mms["group-dcsis"]
    report(7, g < d, f"model 6 scenario 1 median MMS group PDC-SIS {g} < group DC-SIS {d}")


def test_criterion_8_bench_parallel_identical(report, tmp_path):
    cfg = {"model": {"model_id": 2, "m": 100, "n": 200, "h": 3},
           "methods": ["sis", "dcsis", "pdcsis", {"method": "pdcsis-plus", "decoy_count": 200}],
           "reps": 8, "master_seed": 8008}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    for par in ("1", "8"):
        assert main(["bench", "--config", str(path), "--out-dir", str(tmp_path / par),
                     "--parallelism", par]) == 0
    names = sorted(p.name for p in (tmp_path / "1").iterdir())
    same = all((tmp_path / "1" / n).read_bytes() == (tmp_path / "8" / n).read_bytes() for n in names)
    report(8, same and len(names) == 4, f"bench outputs {names} byte-identical at parallelism 1 and 8")


PROPERTY_TESTS = [
    "test_dcor.py::test_symmetry",
    "test_dcor.py::test_scale_shift_invariance",
    "test_screening.py::test_affine_invariance_of_ranking",
    "test_screening.py::test_group_permutation_invariance",
    "test_screening.py::test_cache_vs_naive_property",
    "test_simulate.py::test_burnin_arithmetic",
    "test_simulate.py::test_t_scaling_variance",
]


def test_criterion_9_property_suite(report):
    start = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
                           *(str(HERE / t) for t in PROPERTY_TESTS)],
                          capture_output=True, text=True, cwd=HERE)
    took = time.perf_counter() - start
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    report(9, proc.returncode == 0 and took < 300, f"property suite ({tail}) in {took:.1f}s (< 300s)")
