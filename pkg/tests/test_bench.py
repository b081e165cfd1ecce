"""Tests for the empirical-error benchmark and report output."""

import sys
import os
import json
import tempfile

import numpy as np
import pandas as pd
import pytest

# Add parent directory to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.experiments.bench import (
    BenchReport,
    MethodRow,
    emit_report,
    empirical_error,
    error_stats,
    raw_errors_path,
    read_report,
    run_benchmark,
)
from src.experiments.datagen import ErrorDistribution, GenConfig, random_k_query, random_query, synthetic_panel
from src.panel.dataset import PanelDataset
from src.regression.objectives import GlseQuery, WeightedCoreset
from src.utils.errors import ValidationError
from src.utils.rng import make_rng


def _setup(seed=0, n=10, t=6, d=2, count=10):
    ds, _, _ = synthetic_panel(GenConfig(n_individuals=n, n_periods=t, n_features=d, seed=seed))
    rng = make_rng(seed, "queries")
    return ds, [random_query(d, 1, 0.2, rng) for _ in range(count)]


def test_empirical_error():
    ds, queries = _setup()
    full = WeightedCoreset.full(ds)
    assert empirical_error(ds, full, queries[0], 1) == pytest.approx(0.0, abs=1e-12)

    doubled = WeightedCoreset.from_draws(full.individuals, full.periods, 2.0 * full.weights)
    assert empirical_error(ds, doubled, queries[0], 1) == pytest.approx(1.0)

    exact = PanelDataset.from_arrays(np.ones((2, 2, 1)), np.full((2, 2), 3.0))
    query = GlseQuery(np.array([3.0]), np.array([0.1]))
    assert empirical_error(exact, WeightedCoreset.full(exact), query, 1) is None


def test_error_stats():
    stats = error_stats([0.3, 0.4])
    assert stats["max_error"] == pytest.approx(0.4)
    assert stats["avg_error"] == pytest.approx(0.35)
    assert stats["std_error"] == pytest.approx(0.05)
    assert stats["rmse"] == pytest.approx(0.35355, abs=1e-5)

    errors = np.random.default_rng(0).uniform(size=50)
    stats = error_stats(errors)
    assert stats["rmse"] ** 2 == pytest.approx(stats["avg_error"] ** 2 + stats["std_error"] ** 2)
    assert np.isnan(error_stats([])["max_error"])


def test_full_size_uniform_has_zero_error():
    ds, queries = _setup()
    report = run_benchmark(ds, [0.2], queries, methods=("uniform",), sizes={0.2: ds.n_pairs}, seeds=(0, 1))
    assert len(report.rows) == 1
    row = report.rows[0]
    assert row.size == ds.n_pairs
    assert row.max_error == pytest.approx(0.0, abs=1e-12)
    assert row.seeds == 2
    assert row.queries == len(queries)


def test_uniform_matches_sampled_size():
    ds, queries = _setup(seed=1)
    report = run_benchmark(ds, [0.2, 0.3], queries, methods=("cglse", "uniform"), sizes={0.2: 30, 0.3: 20}, seeds=(0, 1, 2), raw=True)
    assert [(r.epsilon, r.method) for r in report.rows] == [
        (0.2, "cglse"), (0.2, "uniform"), (0.3, "cglse"), (0.3, "uniform")
    ]
    by_seed = {}
    for entry in report.per_seed:
        by_seed.setdefault((entry["epsilon"], entry["seed"]), {})[entry["method"]] = entry["size"]
    for sizes in by_seed.values():
        assert sizes["uniform"] == sizes["cglse"]
    assert len(report.rows[0].errors) == 3 * len(queries)


def test_benchmark_validation():
    ds, queries = _setup()
    with pytest.raises(ValidationError):
        run_benchmark(ds, [0.2], queries, methods=("uniform",))
    with pytest.raises(ValidationError):
        run_benchmark(ds, [0.2], [], sizes={0.2: 5})
    with pytest.raises(ValidationError):
        run_benchmark(ds, [0.2], queries, objective="olse", sizes={0.2: 5})


def test_glsek_objective_benchmark():
    ds, _ = _setup(seed=2, n=12, t=6, d=2)
    rng = make_rng(2, "kqueries")
    queries = [random_k_query(2, 1, 0.2, 2, rng) for _ in range(5)]
    report = run_benchmark(
        ds, [0.3], queries, methods=("cglse-k", "uniform"), k=2, sizes={0.3: 6}, stage2_size=4, objective="glsek"
    )
    assert {r.method for r in report.rows} == {"cglse-k", "uniform"}
    assert all(np.isfinite(r.max_error) for r in report.rows)


def test_solve_records_fit_ratio():
    ds, queries = _setup(seed=3, n=8, t=6)
    report = run_benchmark(ds, [0.2], queries[:3], methods=("cglse",), sizes={0.2: 30}, solve=True)
    row = report.rows[0]
    assert row.fit_full_seconds is not None
    assert np.isfinite(row.fit_ratio)


def test_heavy_tails_favour_sensitivity_sampling():
    """Cauchy errors: CGLSE beats uniform on max error and RMSE for >= 90% of 20 seeds, seed by seed."""
    ds, _, _ = synthetic_panel(
        GenConfig(n_individuals=100, n_periods=50, n_features=5, error_dist=ErrorDistribution.CAUCHY, seed=4)
    )
    rng = make_rng(4, "queries")
    queries = [random_query(5, 1, 0.2, rng) for _ in range(100)]
    report = run_benchmark(ds, [0.2], queries, sizes={0.2: 500}, seeds=range(20))

    by_seed = {(entry["seed"], entry["method"]): entry for entry in report.per_seed}
    wins_max = sum(by_seed[(s, "cglse")]["max_error"] < by_seed[(s, "uniform")]["max_error"] for s in range(20))
    wins_rmse = sum(by_seed[(s, "cglse")]["rmse"] < by_seed[(s, "uniform")]["rmse"] for s in range(20))
    assert wins_max >= 18
    assert wins_rmse >= 18


def test_emit_and_read_reports():
    ds, queries = _setup(seed=5)
    report = run_benchmark(ds, [0.25], queries, sizes={0.25: 20}, dataset_name="toy")
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "report.json")
        emit_report(report, path, "json")
        loaded = read_report(path)
        assert [row.method for row in loaded.rows] == ["cglse", "uniform"]
        assert loaded.rows[0].max_error == report.rows[0].max_error
        assert loaded.metadata["dataset"] == "toy"

        csv_path = os.path.join(tmp, "report.csv")
        emit_report(report, csv_path, "csv")
        frame = pd.read_csv(csv_path)
        assert len(frame) == 2
        assert {"dataset", "epsilon", "method", "rmse"} <= set(frame.columns)

        md_path = os.path.join(tmp, "report.md")
        emit_report(report, md_path, "markdown")
        with open(md_path, encoding="utf-8") as f:
            lines = f.read().splitlines()
        assert lines[0].startswith("| dataset | ε | max (cglse) | max (uniform)")
        assert lines[2].startswith("| toy | 0.25 |")

        with pytest.raises(ValidationError):
            emit_report(report, md_path, "xml")

def test_raw_csv_report_writes_per_query_errors():
    ds, queries = _setup(seed=6, count=5)
    raw = run_benchmark(ds, [0.2, 0.3], queries, sizes={0.2: 15, 0.3: 10}, seeds=(0, 1), raw=True)
    with tempfile.TemporaryDirectory() as tmp:
        csv_path = os.path.join(tmp, "bench.csv")
        emit_report(raw, csv_path, "csv")
        errors_path = raw_errors_path(csv_path)
        assert errors_path.name == "bench.errors.csv"
        frame = pd.read_csv(errors_path)
        assert list(frame.columns) == ["epsilon", "method", "seed", "error"]
        assert set(frame["seed"]) == {0, 1}
        assert set(frame["method"]) == {"cglse", "uniform"}
        for row in raw.rows:
            pooled = frame[(frame["epsilon"] == row.epsilon) & (frame["method"] == row.method)]["error"]
            assert np.allclose(np.sort(pooled.to_numpy()), np.sort(row.errors))

        plain = run_benchmark(ds, [0.2], queries, sizes={0.2: 15})
        other = os.path.join(tmp, "plain.csv")
        emit_report(plain, other, "csv")
        assert not raw_errors_path(other).exists()



def test_report_round_trip_keeps_optional_fields():
    row = MethodRow(
        dataset="d", epsilon=0.1, method="cglse", size=10.0, max_error=0.2, avg_error=0.1, std_error=0.05,
        rmse=0.11, construct_seconds=0.01, coreset_eval_seconds=0.02, full_eval_seconds=0.5, seeds=1,
        queries=4, errors=[0.1, 0.2, 0.05, 0.05]
    )
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "r.json")
        emit_report(BenchReport(rows=[row]), path)
        with open(path, encoding="utf-8") as f:
            assert json.load(f)["rows"][0]["errors"] == [0.1, 0.2, 0.05, 0.05]
        assert read_report(path).rows[0] == row


if __name__ == "__main__":
    test_error_stats()
    test_full_size_uniform_has_zero_error()
    test_uniform_matches_sampled_size()
    print("[OK] bench tests passed")
