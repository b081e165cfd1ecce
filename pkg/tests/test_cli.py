"""Tests for the panel-coreset command line."""

import sys
import os

import pytest

# Add parent directory to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.cli import main


def _gen(tmp_path, name="panel.csv", seed=0):
    path = tmp_path / name
    code = main(["gen", "--N", "6", "--T", "5", "--d", "2", "--seed", str(seed), "--out", str(path)])
    assert code == 0
    return path


def _values(text):
    return dict(line.split("=", 1) for line in text.splitlines() if "=" in line)


def test_gen_is_deterministic(tmp_path, capsys):
    first = _gen(tmp_path, "a.csv", seed=3)
    second = _gen(tmp_path, "b.csv", seed=3)
    assert first.read_bytes() == second.read_bytes()
    assert (tmp_path / "a.csv.truth.txt").exists()
    assert "dataset=" in capsys.readouterr().out


def test_coreset_eval_and_solve(tmp_path, capsys):
    data = _gen(tmp_path)
    coreset = tmp_path / "coreset.csv"
    assert main(["coreset", "--in", str(data), "--method", "cglse", "--size", "12", "--out", str(coreset)]) == 0
    out = _values(capsys.readouterr().out)
    assert out["method"] == "cglse"
    assert out["M"] == "12"
    assert coreset.exists()

    assert main(["eval", "--in", str(data), "--coreset", str(coreset), "--queries", "5"]) == 0
    out = _values(capsys.readouterr().out)
    assert {"max_error", "avg_error", "std_error", "rmse", "undefined"} <= set(out)

    report = tmp_path / "fit.txt"
    assert main(["solve", "--in", str(data), "--coreset", str(coreset), "--out", str(report)]) == 0
    out = _values(capsys.readouterr().out)
    assert len(out["beta"].split(",")) == 2
    assert report.exists()


def test_coreset_flag_mismatches_are_validation_errors(tmp_path):
    data = _gen(tmp_path)
    assert main(["coreset", "--in", str(data), "--method", "cglse", "--k", "2", "--size", "5"]) == 1
    assert main(["coreset", "--in", str(data), "--method", "uniform"]) == 1
    assert main(["coreset", "--in", str(data), "--epsilon", "1.5", "--size", "5"]) == 1


def test_cglse_k_command(tmp_path, capsys):
    data = _gen(tmp_path)
    out_path = tmp_path / "k.csv"
    code = main([
        "coreset", "--in", str(data), "--method", "cglse-k", "--k", "2", "--size", "4",
        "--stage2-size", "3", "--out", str(out_path)
    ])
    assert code == 0
    assert _values(capsys.readouterr().out)["method"] == "cglse-k"


def test_bench_command(tmp_path, capsys):
    data = _gen(tmp_path)
    report = tmp_path / "bench.md"
    code = main([
        "bench", "--in", str(data), "--epsilons", "0.2,0.3", "--queries", "4", "--seeds", "2",
        "--size", "10", "--format", "markdown", "--out", str(report)
    ])
    assert code == 0
    assert report.read_text(encoding="utf-8").startswith("| dataset | ε |")
    capsys.readouterr()

    raw_report = tmp_path / "bench.csv"
    code = main([
        "bench", "--in", str(data), "--epsilons", "0.2", "--queries", "3", "--size", "10", "--raw",
        "--format", "csv", "--out", str(raw_report)
    ])
    assert code == 0
    assert _values(capsys.readouterr().out)["errors"] == str(tmp_path / "bench.errors.csv")
    assert (tmp_path / "bench.errors.csv").read_text(encoding="utf-8").startswith("epsilon,method,seed,error")
    assert main(["bench", "--in", str(data), "--methods", "cglse,bogus", "--size", "5"]) == 1


def test_lowerbound_command(capsys):
    assert main(["lowerbound", "--N", "5"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert sum(line.endswith("OK") for line in lines) == 5
    assert main(["lowerbound", "--N", "16"]) == 1


def test_bad_arguments_and_missing_files(tmp_path):
    assert main(["gen", "--bogus"]) == 1
    assert main([]) == 1
    assert main(["bench", "--in", "x.csv", "--epsilons", "a,b"]) == 1
    assert main(["solve", "--in", str(tmp_path / "missing.csv")]) == 2

def test_eval_rejects_malformed_coreset_rows(tmp_path, capsys):
    data = _gen(tmp_path)
    first_id = data.read_text(encoding="utf-8").splitlines()[1].split(",")[0]
    rows = {
        "text_id": "abc,1,2.0",
        "fractional_period": f"{first_id},1.7,2.0",
        "text_weight": f"{first_id},1,heavy",
        "infinite_weight": f"{first_id},1,inf",
    }
    for name, row in rows.items():
        path = tmp_path / f"{name}.csv"
        path.write_text(f"# method=uniform\n# draws=1\ni,t,weight\n{row}\n", encoding="utf-8")
        assert main(["eval", "--in", str(data), "--coreset", str(path), "--queries", "2"]) == 1, name
        assert "line 4" in capsys.readouterr().err, name



if __name__ == "__main__":
    print("Run with pytest: tests/test_cli.py uses the tmp_path and capsys fixtures")
