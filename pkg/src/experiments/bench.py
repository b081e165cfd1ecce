"""Empirical-error benchmark: coresets vs. full data over shared random queries.

For every epsilon and seed each sampling method builds a coreset, the
uniform baseline is matched to the first sampling method's pair count, and
every query is evaluated on full data and on each coreset. Errors are pooled
across seeds into one row per (epsilon, method).
"""

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from ..coresets.construction import CoresetConfig, CoresetMethod, build_coreset, uniform_coreset
from ..panel.dataset import PanelDataset
from ..regression.objectives import (
    GlseKQuery,
    GlseQuery,
    WeightedCoreset,
    coreset_glse_objective,
    coreset_glsek_objective,
    glse_total,
    glsek_total,
)
from ..regression.solver import SolverConfig, evaluate_fit, irls_glse_fit
from ..utils.config import config
from ..utils.errors import ValidationError

logger = logging.getLogger(__name__)

Query = Union[GlseQuery, GlseKQuery]
REPORT_FORMATS = ("json", "csv", "markdown")
OBJECTIVES = ("glse", "glsek")


@dataclass
class MethodRow:
    """Pooled statistics of one method at one epsilon."""
    dataset: str
    epsilon: float
    method: str
    size: float
    max_error: float
    avg_error: float
    std_error: float
    rmse: float
    construct_seconds: float
    coreset_eval_seconds: float
    full_eval_seconds: float
    seeds: int
    queries: int
    undefined: int = 0
    fit_coreset_seconds: Optional[float] = None
    fit_full_seconds: Optional[float] = None
    fit_ratio: Optional[float] = None
    errors: Optional[List[float]] = None


@dataclass
class BenchReport:
    rows: List[MethodRow] = field(default_factory=list)
    per_seed: List[Dict[str, Any]] = field(default_factory=list)
    metadata: Dict[str, Any] = field(default_factory=dict)


def empirical_error(ds: PanelDataset, coreset: WeightedCoreset, query: Query, q: int) -> Optional[float]:
    """|psi_S / psi - 1|, or None when the full objective is zero.

    GlseKQuery values are compared through the GLSE_k objectives.
    """
    if isinstance(query, GlseKQuery):
        full = glsek_total(ds, query, q)
        approx = coreset_glsek_objective(coreset, ds, query, q)
    else:
        full = glse_total(ds, query, q)
        approx = coreset_glse_objective(coreset, ds, query, q)
    if full == 0.0:
        return None
    return abs(approx / full - 1.0)


def error_stats(errors: Sequence[float]) -> Dict[str, float]:
    """max / avg / population std / RMSE, so rmse^2 = avg^2 + std^2."""
    arr = np.asarray(errors, dtype=np.float64)
    if arr.size == 0:
        nan = float("nan")
        return {"max_error": nan, "avg_error": nan, "std_error": nan, "rmse": nan}
    return {
        "max_error": float(arr.max()),
        "avg_error": float(arr.mean()),
        "std_error": float(arr.std()),
        "rmse": float(np.sqrt(np.mean(arr * arr))),
    }


def _evaluate(
    ds: PanelDataset,
    coreset: WeightedCoreset,
    queries: Sequence[Query],
    full_values: Sequence[float],
    q: int,
    pool: ThreadPoolExecutor
) -> List[Optional[float]]:
    def one(pair):
        query, full = pair
        if full == 0.0:
            return None
        if isinstance(query, GlseKQuery):
            approx = coreset_glsek_objective(coreset, ds, query, q)
        else:
            approx = coreset_glse_objective(coreset, ds, query, q)
        return abs(approx / full - 1.0)

    return list(pool.map(one, zip(queries, full_values)))


def run_benchmark(
    ds: PanelDataset,
    epsilons: Sequence[float],
    queries: Sequence[Query],
    methods: Sequence[str] = ("cglse", "uniform"),
    seeds: Sequence[int] = (0,),
    lam: float = 0.2,
    q: int = 1,
    delta: float = 0.1,
    k: int = 1,
    sizes: Optional[Dict[float, int]] = None,
    stage2_size: Optional[int] = None,
    fl_constant: Optional[float] = None,
    raw: bool = False,
    threads: Optional[int] = None,
    solve: bool = False,
    dataset_name: str = "dataset",
    objective: str = "glse"
) -> BenchReport:
    """Run the empirical-error protocol.

    Args:
        ds: Panel dataset
        epsilons: Error targets; one row per (epsilon, method)
        queries: Shared GlseQuery (objective="glse") or GlseKQuery values
        methods: Construction names from CoresetMethod; "uniform" is size-matched
        seeds: Construction seeds, pooled into each row
        lam, q, delta, k: Construction parameters
        sizes: Optional draw count per epsilon (size override)
        stage2_size: Optional per-individual draws for cglse-k
        fl_constant: Sample-size constant, configured default if None
        raw: Keep every per-query error in the rows
        threads: Worker count for query evaluation
        solve: Also time IRLS on each coreset and on full data
        dataset_name: Label carried into every row
        objective: "glse" or "glsek"

    Returns:
        BenchReport
    """
    if objective not in OBJECTIVES:
        raise ValidationError(f"objective must be one of {OBJECTIVES}, got {objective!r}")
    if not queries:
        raise ValidationError("benchmark needs at least one query")
    resolved = [CoresetMethod(m) for m in methods]
    sampling = [m for m in resolved if m is not CoresetMethod.UNIFORM]
    if CoresetMethod.UNIFORM in resolved and not sampling and not sizes:
        raise ValidationError("uniform-only benchmarks need explicit sizes")
    if solve and objective != "glse":
        raise ValidationError("IRLS timing is only available for the glse objective")

    pool = ThreadPoolExecutor(max_workers=threads or config.threads)
    try:
        start = time.perf_counter()
        if objective == "glsek":
            full_values = [glsek_total(ds, query, q) for query in queries]
        else:
            full_values = [glse_total(ds, query, q) for query in queries]
        full_seconds = time.perf_counter() - start
        logger.info(f"[BENCH] Full-data evaluation of {len(queries)} queries: {full_seconds:.3f}s")

        full_fit_seconds, full_fit_value = None, None
        if solve:
            start = time.perf_counter()
            full_fit = irls_glse_fit(ds, SolverConfig(lam=lam, q=q))
            full_fit_seconds = time.perf_counter() - start
            full_fit_value = evaluate_fit(ds, full_fit, q)

        report = BenchReport(metadata={
            "dataset": dataset_name,
            "objective": objective,
            "lam": lam,
            "q": q,
            "delta": delta,
            "k": k,
            "queries": len(queries),
            "seeds": list(seeds),
            "methods": [m.value for m in resolved],
            "full_eval_seconds": full_seconds,
        })

        for epsilon in epsilons:
            pooled: Dict[str, Dict[str, List]] = {
                m.value: {"errors": [], "sizes": [], "construct": [], "evaluate": [], "undefined": [], "fit": [], "ratio": []}
                for m in resolved
            }
            for seed in seeds:
                cfg = CoresetConfig(
                    epsilon=epsilon,
                    delta=delta,
                    lam=lam,
                    q=q,
                    k=k,
                    fl_constant=fl_constant,
                    size_override=(sizes or {}).get(epsilon),
                    stage2_size_override=stage2_size,
                    seed=seed,
                    threads=threads
                )
                matched = None
                # Uniform runs last so it can match the sampled pair count
                for method in sorted(resolved, key=lambda m: m is CoresetMethod.UNIFORM):
                    start = time.perf_counter()
                    if method is CoresetMethod.UNIFORM:
                        size = matched if matched is not None else cfg.size_override
                        if size is None:
                            raise ValidationError(f"no uniform size for epsilon={epsilon}")
                        support = ds.observed_count
                        if size > support:
                            logger.warning(f"[BENCH] Uniform size {size} clamped to observed pairs {support}")
                            size = support
                        coreset = uniform_coreset(ds, size, seed)
                    else:
                        coreset = build_coreset(ds, method, cfg)
                        if matched is None:
                            matched = coreset.size
                    construct = time.perf_counter() - start

                    start = time.perf_counter()
                    errors = _evaluate(ds, coreset, queries, full_values, q, pool)
                    evaluate = time.perf_counter() - start

                    defined = [e for e in errors if e is not None]
                    bucket = pooled[method.value]
                    bucket["errors"].extend(defined)
                    bucket["sizes"].append(coreset.size)
                    bucket["construct"].append(construct)
                    bucket["evaluate"].append(evaluate)
                    bucket["undefined"].append(len(errors) - len(defined))

                    entry = {
                        "epsilon": epsilon,
                        "method": method.value,
                        "seed": seed,
                        "size": coreset.size,
                        "construct_seconds": construct,
                        "coreset_eval_seconds": evaluate,
                        **error_stats(defined),
                    }
                    if raw:
                        entry["errors"] = defined
                    if solve:
                        start = time.perf_counter()
                        fit = irls_glse_fit(ds, SolverConfig(lam=lam, q=q), coreset=coreset)
                        bucket["fit"].append(time.perf_counter() - start)
                        ratio = evaluate_fit(ds, fit, q) / full_fit_value if full_fit_value else float("nan")
                        bucket["ratio"].append(ratio)
                        entry["fit_ratio"] = ratio
                    report.per_seed.append(entry)
                    logger.debug(f"[BENCH] eps={epsilon} {method.value} seed={seed}: size={coreset.size}")

            for method in resolved:
                bucket = pooled[method.value]
                row = MethodRow(
                    dataset=dataset_name,
                    epsilon=epsilon,
                    method=method.value,
                    size=float(np.mean(bucket["sizes"])),
                    construct_seconds=float(np.mean(bucket["construct"])),
                    coreset_eval_seconds=float(np.mean(bucket["evaluate"])),
                    full_eval_seconds=full_seconds,
                    seeds=len(seeds),
                    queries=len(queries),
                    undefined=int(np.sum(bucket["undefined"])),
                    errors=list(bucket["errors"]) if raw else None,
                    **error_stats(bucket["errors"])
                )
                if solve:
                    row.fit_coreset_seconds = float(np.mean(bucket["fit"]))
                    row.fit_full_seconds = full_fit_seconds
                    row.fit_ratio = float(np.mean(bucket["ratio"]))
                report.rows.append(row)
                logger.info(
                    f"[BENCH] eps={epsilon} {method.value}: max={row.max_error:.4f} avg={row.avg_error:.4f} "
                    f"rmse={row.rmse:.4f} size={row.size:.0f}"
                )
    finally:
        pool.shutdown()
    return report


def _markdown(report: BenchReport) -> str:
    methods = report.metadata.get("methods") or sorted({r.method for r in report.rows})
    by_key = {(r.dataset, r.epsilon, r.method): r for r in report.rows}
    lead = methods[0]

    header = ["dataset", "ε"]
    header += [f"max ({m})" for m in methods]
    header += [f"avg/std/RMSE ({m})" for m in methods]
    header += ["size", "T_C", "T_C+T_S", "T_X"]
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]

    keys = sorted({(r.dataset, r.epsilon) for r in report.rows})
    for dataset, epsilon in keys:
        rows = [by_key.get((dataset, epsilon, m)) for m in methods]
        cells = [dataset, f"{epsilon:g}"]
        cells += [f"{r.max_error:.4f}" if r else "" for r in rows]
        cells += [f"{r.avg_error:.4f}/{r.std_error:.4f}/{r.rmse:.4f}" if r else "" for r in rows]
        main = by_key.get((dataset, epsilon, lead))
        cells += [
            f"{main.size:.0f}",
            f"{main.construct_seconds:.3f}",
            f"{main.construct_seconds + main.coreset_eval_seconds:.3f}",
            f"{main.full_eval_seconds:.3f}",
        ]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def raw_errors_path(path: Union[str, Path]) -> Path:
    """Sidecar holding per-query errors next to a csv report."""
    path = Path(path)
    return path.with_name(f"{path.stem}.errors.csv")


def emit_report(report: BenchReport, path: Union[str, Path], fmt: str = "json") -> None:
    """Write a report as json (lossless), csv (one row per dataset/epsilon/method) or markdown.

    A csv report of a raw run also writes raw_errors_path(path) in long
    format, one ``epsilon,method,seed,error`` row per defined query error.

    Raises:
        ValidationError: Unknown format
    """
    if fmt not in REPORT_FORMATS:
        raise ValidationError(f"format must be one of {REPORT_FORMATS}, got {fmt!r}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    if fmt == "json":
        with open(path, "w", encoding="utf-8") as f:
            json.dump(asdict(report), f, indent=2)
    elif fmt == "csv":
        frame = pd.DataFrame([{k: v for k, v in asdict(r).items() if k != "errors"} for r in report.rows])
        frame.to_csv(path, index=False)
        long = [
            {"epsilon": entry["epsilon"], "method": entry["method"], "seed": entry["seed"], "error": error}
            for entry in report.per_seed
            for error in entry.get("errors") or []
        ]
        if any("errors" in entry for entry in report.per_seed):
            errors_path = raw_errors_path(path)
            pd.DataFrame(long, columns=["epsilon", "method", "seed", "error"]).to_csv(errors_path, index=False)
            logger.info(f"[BENCH] Wrote {len(long)} per-query errors to {errors_path}")
    else:
        path.write_text(_markdown(report), encoding="utf-8")
    logger.info(f"[BENCH] Wrote {fmt} report to {path}")


def read_report(path: Union[str, Path]) -> BenchReport:
    """Load a report written with fmt="json"."""
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    return BenchReport(
        rows=[MethodRow(**row) for row in data.get("rows", [])],
        per_seed=data.get("per_seed", []),
        metadata=data.get("metadata", {}),
    )
