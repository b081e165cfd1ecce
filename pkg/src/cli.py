"""Command-line front end: gen, coreset, eval, solve, bench, lowerbound.

Exit codes: 0 on success, 1 on validation errors (including bad flags),
2 on runtime errors.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from .coresets.construction import (
    CoresetConfig,
    CoresetMethod,
    build_coreset,
    read_coreset,
    write_coreset,
)
from .experiments.bench import emit_report, error_stats, empirical_error, raw_errors_path, run_benchmark, REPORT_FORMATS
from .experiments.datagen import (
    ErrorDistribution,
    GenConfig,
    certificate_shares,
    half_approximation_violations,
    lower_bound_instance,
    random_k_query,
    random_query,
    synthetic_panel,
    truth_metadata,
    write_truth,
)
from .panel.dataset import load_csv, write_csv
from .regression.objectives import WeightedCoreset
from .regression.solver import SolverConfig, irls_glse_fit, write_fit_report
from .utils.config import LOG_LEVELS, config
from .utils.errors import PanelCoresetError, ValidationError
from .utils.rng import make_rng

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


class CliArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that raises ValidationError instead of exiting."""

    def error(self, message: str):
        raise ValidationError(f"{self.prog}: {message}")


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="RNG seed")
    common.add_argument("--threads", type=int, default=config.threads, help="Worker pool size")
    common.add_argument("--output", "--out", dest="output", default=None, help="Output file path")
    common.add_argument("--log-level", default=config.log_level, choices=LOG_LEVELS, help="Logging level")
    return common


def _regression_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--lambda", dest="lam", type=float, default=0.2, help="Margin lambda in (0, 1)")
    parser.add_argument("--q", type=int, default=1, help="Autoregression order")


def build_parser() -> CliArgumentParser:
    common = _common()
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = CliArgumentParser(prog="panel-coreset", description="Coresets for GLSE regression on panel data", formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", parents=[common], formatter_class=fmt, help="Generate a synthetic panel")
    gen.add_argument("--N", type=int, default=500, help="Individuals")
    gen.add_argument("--T", type=int, default=500, help="Time periods")
    gen.add_argument("--d", type=int, default=10, help="Features")
    _regression_args(gen)
    gen.add_argument("--dist", choices=[e.value for e in ErrorDistribution], default="gaussian", help="Innovation distribution")
    gen.add_argument("--noise-scale", type=float, default=1.0, help="Innovation multiplier")
    gen.add_argument("--no-intercept", action="store_true", help="Do not fix the last feature to 1")

    coreset = sub.add_parser("coreset", parents=[common], formatter_class=fmt, help="Build a coreset")
    coreset.add_argument("--in", dest="input", required=True, help="Dataset CSV")
    coreset.add_argument("--method", choices=[m.value for m in CoresetMethod], default="cglse", help="Construction")
    coreset.add_argument("--epsilon", type=float, default=0.2, help="Target error")
    coreset.add_argument("--delta", type=float, default=0.1, help="Failure probability")
    _regression_args(coreset)
    coreset.add_argument("--k", type=int, default=None, help="Parameter tuples (cglse-k only, default 1)")
    coreset.add_argument("--size", type=int, default=None, help="Draw count override")
    coreset.add_argument("--stage2-size", type=int, default=None, help="Per-individual draws (cglse-k)")
    coreset.add_argument("--fl-constant", type=float, default=None, help="Sample-size constant (default from config)")

    evaluate = sub.add_parser("eval", parents=[common], formatter_class=fmt, help="Empirical errors of a stored coreset")
    evaluate.add_argument("--in", dest="input", required=True, help="Dataset CSV")
    evaluate.add_argument("--coreset", required=True, help="Coreset CSV")
    _regression_args(evaluate)
    evaluate.add_argument("--k", type=int, default=1, help="Parameter tuples per query")
    evaluate.add_argument("--queries", type=int, default=100, help="Random queries")

    solve = sub.add_parser("solve", parents=[common], formatter_class=fmt, help="Fit GLSE by IRLS")
    solve.add_argument("--in", dest="input", required=True, help="Dataset CSV")
    solve.add_argument("--coreset", default=None, help="Fit on this coreset instead of full data")
    _regression_args(solve)
    solve.add_argument("--max-iter", type=int, default=50, help="Iteration cap")
    solve.add_argument("--tol", type=float, default=1e-8, help="Relative improvement threshold")

    bench = sub.add_parser("bench", parents=[common], formatter_class=fmt, help="Empirical-error benchmark")
    bench.add_argument("--in", dest="input", required=True, help="Dataset CSV")
    bench.add_argument("--epsilons", type=_float_list, default=[0.1, 0.2, 0.3, 0.4, 0.5], help="Comma-separated epsilons")
    bench.add_argument("--queries", type=int, default=100, help="Random queries")
    bench.add_argument("--seeds", type=int, default=1, help="Construction seeds per epsilon, starting at --seed")
    bench.add_argument("--methods", default="cglse,uniform", help="Comma-separated methods")
    bench.add_argument("--delta", type=float, default=0.1, help="Failure probability")
    _regression_args(bench)
    bench.add_argument("--k", type=int, default=1, help="Parameter tuples (glsek objective)")
    bench.add_argument("--objective", choices=["glse", "glsek"], default="glse", help="Objective to benchmark")
    bench.add_argument("--size", type=int, default=None, help="Draw count override for every epsilon")
    bench.add_argument("--stage2-size", type=int, default=None, help="Per-individual draws (cglse-k)")
    bench.add_argument("--fl-constant", type=float, default=None, help="Sample-size constant (default from config)")
    bench.add_argument("--raw", action="store_true", help="Keep per-query errors in the report")
    bench.add_argument("--solve", action="store_true", help="Also time IRLS on coresets and full data")
    bench.add_argument("--format", choices=REPORT_FORMATS, default="json", help="Report format")

    lower = sub.add_parser("lowerbound", parents=[common], formatter_class=fmt, help="Check the sensitivity lower-bound instance")
    lower.add_argument("--N", type=int, default=10, help="Individuals (1..15)")
    lower.add_argument("--q", type=int, default=1, help="Autoregression order")

    return parser


def _output(args, default_name: str) -> Path:
    return Path(args.output) if args.output else Path(config.data_dir) / default_name


def cmd_gen(args) -> int:
    cfg = GenConfig(
        n_individuals=args.N,
        n_periods=args.T,
        n_features=args.d,
        q=args.q,
        lam=args.lam,
        error_dist=ErrorDistribution(args.dist),
        intercept=not args.no_intercept,
        noise_scale=args.noise_scale,
        seed=args.seed
    )
    ds, beta, rho = synthetic_panel(cfg)
    out = _output(args, "synthetic.csv")
    write_csv(ds, out)
    truth = out.with_name(out.name + ".truth.txt")
    write_truth(truth, truth_metadata(cfg, beta, rho))
    print(f"dataset={out}")
    print(f"truth={truth}")
    return 0


def cmd_coreset(args) -> int:
    method = CoresetMethod(args.method)
    if args.k is not None and method is not CoresetMethod.CGLSE_K:
        raise ValidationError(f"--k only applies to --method cglse-k, got {method.value}")
    if method is CoresetMethod.UNIFORM and args.size is None:
        raise ValidationError("--method uniform needs --size")
    cfg = CoresetConfig(
        epsilon=args.epsilon,
        delta=args.delta,
        lam=args.lam,
        q=args.q,
        k=args.k or 1,
        fl_constant=args.fl_constant,
        size_override=args.size,
        stage2_size_override=args.stage2_size,
        seed=args.seed,
        threads=args.threads
    )
    ds = load_csv(args.input)
    coreset = build_coreset(ds, method, cfg)
    out = _output(args, f"coreset_{method.value}.csv")
    write_coreset(coreset, ds, out)
    meta = coreset.metadata
    print(f"method={method.value}")
    print(f"M={meta.get('draws')}")
    print(f"G={meta.get('total_sensitivity', 'n/a')}")
    print(f"pairs={coreset.size}")
    print(f"coreset={out}")
    return 0


def cmd_eval(args) -> int:
    ds = load_csv(args.input)
    coreset = read_coreset(args.coreset, ds)
    rng = make_rng(args.seed, "eval")
    errors, undefined = [], 0
    for _ in range(args.queries):
        if args.k > 1:
            query = random_k_query(ds.n_features, args.q, args.lam, args.k, rng)
        else:
            query = random_query(ds.n_features, args.q, args.lam, rng)
        err = empirical_error(ds, coreset, query, args.q)
        if err is None:
            undefined += 1
        else:
            errors.append(err)
    stats = error_stats(errors)
    for key, value in stats.items():
        print(f"{key}={value:.6g}")
    print(f"undefined={undefined}")
    if args.output:
        out = Path(args.output)
        out.parent.mkdir(parents=True, exist_ok=True)
        np.savetxt(out, np.asarray(errors), header="error", comments="", fmt="%.17g")
    return 0


def cmd_solve(args) -> int:
    ds = load_csv(args.input)
    coreset: Optional[WeightedCoreset] = read_coreset(args.coreset, ds) if args.coreset else None
    cfg = SolverConfig(lam=args.lam, q=args.q, max_iterations=args.max_iter, tolerance=args.tol)
    fit = irls_glse_fit(ds, cfg, coreset=coreset)
    if args.output:
        write_fit_report(fit, args.output)
    print(f"beta={','.join(f'{b:.10g}' for b in fit.beta)}")
    print(f"rho={','.join(f'{r:.10g}' for r in fit.rho)}")
    print(f"objective={fit.objective:.10g}")
    print(f"iterations={fit.iterations}")
    print(f"converged={str(fit.converged).lower()}")
    return 0


def cmd_bench(args) -> int:
    if args.queries < 1 or args.seeds < 1:
        raise ValidationError("--queries and --seeds must be >= 1")
    ds = load_csv(args.input)
    rng = make_rng(args.seed, "bench-queries")
    if args.objective == "glsek":
        queries = [random_k_query(ds.n_features, args.q, args.lam, args.k, rng) for _ in range(args.queries)]
    else:
        queries = [random_query(ds.n_features, args.q, args.lam, rng) for _ in range(args.queries)]
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    try:
        [CoresetMethod(m) for m in methods]
    except ValueError as e:
        raise ValidationError(f"--methods: {e}")
    sizes = {eps: args.size for eps in args.epsilons} if args.size else None

    report = run_benchmark(
        ds,
        epsilons=args.epsilons,
        queries=queries,
        methods=methods,
        seeds=list(range(args.seed, args.seed + args.seeds)),
        lam=args.lam,
        q=args.q,
        delta=args.delta,
        k=args.k,
        sizes=sizes,
        stage2_size=args.stage2_size,
        fl_constant=args.fl_constant,
        raw=args.raw,
        threads=args.threads,
        solve=args.solve,
        dataset_name=Path(args.input).stem,
        objective=args.objective
    )
    suffix = {"json": "json", "csv": "csv", "markdown": "md"}[args.format]
    out = _output(args, f"bench.{suffix}")
    emit_report(report, out, args.format)
    print(f"report={out}")
    if args.raw and args.format == "csv":
        print(f"errors={raw_errors_path(out)}")
    return 0


def cmd_lowerbound(args) -> int:
    instance = lower_bound_instance(args.N, q=args.q)
    shares, totals = certificate_shares(instance, q=args.q)
    ok = True
    for i, (share, total) in enumerate(zip(shares, totals)):
        # Every other individual kept with weight 1 must miss certificate i
        others = [j for j in range(args.N) if j != i]
        dropped = WeightedCoreset(others, [0] * len(others), [1.0] * len(others))
        caught = i in half_approximation_violations(instance, dropped, q=args.q)
        passed = share > 0.5 and total < 1.25 and caught
        ok &= passed
        print(f"i={i + 1} share={share:.6f} total={total:.6f} drop_detected={str(caught).lower()} {'OK' if passed else 'FAIL'}")
    print(f"sum_shares={shares.sum():.6f} (N/2={args.N / 2:g})")
    if not ok:
        logger.error("[LOWERBOUND] Certificate check failed")
        return 2
    return 0


COMMANDS = {
    "gen": cmd_gen,
    "coreset": cmd_coreset,
    "eval": cmd_eval,
    "solve": cmd_solve,
    "bench": cmd_bench,
    "lowerbound": cmd_lowerbound,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run one subcommand and return its exit code."""
    try:
        config.validate()
        args = build_parser().parse_args(argv)
        logging.getLogger().setLevel(args.log_level)
        if args.threads < 1:
            raise ValidationError(f"--threads must be >= 1, got {args.threads}")
        return COMMANDS[args.command](args)
    except PanelCoresetError as e:
        logger.error(f"[CLI] {e}")
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        logger.error(f"[CLI] I/O failure: {e}")
        print(f"error: {e}", file=sys.stderr)
        return 2


def run() -> None:
    logging.basicConfig(level=logging.INFO, format=LOG_FORMAT, handlers=[logging.StreamHandler()])
    sys.exit(main())
