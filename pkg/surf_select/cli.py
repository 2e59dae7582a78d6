"""
surf-select command line - Main entry point.

Exit codes: 0 success, 2 input or configuration error, 3 numerical failure.

Example:
    $ surf-select --table otus.csv --response disease --family binomial \\
          --taxonomy taxonomy.tsv --normalize proportions --seed 1 --out report.json
    $ surf-select --mode simulate --template single_surrogate --level high --reps 20
"""
import argparse
import logging
import os
import sys
from typing import Optional, Sequence

from . import __version__
from .config import get_settings
from .models.inputs import (
    Family,
    ForwardConfig,
    LambdaRule,
    Method,
    Mode,
    Normalize,
    PipelineConfig,
    RankingConfig,
    ReportFormat,
    StabilityConfig,
)
from .services.sim import load_scenario, scenario_template
from .tools.export import metrics_from_report, write_augmented_design, write_metrics, write_report
from .tools.ingest import load_dataset
from .tools.pipeline import augment_dataset, run_pipeline
from .utils import ValidationError, handle_error, parse_column_list

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    settings = get_settings()
    parser = argparse.ArgumentParser(
        prog="surf-select",
        description="Subsampling ranking and permutation-calibrated forward selection for GLMs.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--mode", choices=[m.value for m in Mode], default=Mode.SELECT.value)
    parser.add_argument("--family", choices=[f.value for f in Family], default=Family.BINOMIAL.value)

    data = parser.add_argument_group("data")
    data.add_argument("--table", help="CSV/TSV table: header row, first column sample id")
    data.add_argument("--response", help="Response column")
    data.add_argument("--taxonomy", help="Taxonomy TSV with columns otu_id and lineage")
    data.add_argument("--normalize", choices=[n.value for n in Normalize], default=Normalize.NONE.value)
    data.add_argument("--passthrough", default=None, help="Comma-separated covariates excluded from aggregation")

    sel = parser.add_argument_group("selection")
    sel.add_argument("--alpha", type=float, default=settings.alpha)
    sel.add_argument("--B", dest="B", type=int, default=settings.n_subsamples, help="Ranking subsamples")
    sel.add_argument("--fraction", type=float, default=settings.subsample_fraction)
    sel.add_argument("--perms", type=int, default=settings.n_perm, help="Permutations per step")
    sel.add_argument("--max-steps", type=int, default=None)
    sel.add_argument("--lambda-rule", choices=[r.value for r in LambdaRule], default=LambdaRule.ONE_SE.value)
    sel.add_argument("--cutoff", type=float, default=settings.stability_cutoff, help="Stability cutoff")
    sel.add_argument("--ewv", type=float, default=settings.stability_ewv_bound, help="Stability error bound")
    sel.add_argument("--seed", type=int, default=None, help="Root seed (overrides a scenario file's SEED)")
    sel.add_argument("--threads", type=int, default=settings.n_jobs)

    sim = parser.add_argument_group("simulation")
    sim.add_argument("--scenario", help="Scenario KEY=VALUE file")
    sim.add_argument("--template", help="Built-in scenario template")
    sim.add_argument("--level", choices=["low", "fair", "high"], default="high")
    sim.add_argument("--reps", type=int, default=None)
    sim.add_argument("--methods", default=None, help="Comma-separated methods: surf,stability,lasso")

    out = parser.add_argument_group("output")
    out.add_argument("--out", default=None, help="Report path (default: <output_dir>/report.<format>)")
    out.add_argument("--format", choices=[f.value for f in ReportFormat], default=ReportFormat.JSON.value)
    out.add_argument("--aggregate-out", default=None, help="CSV path for the augmented design")
    out.add_argument("--metrics-out", default=None, help="CSV path for simulation metrics")
    out.add_argument("--log-level", default=None, help="DEBUG/INFO/WARNING/ERROR")
    return parser


def _config(args: argparse.Namespace) -> PipelineConfig:
    return PipelineConfig(
        mode=args.mode,
        family=args.family,
        seed=args.seed if args.seed is not None else 0,
        n_jobs=args.threads,
        ranking=RankingConfig(B=args.B, fraction=args.fraction, lambda_rule=args.lambda_rule),
        forward=ForwardConfig(alpha=args.alpha, n_perm=args.perms, max_steps=args.max_steps),
        stability=StabilityConfig(cutoff=args.cutoff, ewv_bound=args.ewv),
    )


def _scenario(args: argparse.Namespace):
    overrides = {}
    if args.reps is not None:
        overrides["n_reps"] = args.reps
    if args.methods:
        overrides["methods"] = [Method(m) for m in parse_column_list(args.methods)]
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.scenario:
        spec = load_scenario(args.scenario)
        return spec.model_copy(update=overrides) if overrides else spec
    if args.template:
        return scenario_template(args.template, args.level, **overrides)
    raise ValidationError("simulate mode needs --scenario or --template", field="scenario")


def run(args: argparse.Namespace) -> int:
    settings = get_settings()
    config = _config(args)
    mode = Mode(args.mode)

    dataset = None
    scenario = None
    if mode == Mode.SIMULATE:
        scenario = _scenario(args)
    else:
        if not args.table or not args.response:
            raise ValidationError(f"{mode.value} mode needs --table and --response", field="table")
        dataset = load_dataset(
            args.table,
            args.response,
            Family(args.family),
            taxonomy_path=args.taxonomy,
            normalize=Normalize(args.normalize),
            passthrough=parse_column_list(args.passthrough),
        )

    report = run_pipeline(dataset, config, scenario=scenario)

    fmt = ReportFormat(args.format)
    out = args.out or os.path.join(settings.output_dir, f"report.{fmt.value if fmt == ReportFormat.JSON else 'txt'}")
    write_report(report, out, fmt)

    if args.aggregate_out or mode == Mode.AGGREGATE:
        if dataset is None or dataset.taxonomy is None:
            raise ValidationError("--aggregate-out needs a taxonomy", field="aggregate_out")
        _, labels, design = augment_dataset(dataset)
        path = args.aggregate_out or os.path.join(settings.output_dir, "augmented.csv")
        write_augmented_design(path, design.matrix, labels, dataset.sample_ids)

    if mode == Mode.SIMULATE:
        path = args.metrics_out or os.path.join(settings.output_dir, "metrics.csv")
        write_metrics(metrics_from_report(report), path, scenario=scenario.name)

    if report.steps:
        for step in report.steps:
            print(f"{step.variable}\tp={step.p_value:.4f}")
    print(f"Report written to {out}", file=sys.stderr)
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point for the surf-select command."""
    parser = build_parser()
    args = parser.parse_args(argv)

    log_level = args.log_level or get_settings().log_level
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger().setLevel(getattr(logging, log_level.upper(), logging.WARNING))
    logger.info(f"surf-select {__version__}: mode={args.mode}, log_level={log_level}")

    try:
        return run(args)
    except Exception as e:
        message, code = handle_error(e, f"surf-select {args.mode}")
        print(message, file=sys.stderr)
        return code


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        print("\nInterrupted by user.", file=sys.stderr)
        sys.exit(130)
