"""`evictsim` command line: generate traces, simulate them, and compare policies.

Exit codes: 0 on success, 1 on a runtime or I/O failure, 2 on a usage error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import TYPE_CHECKING

from .catalog import build_default_catalog, load_catalog, save_catalog
from .context import RunContextFilter
from .engine import ClusterConfig, load_report, run, save_report
from .errors import ArrivalRateError, ExperimentConfigError
from .experiment import (
    ExperimentConfig,
    Settings,
    build_table,
    load_experiment_config,
    reports_table,
    run_grid,
    write_outputs,
)
from .metrics import EmitFormat, compute_run_metrics, emit
from .policy import P1Mode, Variant, make_policy
from .workload import (
    OutputDistribution,
    PatternName,
    TokenParams,
    build_trace,
    get_pattern,
    label_census,
    parse_trace,
    serialize_trace,
)

if TYPE_CHECKING:  # pragma: no cover
    from collections.abc import Sequence

    from .catalog import ModelCatalog

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(levelname)s [%(run)s] %(name)s: %(message)s"
LOG_LEVELS = ["DEBUG", "INFO", "WARNING", "ERROR"]

# Every evictsim error subclasses one of these.
_FAILURES = (OSError, ValueError, LookupError, RuntimeError)


def positive_float(value: str) -> float:
    number = float(value)
    if not number > 0:
        raise ArrivalRateError("value", number)
    return number


def non_negative_float(value: str) -> float:
    number = float(value)
    if not number >= 0:
        raise ArrivalRateError("value", number)
    return number


def positive_int(value: str) -> int:
    number = int(value)
    if number < 1:
        raise ArrivalRateError("value", number)
    return number


def seed_list(value: str) -> tuple[int, ...]:
    seeds = tuple(int(s) for s in value.split(",") if s.strip())
    if not seeds:
        raise ValueError("empty seed list")
    return seeds


def pattern_name(value: str) -> PatternName:
    return get_pattern(value).name


def pattern_list(value: str) -> tuple[PatternName, ...]:
    return tuple(pattern_name(p.strip()) for p in value.split(",") if p.strip())


def variant_name(value: str) -> Variant:
    return Variant.parse(value)


def variant_list(value: str) -> tuple[Variant, ...]:
    return tuple(Variant.parse(v.strip()) for v in value.split(",") if v.strip())


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--catalog", type=Path, help="catalog document (default: the built-in 16-model catalog)")
    common.add_argument("--out", type=Path, help="output file or directory")
    common.add_argument("--format", choices=[f.value for f in EmitFormat], default=EmitFormat.JSON.value)
    common.add_argument("--seeds", type=seed_list, help="comma-separated 64-bit seeds")
    common.add_argument("--config", type=Path, help="YAML or JSON experiment manifest")
    common.add_argument("--log-level", choices=LOG_LEVELS, help="default: $EVICTSIM_LOG_LEVEL or WARNING")
    return common


def _policy_parser() -> argparse.ArgumentParser:
    policy = argparse.ArgumentParser(add_help=False)
    policy.add_argument("--w1", type=non_negative_float, help="task-criticality weight (default 1.0)")
    policy.add_argument("--window", type=positive_int, dest="window_length", help="lookahead window length")
    policy.add_argument("--p1-mode", choices=[m.value for m in P1Mode], help="recency term orientation")
    return policy


def _grid_parser() -> argparse.ArgumentParser:
    grid = argparse.ArgumentParser(add_help=False)
    grid.add_argument("--rate", type=positive_float, help="arrivals per second")
    grid.add_argument("--duration", type=non_negative_float, help="window length in seconds")
    grid.add_argument("--windows", type=positive_int, help="back-to-back windows per trace")
    grid.add_argument("--accelerators", type=positive_int, help="accelerator count (default 4)")
    return grid


def build_parser() -> argparse.ArgumentParser:
    common, policy, grid = _common_parser(), _policy_parser(), _grid_parser()
    parser = argparse.ArgumentParser(prog="evictsim", description="Multi-model serving eviction simulator")
    commands = parser.add_subparsers(dest="command", required=True)

    generate = commands.add_parser("generate", parents=[common], help="write a synthetic request trace")
    generate.add_argument("--pattern", type=pattern_name, required=True, help="uniform, ide-heavy, popularity-skewed")
    generate.add_argument("--rate", type=positive_float, required=True)
    generate.add_argument("--duration", type=non_negative_float, required=True)
    generate.add_argument("--seed", type=int, default=0)
    generate.add_argument("--windows", type=positive_int, default=1)
    generate.add_argument(
        "--output-distribution", choices=[d.value for d in OutputDistribution], default=OutputDistribution.FIXED.value
    )

    simulate = commands.add_parser("simulate", parents=[common, policy], help="replay a trace under one policy")
    simulate.add_argument("--trace", type=Path, required=True)
    simulate.add_argument("--policy", type=variant_name, default=Variant.CACE_FULL)
    simulate.add_argument("--accelerators", type=positive_int, default=4)
    simulate.add_argument("--unload-time", type=non_negative_float, default=0.0)

    compare = commands.add_parser("compare", parents=[common, policy, grid], help="run a comparison grid")
    compare.add_argument("--patterns", type=pattern_list)
    compare.add_argument("--variants", type=variant_list)
    compare.add_argument("--baseline", type=variant_name)
    compare.add_argument("--reports", type=Path, nargs="+", help="compare saved reports instead of running a grid")

    ablate = commands.add_parser("ablate", parents=[common, policy, grid], help="drop one score factor at a time")
    ablate.add_argument("--pattern", type=pattern_name, default=PatternName.POPULARITY_SKEWED)

    commands.add_parser("catalog", parents=[common], help="print the model catalog")
    return parser


class _CliHandler(logging.StreamHandler):  # pyright: ignore[reportMissingTypeArgument]
    pass


def configure_logging(level: str | None = None) -> None:
    """Install one stderr handler on the package logger, replacing any earlier one."""
    package_logger = logging.getLogger("evictsim")
    for handler in list(package_logger.handlers):
        if isinstance(handler, _CliHandler):
            package_logger.removeHandler(handler)

    handler = _CliHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    handler.addFilter(RunContextFilter())
    package_logger.addHandler(handler)
    package_logger.setLevel(level or Settings.get_log_level())


def _load_catalog(args: argparse.Namespace) -> ModelCatalog:
    if args.catalog is None:
        return build_default_catalog()
    return load_catalog(args.catalog.read_bytes())


def _output_path(out: Path | None, suffix: str, default_dir: str, name: str) -> Path:
    """`out` itself when it names a file with `suffix`, else `<out>/<default_dir>/<name>`."""
    if out is not None and out.suffix == suffix:
        out.parent.mkdir(parents=True, exist_ok=True)
        return out
    directory = (out or Path()) / default_dir
    directory.mkdir(parents=True, exist_ok=True)
    return directory / name


def cmd_generate(args: argparse.Namespace) -> int:
    catalog = _load_catalog(args)
    token_params = TokenParams(output_distribution=OutputDistribution(args.output_distribution))
    trace = build_trace(
        args.pattern, args.rate, args.duration, args.seed, catalog, token_params=token_params, windows=args.windows
    )

    path = _output_path(args.out, ".jsonl", "traces", f"{trace.pattern.value}-{trace.seed}.jsonl")
    path.write_bytes(serialize_trace(trace))

    print(f"wrote {len(trace)} requests to {path}")
    for (task_class, language), count in sorted(label_census(trace).items()):
        print(f"  {task_class.value:<10} {language.value:<10} {count}")
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    catalog = _load_catalog(args)
    trace = parse_trace(args.trace.read_bytes())
    cluster = ClusterConfig(num_accelerators=args.accelerators, unload_time_s=args.unload_time)
    p1_mode = P1Mode(args.p1_mode) if args.p1_mode else None
    base = ExperimentConfig().with_overrides(w1=args.w1, window_length=args.window_length, p1_mode=p1_mode)
    cfg = base.policy_config(args.policy).resolve(catalog)

    report = run(trace, catalog, cluster, make_policy(cfg), cfg)
    name = f"{trace.pattern.value}-{cfg.variant.value}-{trace.seed}.json"
    path = _output_path(args.out, ".json", "reports", name)
    path.write_bytes(save_report(report))

    metrics = compute_run_metrics(report, partial=True)
    print(
        f"{cfg.variant.title} {trace.pattern.value} seed={trace.seed}: requests={metrics.total_requests} "
        f"hit_rate={metrics.cache_hit_rate:.4f} load_overhead={metrics.load_overhead_s:.2f}s "
        f"evictions={metrics.evictions} report={path}"
    )
    return 0


def _experiment_config(args: argparse.Namespace, base: ExperimentConfig) -> ExperimentConfig:
    if args.config is not None:
        base = load_experiment_config(args.config.read_bytes())

    cluster = None
    if args.accelerators is not None:
        cluster = ClusterConfig(num_accelerators=args.accelerators, unload_time_s=base.cluster.unload_time_s)

    variants = getattr(args, "variants", None)
    baseline = getattr(args, "baseline", None)
    if variants and baseline is None and base.baseline not in variants:
        baseline = variants[0]

    return base.with_overrides(
        patterns=getattr(args, "patterns", None),
        variants=variants,
        baseline=baseline,
        seeds=args.seeds,
        rate=args.rate,
        duration=args.duration,
        windows=args.windows,
        cluster=cluster,
        w1=args.w1,
        window_length=args.window_length,
        p1_mode=P1Mode(args.p1_mode) if args.p1_mode else None,
        out=args.out,
    )


def _run_grid(config: ExperimentConfig, args: argparse.Namespace) -> int:
    catalog = _load_catalog(args)
    results = run_grid(config, catalog)
    table = build_table(results, config.baseline)
    path = write_outputs(results, table, config.out or Path("results"), args.format)
    sys.stdout.write(path.read_text(encoding="utf-8"))
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    if args.reports:
        reports = [load_report(p.read_bytes()) for p in args.reports]
        table = reports_table(reports, args.baseline or Variant.LRU)
        data = emit(table, args.format)
        if args.out is not None:
            _output_path(args.out, f".{args.format}", ".", f"comparison.{args.format}").write_bytes(data)
        sys.stdout.write(data.decode("utf-8"))
        return 0

    return _run_grid(_experiment_config(args, ExperimentConfig()), args)


def cmd_ablate(args: argparse.Namespace) -> int:
    base = ExperimentConfig.ablation(args.pattern)
    config = _experiment_config(args, base)
    if args.config is not None:
        # manifest grids are replaced by the ablation set on one pattern
        config = config.with_overrides(
            patterns=(args.pattern,), variants=base.variants, baseline=Variant.CACE_FULL
        )
    return _run_grid(config, args)


def cmd_catalog(args: argparse.Namespace) -> int:
    data = save_catalog(_load_catalog(args))
    if args.out is not None:
        _output_path(args.out, ".json", ".", "catalog.json").write_bytes(data)
    sys.stdout.write(data.decode("utf-8"))
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "ablate": cmd_ablate,
    "catalog": cmd_catalog,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code is None or isinstance(exc.code, int):
            return exc.code or 0
        return 2

    try:
        configure_logging(args.log_level)
        return COMMANDS[args.command](args)
    except ExperimentConfigError as err:
        print(f"evictsim {args.command}: {err}", file=sys.stderr)
        return 2
    except _FAILURES as err:
        print(f"evictsim {args.command}: {err}", file=sys.stderr)
        return 1
