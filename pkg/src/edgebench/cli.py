"""Command-line entry point: sweep, analyze, ingest, recommend, report."""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import analysis, report, storage
from .config import load_config
from .errors import (
    EdgebenchError,
    MarkerError,
    MissingJoinError,
    MissingMetricError,
    SamplerError,
    StorageError,
    ValidationError,
)
from .model import DEFAULT_TOKEN_TARGET
from .orchestrator import run_sweep
from .recommender import (
    Constraint,
    Dataset,
    Direction,
    MetricId,
    Query,
    use_case_report,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


def _dataset_filename(fmt: str) -> str:
    return "dataset.csv" if fmt == "csv" else "dataset.jsonl"


def _ensure_out_dir(path_str: str) -> Path:
    out = Path(path_str)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise OSError(f"output directory {out} is not writable")
    return out


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    out = _ensure_out_dir(args.out)
    echo = {
        "iterations": cfg.plan.iterations,
        "token_target": cfg.plan.token_target,
        "idle_seconds": cfg.plan.idle_seconds,
        "interval_s": cfg.sampler.interval_s,
    }

    def persist(log) -> None:
        storage.write_log(log, out / storage.log_filename(log.config, log.iteration), echo)
        suffix = "" if log.status.reason is None else f" ({log.status.reason})"
        print(f"{log.config.label()} iter{log.iteration}: {log.status.state}{suffix}")

    logs = run_sweep(cfg.plan, cfg.template, cfg.sampler, timeout=cfg.timeout_s, on_log=persist)
    failed = sum(1 for log in logs if not log.status.is_completed)
    print(f"sweep finished: {len(logs)} runs, {failed} failed, logs in {out}")
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    logs, skipped = storage.read_log_dir(args.log_dir)
    if skipped:
        print(f"skipped {skipped} unparseable log file(s)", file=sys.stderr)
    if not logs:
        raise ValidationError(f"no parseable run logs in {args.log_dir}")
    out = _ensure_out_dir(args.out)

    grouped: dict = {}
    for log in logs:
        grouped.setdefault(log.config, []).append(log)
    entries = {}
    excluded = []
    for key, group in grouped.items():
        cm = analysis.aggregate(group)
        if cm is None:
            reasons = sorted({g.status.reason for g in group if g.status.reason})
            excluded.append(storage.Exclusion(key, ",".join(reasons) or "failed"))
        else:
            entries[key] = cm
    dataset = Dataset(entries)
    dataset_path = out / _dataset_filename(args.format)
    storage.write_dataset(dataset, dataset_path, args.format)
    storage.write_exclusions(excluded, out / "excluded.csv")
    print(f"analyzed {len(logs)} logs: {len(entries)} entries, {len(excluded)} excluded -> {dataset_path}")
    return EXIT_OK


def cmd_ingest(args: argparse.Namespace) -> int:
    dataset, excluded = storage.ingest_table(args.table, args.schema)
    out = _ensure_out_dir(args.out)
    dataset_path = out / _dataset_filename(args.format)
    excl_path = out / "excluded.csv"
    if dataset_path.exists():
        base = storage.read_dataset(dataset_path)
        base_excl = storage.read_exclusions(excl_path) if excl_path.exists() else []
        dataset, excluded = storage.merge_datasets(base, dataset, base_excl, excluded)
    storage.write_dataset(dataset, dataset_path, args.format)
    storage.write_exclusions(excluded, excl_path)
    print(f"ingested {args.table}: {len(dataset.entries)} entries, {len(excluded)} excluded -> {dataset_path}")
    return EXIT_OK


def _parse_queries(args: argparse.Namespace) -> list[Query]:
    if args.query and (args.constraint or args.objective):
        raise ValidationError("--query and inline --constraint/--objective are mutually exclusive")
    if args.query:
        with open(args.query, "rb") as fh:
            raw = tomllib.load(fh)
        queries = []
        for i, q in enumerate(raw.get("query", [])):
            if "objective" not in q:
                raise ValidationError(f"query[{i}] is missing an objective")
            queries.append(
                Query(
                    constraints=tuple(Constraint.parse(c) for c in q.get("constraints", [])),
                    objective=MetricId.parse(q["objective"]),
                    direction=Direction(q.get("direction", "min")),
                )
            )
        if not queries:
            raise ValidationError(f"no [[query]] tables in {args.query}")
        return queries
    if not args.objective:
        raise ValidationError("provide --objective (with optional --constraint) or --query")
    return [
        Query(
            constraints=tuple(Constraint.parse(c) for c in args.constraint),
            objective=MetricId.parse(args.objective),
            direction=Direction(args.direction),
        )
    ]


def _format_constraints(query: Query) -> str:
    if not query.constraints:
        return "(none)"
    return ", ".join(f"{c.metric.value}{c.relation.value}{c.bound:g}" for c in query.constraints)


def cmd_recommend(args: argparse.Namespace) -> int:
    dataset = storage.read_dataset(args.dataset)
    queries = _parse_queries(args)
    rows = use_case_report(dataset, queries)

    table = [("constraints", "objective", "best configuration", "value")]
    for row in rows:
        objective = f"{row.query.direction.value} {row.query.objective.value}"
        if row.best is None:
            table.append((_format_constraints(row.query), objective, "infeasible", ""))
        else:
            note = f" (+{len(row.ties) - 1} tied)" if len(row.ties) > 1 else ""
            table.append(
                (
                    _format_constraints(row.query),
                    objective,
                    row.best.config.label() + note,
                    f"{row.objective_value:.6g}",
                )
            )
    widths = [max(len(r[i]) for r in table) for i in range(4)]
    for r in table:
        print("  ".join(col.ljust(w) for col, w in zip(r, widths)).rstrip())

    if args.out:
        out = _ensure_out_dir(args.out)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(
            ("constraints", "objective", "direction", "device", "power_model", "model", "quantization", "value")
        )
        for row in rows:
            if row.best is None:
                writer.writerow(
                    (_format_constraints(row.query), row.query.objective.value, row.query.direction.value,
                     "", "", "", "", "infeasible")
                )
            else:
                key = row.best.config
                writer.writerow(
                    (_format_constraints(row.query), row.query.objective.value, row.query.direction.value,
                     key.device, key.power_model, key.model, key.quantization.value, repr(row.objective_value))
                )
        (out / "recommend.csv").write_text(buf.getvalue())
        print(f"wrote {out / 'recommend.csv'}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    dataset = storage.read_dataset(args.dataset)
    if not dataset.entries:
        raise ValidationError(f"dataset {args.dataset} has no entries to report on")
    token_target = DEFAULT_TOKEN_TARGET
    if args.config:
        token_target = load_config(args.config).plan.token_target
    out = _ensure_out_dir(args.out)
    families = list(report.FIGURE_FAMILIES) if args.figure == "all" else [args.figure]
    for family in families:
        series_path = report.write_series(dataset, family, out, args.format, token_target)
        png_path = report.render_figure(dataset, family, out, token_target)
        print(f"{family}: {series_path} + {png_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edgebench",
        description="Benchmark phase-marked LLM workloads across a device/power/model/quantization matrix.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sweep = sub.add_parser("sweep", help="run the configured sweep and write one log per run")
    p_sweep.add_argument("--config", required=True, help="TOML configuration file")
    p_sweep.add_argument("--out", required=True, help="directory for run logs")
    p_sweep.set_defaults(func=cmd_sweep)

    p_analyze = sub.add_parser("analyze", help="aggregate run logs into a dataset file")
    p_analyze.add_argument("log_dir", help="directory containing run logs")
    p_analyze.add_argument("--out", default=".", help="directory for the dataset and exclusion files")
    p_analyze.add_argument("--format", choices=("csv", "json-lines"), default="csv")
    p_analyze.set_defaults(func=cmd_analyze)

    p_ingest = sub.add_parser("ingest", help="ingest a fixture table, merging into an existing dataset")
    p_ingest.add_argument("table", help="table file to ingest")
    p_ingest.add_argument("--schema", required=True, choices=storage.TABLE_SCHEMAS)
    p_ingest.add_argument("--out", default=".", help="directory holding the dataset file")
    p_ingest.add_argument("--format", choices=("csv", "json-lines"), default="csv")
    p_ingest.set_defaults(func=cmd_ingest)

    p_rec = sub.add_parser("recommend", help="answer constraint/objective queries over a dataset")
    p_rec.add_argument("dataset", help="dataset file")
    p_rec.add_argument("--query", help="TOML file with [[query]] tables")
    p_rec.add_argument(
        "--constraint",
        action="append",
        default=[],
        metavar="METRIC<=BOUND",
        help="inline constraint, e.g. peak-power-gen<=45 (repeatable)",
    )
    p_rec.add_argument("--objective", help="metric to optimize")
    p_rec.add_argument("--direction", choices=("min", "max"), default="min")
    p_rec.add_argument("--out", help="also write recommend.csv into this directory")
    p_rec.set_defaults(func=cmd_recommend)

    p_report = sub.add_parser("report", help="emit plot-data series and rendered charts")
    p_report.add_argument("dataset", help="dataset file")
    p_report.add_argument(
        "--figure", choices=report.FIGURE_FAMILIES + ("all",), default="all", help="figure family"
    )
    p_report.add_argument("--out", default=".", help="directory for series and image files")
    p_report.add_argument("--format", choices=("csv", "json-lines"), default="csv")
    p_report.add_argument("--config", help="TOML configuration file (for the token target)")
    p_report.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, StorageError, MarkerError, MissingJoinError, MissingMetricError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (SamplerError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except EdgebenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
