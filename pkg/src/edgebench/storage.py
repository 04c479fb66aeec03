"""File formats: run logs (JSON lines), dataset tables (CSV or JSON lines),
fixture-table ingestion, and log file naming.

All floats are written with repr-precision so write→read is the identity.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import urllib.parse
from dataclasses import dataclass, fields
from pathlib import Path

from .analysis import METRIC_FIELDS, ConfigMetrics, RunMetrics
from .errors import StorageError, ValidationError
from .model import ConfigPoint, Quantization
from .orchestrator import Boundary, Phase, PhaseEvent, RunLog, RunStatus
from .recommender import Dataset
from .sampler import TelemetrySample

logger = logging.getLogger(__name__)

DATASET_COLUMNS = ("device", "power_model", "model", "quantization", "metric", "value")
MANIFEST_LINES = (
    "# edgebench dataset v1",
    "# columns: " + ",".join(DATASET_COLUMNS),
    "# units: seconds, watts, joules, megabytes, percent; device '*' marks accuracy join rows",
)


def _encode(component: str) -> str:
    # quote() never escapes '_', so re-encoding it afterwards keeps the
    # underscore free to act as the field separator; the map stays invertible.
    return urllib.parse.quote(component, safe="").replace("_", "%5F")


def log_filename(config: ConfigPoint, iteration: int) -> str:
    return "{}_{}_{}_{}_iter{}.jsonl".format(
        _encode(config.device),
        _encode(config.power_model),
        _encode(config.model),
        _encode(config.quantization.value),
        iteration,
    )


def write_log(log: RunLog, path: str | Path, plan_echo: dict | None = None) -> None:
    """Write one run log: meta record, events, samples, then the final record."""
    records: list[dict] = []
    meta = {
        "record": "meta",
        "device": log.config.device,
        "power_model": log.config.power_model,
        "model": log.config.model,
        "quantization": log.config.quantization.value,
        "iteration": log.iteration,
    }
    if plan_echo:
        meta["plan"] = plan_echo
    records.append(meta)
    for e in log.events:
        records.append(
            {
                "record": "event",
                "phase": e.phase.value,
                "boundary": e.boundary.value,
                "t_receipt": e.t_receipt,
                "t_workload": e.t_workload,
            }
        )
    for s in log.samples:
        records.append(
            {
                "record": "sample",
                "t": s.t,
                "power_w": s.power_w,
                "gpu_mem_mb": s.gpu_mem_mb,
                "ram_mb": s.ram_mb,
            }
        )
    final = {"record": "final", "tokens_generated": log.tokens_generated, "status": log.status.state}
    if log.status.reason is not None:
        final["reason"] = log.status.reason
    records.append(final)
    text = "".join(json.dumps(r, separators=(",", ":")) + "\n" for r in records)
    Path(path).write_text(text)


def parse_log(path: str | Path) -> RunLog:
    """Read one run log back; a log cut off before its final record parses as
    a failed run with reason "truncated"."""
    lines = Path(path).read_text().splitlines()
    records = []
    for n, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            records.append((n, json.loads(line)))
        except json.JSONDecodeError as exc:
            raise StorageError(f"{path}:{n}: not valid JSON: {exc}") from exc
    if not records or records[0][1].get("record") != "meta":
        raise StorageError(f"{path}: first record must be meta")
    meta = records[0][1]
    try:
        config = ConfigPoint(meta["device"], meta["power_model"], meta["model"], meta["quantization"])
        iteration = int(meta["iteration"])
    except (KeyError, ValidationError) as exc:
        raise StorageError(f"{path}: bad meta record: {exc}") from exc

    events: list[PhaseEvent] = []
    samples: list[TelemetrySample] = []
    final: dict | None = None
    for n, rec in records[1:]:
        kind = rec.get("record")
        if final is not None:
            raise StorageError(f"{path}:{n}: record after the final record")
        try:
            if kind == "event":
                events.append(
                    PhaseEvent(
                        Phase(rec["phase"]),
                        Boundary(rec["boundary"]),
                        float(rec["t_receipt"]),
                        None if rec.get("t_workload") is None else float(rec["t_workload"]),
                    )
                )
            elif kind == "sample":
                samples.append(
                    TelemetrySample(
                        float(rec["t"]), float(rec["power_w"]), float(rec["gpu_mem_mb"]), float(rec["ram_mb"])
                    )
                )
            elif kind == "final":
                final = rec
            elif kind == "meta":
                raise StorageError(f"{path}:{n}: duplicate meta record")
            else:
                raise StorageError(f"{path}:{n}: unknown record kind {kind!r}")
        except (KeyError, ValueError, ValidationError) as exc:
            raise StorageError(f"{path}:{n}: bad {kind} record: {exc}") from exc

    if final is None:
        tokens, status = 0, RunStatus.failed("truncated")
    else:
        tokens = int(final.get("tokens_generated", 0))
        state = final.get("status")
        if state == "completed":
            status = RunStatus.completed()
        elif state == "failed":
            status = RunStatus.failed(final.get("reason", "unknown"))
        else:
            raise StorageError(f"{path}: final record has unknown status {state!r}")
    try:
        return RunLog(config, iteration, tuple(events), tuple(samples), tokens, status)
    except ValidationError as exc:
        raise StorageError(f"{path}: inconsistent log: {exc}") from exc


def read_log_dir(directory: str | Path) -> tuple[list[RunLog], int]:
    """Parse every .jsonl file in the directory; returns (logs, skipped count)."""
    logs: list[RunLog] = []
    skipped = 0
    for path in sorted(Path(directory).glob("*.jsonl")):
        try:
            logs.append(parse_log(path))
        except StorageError as exc:
            logger.warning("skipping %s: %s", path.name, exc)
            skipped += 1
    return logs, skipped


@dataclass(frozen=True)
class Exclusion:
    config: ConfigPoint
    reason: str


def _dataset_rows(dataset: Dataset) -> list[tuple]:
    """Rows of (device, power_model, model, quantization, metric, value).

    Values stay numeric here; both writers format them via repr, which the
    readers invert exactly.
    """
    rows: list[tuple] = []
    for key, cm in dataset.entries.items():
        base = (key.device, key.power_model, key.model, key.quantization.value)
        for name in METRIC_FIELDS:
            v = getattr(cm.medians, name)
            if v is not None:
                rows.append(base + (name, v))
        if cm.first_iteration is not None:
            for name in METRIC_FIELDS:
                v = getattr(cm.first_iteration, name)
                if v is not None:
                    rows.append(base + ("first." + name, v))
        if cm.iteration_count:
            rows.append(base + ("iteration_count", cm.iteration_count))
        if cm.accuracy_pct is not None:
            rows.append(base + ("accuracy_pct", cm.accuracy_pct))
    if dataset.accuracy_table is not None:
        for (model, quant), v in dataset.accuracy_table.items():
            rows.append(("*", "*", model, quant.value, "accuracy_pct", v))
    return rows


def write_dataset(dataset: Dataset, path: str | Path, fmt: str = "csv") -> None:
    rows = _dataset_rows(dataset)
    if fmt == "csv":
        buf = io.StringIO()
        for line in MANIFEST_LINES:
            buf.write(line + "\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerows(rows)
        Path(path).write_text(buf.getvalue())
    elif fmt == "json-lines":
        text = "".join(
            json.dumps(dict(zip(DATASET_COLUMNS, row)), separators=(",", ":")) + "\n" for row in rows
        )
        Path(path).write_text(text)
    else:
        raise ValidationError(f"unknown dataset format {fmt!r} (use csv or json-lines)")


def _rows_from_file(path: str | Path) -> list[tuple[int, list[str]]]:
    """(line number, row fields) pairs for either on-disk dataset format."""
    text = Path(path).read_text()
    rows: list[tuple[int, list[str]]] = []
    for n, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped.startswith("{"):
            try:
                rec = json.loads(stripped)
                rows.append((n, [str(rec[c]) for c in DATASET_COLUMNS]))
            except (json.JSONDecodeError, KeyError) as exc:
                raise StorageError(f"{path}:{n}: bad dataset record: {exc}") from exc
        else:
            parsed = next(csv.reader([line]))
            rows.append((n, parsed))
    return rows


def read_dataset(path: str | Path) -> Dataset:
    """Load a dataset file written by :func:`write_dataset` (either format)."""
    per_key: dict[ConfigPoint, dict[str, float]] = {}
    accuracy: dict[tuple[str, Quantization], float] = {}
    saw_star = False
    for n, row in _rows_from_file(path):
        if len(row) != len(DATASET_COLUMNS):
            raise StorageError(f"{path}:{n}: expected {len(DATASET_COLUMNS)} columns, got {len(row)}")
        device, power, model, quant, metric, value = (f.strip() for f in row)
        try:
            v = float(value)
        except ValueError:
            raise StorageError(f"{path}:{n}: non-numeric value {value!r}") from None
        if device == "*":
            saw_star = True
            accuracy[(model, Quantization.from_label(quant))] = v
            continue
        try:
            key = ConfigPoint(device, power, model, quant)
        except ValidationError as exc:
            raise StorageError(f"{path}:{n}: {exc}") from exc
        per_key.setdefault(key, {})
        if metric in per_key[key]:
            raise StorageError(f"{path}:{n}: duplicate metric {metric!r} for {key.label()}")
        per_key[key][metric] = v

    entries = {}
    for key, metrics in per_key.items():
        med: dict[str, float] = {}
        first: dict[str, float] = {}
        count = 0
        acc = None
        for metric, v in metrics.items():
            if metric in METRIC_FIELDS:
                med[metric] = v
            elif metric.startswith("first.") and metric[6:] in METRIC_FIELDS:
                first[metric[6:]] = v
            elif metric == "iteration_count":
                count = int(v)
            elif metric == "accuracy_pct":
                acc = v
            else:
                raise StorageError(f"{path}: unknown metric {metric!r} for {key.label()}")
        entries[key] = ConfigMetrics(
            config=key,
            medians=RunMetrics(**med),
            iteration_count=count,
            first_iteration=RunMetrics(**first) if first else None,
            accuracy_pct=acc,
        )
    return Dataset(entries, accuracy if (accuracy or saw_star) else None)


TABLE_SCHEMAS = ("load-latency", "gen-latency", "accuracy", "full")
_SCHEMA_FIELD = {"load-latency": "load_latency_s", "gen-latency": "gen_latency_s"}


def ingest_table(path: str | Path, schema: str) -> tuple[Dataset, list[Exclusion]]:
    """Ingest a fixture table.

    Latency tables are 5-column CSV (device, power model, model, quantization,
    value) where a "-" value marks a configuration published as failed; those
    come back as exclusions, not entries. Accuracy tables use the same shape
    with "*" in the device and power-model columns. "full" reads a dataset
    file written by this toolkit.
    """
    if schema not in TABLE_SCHEMAS:
        raise ValidationError(f"unknown ingest schema {schema!r} (use {', '.join(TABLE_SCHEMAS)})")
    if schema == "full":
        return read_dataset(path), []

    entries: dict[ConfigPoint, ConfigMetrics] = {}
    accuracy: dict[tuple[str, Quantization], float] = {}
    excluded: list[Exclusion] = []
    for n, row in _rows_from_file(path):
        if len(row) != 5:
            raise StorageError(f"{path}:{n}: expected 5 columns, got {len(row)}")
        device, power, model, quant, value = (f.strip() for f in row)
        if schema == "accuracy":
            if device != "*" or power != "*":
                raise StorageError(f"{path}:{n}: accuracy rows use '*' for device and power model")
            try:
                accuracy[(model, Quantization.from_label(quant))] = float(value)
            except (ValueError, ValidationError) as exc:
                raise StorageError(f"{path}:{n}: {exc}") from exc
            continue
        try:
            key = ConfigPoint(device, power, model, quant)
        except ValidationError as exc:
            raise StorageError(f"{path}:{n}: {exc}") from exc
        if key in entries or any(x.config == key for x in excluded):
            raise StorageError(f"{path}:{n}: duplicate row for {key.label()}")
        if value == "-":
            excluded.append(Exclusion(key, "missing cell"))
            continue
        try:
            v = float(value)
        except ValueError:
            raise StorageError(f"{path}:{n}: non-numeric value {value!r}") from None
        entries[key] = ConfigMetrics(config=key, medians=RunMetrics(**{_SCHEMA_FIELD[schema]: v}))
    if schema == "accuracy":
        return Dataset({}, accuracy), []
    return Dataset(entries), excluded


def _merge_metrics(key: ConfigPoint, a: RunMetrics, b: RunMetrics) -> RunMetrics:
    out = {}
    for f in fields(RunMetrics):
        va, vb = getattr(a, f.name), getattr(b, f.name)
        if va is not None and vb is not None and va != vb:
            raise StorageError(f"merge conflict on {f.name} for {key.label()}: {va} vs {vb}")
        out[f.name] = va if va is not None else vb
    return RunMetrics(**out)


def merge_datasets(
    base: Dataset,
    incoming: Dataset,
    base_excluded: list[Exclusion] = (),
    incoming_excluded: list[Exclusion] = (),
) -> tuple[Dataset, list[Exclusion]]:
    """Union two datasets; a key excluded on either side stays excluded.

    Overlapping entries merge field-wise; two different values for the same
    metric of the same key are a conflict error.
    """
    excluded: list[Exclusion] = list(base_excluded)
    seen = {x.config for x in excluded}
    for x in incoming_excluded:
        if x.config not in seen:
            excluded.append(x)
            seen.add(x.config)

    entries: dict[ConfigPoint, ConfigMetrics] = {}
    for source in (base, incoming):
        for key, cm in source.entries.items():
            if key in seen:
                continue
            if key not in entries:
                entries[key] = cm
                continue
            prev = entries[key]
            if prev.accuracy_pct is not None and cm.accuracy_pct is not None and prev.accuracy_pct != cm.accuracy_pct:
                raise StorageError(f"merge conflict on accuracy_pct for {key.label()}")
            first = prev.first_iteration
            if first is None:
                first = cm.first_iteration
            elif cm.first_iteration is not None:
                first = _merge_metrics(key, first, cm.first_iteration)
            entries[key] = ConfigMetrics(
                config=key,
                medians=_merge_metrics(key, prev.medians, cm.medians),
                iteration_count=max(prev.iteration_count, cm.iteration_count),
                first_iteration=first,
                accuracy_pct=prev.accuracy_pct if prev.accuracy_pct is not None else cm.accuracy_pct,
            )

    table = None
    if base.accuracy_table is not None or incoming.accuracy_table is not None:
        table = dict(base.accuracy_table or {})
        for k, v in (incoming.accuracy_table or {}).items():
            if k in table and table[k] != v:
                raise StorageError(f"merge conflict on accuracy table for {k[0]}/{k[1].value}")
            table[k] = v
    return Dataset(entries, table), excluded


def write_exclusions(excluded: list[Exclusion], path: str | Path) -> None:
    buf = io.StringIO()
    buf.write("# excluded configurations\n")
    writer = csv.writer(buf, lineterminator="\n")
    for x in excluded:
        writer.writerow(
            (x.config.device, x.config.power_model, x.config.model, x.config.quantization.value, x.reason)
        )
    Path(path).write_text(buf.getvalue())


def read_exclusions(path: str | Path) -> list[Exclusion]:
    out = []
    for n, row in _rows_from_file(path):
        if len(row) != 5:
            raise StorageError(f"{path}:{n}: expected 5 columns, got {len(row)}")
        device, power, model, quant, reason = (f.strip() for f in row)
        out.append(Exclusion(ConfigPoint(device, power, model, quant), reason))
    return out
