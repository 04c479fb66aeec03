"""Plot-data series per figure family, and rendered charts to go with them.

The series files are the contract: tidy tables any plotter can consume. The
PNGs are a convenience rendering of the same rows.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

from .errors import MissingMetricError, ValidationError
from .model import DEFAULT_TOKEN_TARGET, Quantization
from .recommender import Dataset

_KEY_COLUMNS = ("device", "power_model", "model", "quantization")

#: figure family -> metric columns drawn from the per-config medians
_FAMILIES: dict[str, tuple[str, ...]] = {
    "latency": ("load_latency_s", "gen_latency_s"),
    "memory": ("peak_gpu_mem_mb", "peak_ram_mb"),
    "power": ("peak_power_gen_w",),
    "energy": ("energy_load_j", "energy_gen_j"),
    "time-per-token": ("time_per_token_s",),
}

FIGURE_FAMILIES = tuple(_FAMILIES) + ("quant-comp",)

_UNITS = {"_s": "seconds", "_w": "watts", "_j": "joules", "_mb": "MB"}


def _tpt(cm, token_target: int) -> float | None:
    """Median time per token, falling back to gen latency over the target."""
    if cm.medians.time_per_token_s is not None:
        return cm.medians.time_per_token_s
    if cm.medians.gen_latency_s is not None:
        return cm.medians.gen_latency_s / token_target
    return None


def series_rows(
    dataset: Dataset, family: str, token_target: int = DEFAULT_TOKEN_TARGET
) -> tuple[tuple[str, ...], list[tuple]]:
    """(header, rows) for one figure family; raises when nothing is plottable."""
    if family == "quant-comp":
        return _quant_comp_rows(dataset)
    if family not in _FAMILIES:
        raise ValidationError(
            f"unknown figure family {family!r} (known: {', '.join(FIGURE_FAMILIES)})"
        )
    cols = _FAMILIES[family]
    header = _KEY_COLUMNS + cols
    rows = []
    for key, cm in dataset.entries.items():
        values = []
        for col in cols:
            if family == "time-per-token":
                values.append(_tpt(cm, token_target))
            else:
                values.append(getattr(cm.medians, col))
        if all(v is None for v in values):
            continue
        rows.append((key.device, key.power_model, key.model, key.quantization.value, *values))
    if not rows:
        raise MissingMetricError(
            f"dataset has no values for the {family} figure (needs {', '.join(cols)})"
        )
    return header, rows


def _quant_comp_rows(dataset: Dataset) -> tuple[tuple[str, ...], list[tuple]]:
    """4-bit vs unquantized latency, paired per (device, power model, model)."""
    header = ("device", "power_model", "model", "metric", "int4", "none")
    by_group: dict[tuple[str, str, str], dict[Quantization, object]] = {}
    for key, cm in dataset.entries.items():
        by_group.setdefault((key.device, key.power_model, key.model), {})[key.quantization] = cm
    rows = []
    for (device, power, model), pair in by_group.items():
        if Quantization.INT4 not in pair or Quantization.NONE not in pair:
            continue
        for metric in ("load_latency_s", "gen_latency_s"):
            a = getattr(pair[Quantization.INT4].medians, metric)
            b = getattr(pair[Quantization.NONE].medians, metric)
            if a is not None and b is not None:
                rows.append((device, power, model, metric, a, b))
    if not rows:
        raise MissingMetricError(
            "dataset has no quantized/unquantized latency pairs for the quant-comp figure"
        )
    return header, rows


def _series_filename(family: str, fmt: str) -> str:
    ext = "csv" if fmt == "csv" else "jsonl"
    return family.replace("-", "_") + "." + ext


def write_series(
    dataset: Dataset,
    family: str,
    out_dir: str | Path,
    fmt: str = "csv",
    token_target: int = DEFAULT_TOKEN_TARGET,
) -> Path:
    header, rows = series_rows(dataset, family, token_target)
    out = Path(out_dir) / _series_filename(family, fmt)
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(["" if v is None else v for v in row])
        out.write_text(buf.getvalue())
    elif fmt == "json-lines":
        out.write_text(
            "".join(json.dumps(dict(zip(header, row)), separators=(",", ":")) + "\n" for row in rows)
        )
    else:
        raise ValidationError(f"unknown series format {fmt!r} (use csv or json-lines)")
    return out


def _unit_label(columns: tuple[str, ...]) -> str:
    for suffix, unit in _UNITS.items():
        if all(c.endswith(suffix) for c in columns):
            return unit
    return "value"


def render_figure(
    dataset: Dataset,
    family: str,
    out_dir: str | Path,
    token_target: int = DEFAULT_TOKEN_TARGET,
) -> Path:
    """Render the family's series to a PNG next to the series file."""
    header, rows = series_rows(dataset, family, token_target)
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if family == "quant-comp":
        rows = [r for r in rows if r[3] == "gen_latency_s"]
        labels = [f"{r[0]}/{r[1]}/{r[2]}" for r in rows]
        value_cols = ("int4", "none")
        series = [[r[4] for r in rows], [r[5] for r in rows]]
        unit = "seconds"
    else:
        value_cols = header[len(_KEY_COLUMNS):]
        labels = ["/".join(str(v) for v in r[: len(_KEY_COLUMNS)]) for r in rows]
        series = [
            [math.nan if r[len(_KEY_COLUMNS) + i] is None else r[len(_KEY_COLUMNS) + i] for r in rows]
            for i in range(len(value_cols))
        ]
        unit = _unit_label(value_cols)

    width = 0.8 / len(series)
    fig, ax = plt.subplots(figsize=(max(8.0, 0.28 * len(labels) + 2.0), 5.0))
    for i, (name, values) in enumerate(zip(value_cols, series)):
        xs = [x + i * width for x in range(len(labels))]
        ax.bar(xs, values, width=width, label=name)
    ax.set_xticks([x + width * (len(series) - 1) / 2 for x in range(len(labels))])
    ax.set_xticklabels(labels, rotation=90, fontsize=6)
    ax.set_ylabel(unit)
    ax.set_title(family)
    ax.legend(fontsize=8)
    fig.tight_layout()
    out = Path(out_dir) / (family.replace("-", "_") + ".png")
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out
