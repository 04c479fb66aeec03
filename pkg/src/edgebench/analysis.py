"""Per-run metric derivation and per-configuration aggregation.

Latencies are measured on the workload's own clock (the marker timestamps);
power, energy, and memory windows are cut on the receipt clock, which is the
clock telemetry samples carry. All functions are pure.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, fields

from .errors import (
    IncompletePhaseError,
    InsufficientSamplesError,
    NoBaselineError,
    ValidationError,
)
from .model import ConfigPoint
from .orchestrator import Boundary, Phase, RunLog
from .sampler import TelemetrySample

METRIC_FIELDS = (
    "load_latency_s",
    "gen_latency_s",
    "baseline_power_w",
    "peak_power_gen_w",
    "energy_load_j",
    "energy_gen_j",
    "peak_gpu_mem_mb",
    "peak_ram_mb",
    "time_per_token_s",
)


@dataclass(frozen=True)
class RunMetrics:
    """Metrics for a single completed run.

    Every field is None when it was never measured: sample-derived fields go
    missing when telemetry was too sparse, and datasets ingested from
    published latency tables carry nothing but the tabled metric.
    """

    load_latency_s: float | None = None
    gen_latency_s: float | None = None
    time_per_token_s: float | None = None
    baseline_power_w: float | None = None
    peak_power_gen_w: float | None = None
    energy_load_j: float | None = None
    energy_gen_j: float | None = None
    peak_gpu_mem_mb: float | None = None
    peak_ram_mb: float | None = None


@dataclass(frozen=True)
class ConfigMetrics:
    """Per-metric medians across a configuration's completed iterations.

    first_iteration is kept for drift inspection when the metrics come from
    runs; table-ingested entries have medians only.
    """

    config: ConfigPoint
    medians: RunMetrics
    iteration_count: int = 0
    first_iteration: RunMetrics | None = None
    accuracy_pct: float | None = None


def _window(log: RunLog, phase: Phase) -> tuple[float, float]:
    start = log.event(phase, Boundary.START)
    end = log.event(phase, Boundary.END)
    if start is None or end is None:
        raise IncompletePhaseError(f"log has no complete {phase.value} phase")
    return start.t_receipt, end.t_receipt


def phase_latency(log: RunLog, phase: Phase) -> float:
    """End minus Start for the phase, preferring the workload's clock."""
    start = log.event(phase, Boundary.START)
    end = log.event(phase, Boundary.END)
    if start is None or end is None:
        raise IncompletePhaseError(f"log has no complete {phase.value} phase")
    if start.t_workload is not None and end.t_workload is not None:
        return end.t_workload - start.t_workload
    return end.t_receipt - start.t_receipt


def baseline_power(log: RunLog) -> float:
    """Median draw while the workload idles, used as the zero line for energy."""
    lo, hi = _window(log, Phase.IDLE)
    powers = [s.power_w for s in log.samples if lo <= s.t <= hi]
    if not powers:
        raise NoBaselineError("no telemetry samples fall inside the idle window")
    return statistics.median(powers)


def _windowed_series(
    samples: tuple[TelemetrySample, ...], lo: float, hi: float
) -> list[tuple[float, TelemetrySample]]:
    """Samples inside [lo, hi] plus interpolated boundary values when available."""

    def lerp(a: TelemetrySample, b: TelemetrySample, t: float) -> TelemetrySample:
        w = (t - a.t) / (b.t - a.t)
        return TelemetrySample(
            t,
            a.power_w + w * (b.power_w - a.power_w),
            a.gpu_mem_mb + w * (b.gpu_mem_mb - a.gpu_mem_mb),
            a.ram_mb + w * (b.ram_mb - a.ram_mb),
        )

    inside = [s for s in samples if lo <= s.t <= hi]
    before = [s for s in samples if s.t < lo]
    after = [s for s in samples if s.t > hi]
    series = list(inside)
    if (not series or series[0].t > lo) and before and series:
        series.insert(0, lerp(before[-1], series[0], lo))
    elif not series and before and after:
        series = [lerp(before[-1], after[0], lo)]
    if series and series[-1].t < hi and after:
        series.append(lerp(series[-1], after[0], hi))
    return [(s.t, s) for s in series]


def excess_energy(log: RunLog, phase: Phase, baseline: float) -> float:
    """Trapezoidal integral of (power − baseline) over the phase window.

    Boundary values are linearly interpolated from the neighboring samples so
    the integral covers the exact window. Negative excess is kept as-is.
    """
    lo, hi = _window(log, phase)
    series = _windowed_series(log.samples, lo, hi)
    if len(series) < 2:
        raise InsufficientSamplesError(
            f"need at least 2 samples across the {phase.value} window, got {len(series)}"
        )
    terms = []
    for (t0, s0), (t1, s1) in zip(series, series[1:]):
        terms.append(((s0.power_w - baseline) + (s1.power_w - baseline)) * 0.5 * (t1 - t0))
    return math.fsum(terms)


def peak_stats(log: RunLog) -> tuple[float, float, float]:
    """(max Generate power, max memory over ModelLoad plus Generate) peaks."""
    gen_lo, gen_hi = _window(log, Phase.GENERATE)
    load_lo, load_hi = _window(log, Phase.MODEL_LOAD)
    gen = [s for s in log.samples if gen_lo <= s.t <= gen_hi]
    mem = [s for s in log.samples if load_lo <= s.t <= load_hi] + gen
    if not gen or not mem:
        raise InsufficientSamplesError("no telemetry samples inside the phase windows")
    return (
        max(s.power_w for s in gen),
        max(s.gpu_mem_mb for s in mem),
        max(s.ram_mb for s in mem),
    )


def time_per_token(log: RunLog) -> float:
    if log.tokens_generated <= 0:
        raise ValidationError("time per token is undefined without generated tokens")
    return phase_latency(log, Phase.GENERATE) / log.tokens_generated


def run_metrics(log: RunLog) -> RunMetrics:
    """Derive every metric for one completed run.

    gen_latency_s is stored as time_per_token_s × tokens_generated (at most
    one ulp from the raw phase latency) so the product reconstructs it
    exactly.
    """
    if not log.status.is_completed:
        raise ValidationError("metrics are only defined for completed runs")
    load = phase_latency(log, Phase.MODEL_LOAD)
    tpt = time_per_token(log)
    gen = tpt * log.tokens_generated

    baseline = peak = e_load = e_gen = gpu = ram = None
    try:
        baseline = baseline_power(log)
        e_load = excess_energy(log, Phase.MODEL_LOAD, baseline)
        e_gen = excess_energy(log, Phase.GENERATE, baseline)
    except (NoBaselineError, InsufficientSamplesError):
        pass
    try:
        peak, gpu, ram = peak_stats(log)
    except InsufficientSamplesError:
        pass
    return RunMetrics(
        load_latency_s=load,
        gen_latency_s=gen,
        time_per_token_s=tpt,
        baseline_power_w=baseline,
        peak_power_gen_w=peak,
        energy_load_j=e_load,
        energy_gen_j=e_gen,
        peak_gpu_mem_mb=gpu,
        peak_ram_mb=ram,
    )


def _field_median(values: list[float | None]) -> float | None:
    present = [v for v in values if v is not None]
    return statistics.median(present) if present else None


def aggregate(logs: list[RunLog]) -> ConfigMetrics | None:
    """Median metrics across iterations, or None when the config is excluded.

    Any failed iteration excludes the whole configuration point. The first
    iteration's metrics are kept alongside the medians.
    """
    if not logs:
        raise ValidationError("aggregate needs at least one run log")
    configs = {log.config for log in logs}
    if len(configs) != 1:
        raise ValidationError("aggregate expects logs from a single configuration point")
    if any(not log.status.is_completed for log in logs):
        return None
    ordered = sorted(logs, key=lambda log: log.iteration)
    per_run = [run_metrics(log) for log in ordered]
    medians = RunMetrics(
        **{
            f.name: _field_median([getattr(m, f.name) for m in per_run])
            for f in fields(RunMetrics)
        }
    )
    return ConfigMetrics(
        config=ordered[0].config,
        medians=medians,
        iteration_count=len(ordered),
        first_iteration=per_run[0],
    )


def iteration_drift(logs: list[RunLog]) -> dict[str, tuple[float, float]]:
    """Per metric: (first iteration's value, median of the remaining ones)."""
    completed = sorted(
        (log for log in logs if log.status.is_completed), key=lambda log: log.iteration
    )
    if len(completed) < 2:
        raise ValidationError("iteration drift needs at least two completed runs")
    first = run_metrics(completed[0])
    rest = [run_metrics(log) for log in completed[1:]]
    out: dict[str, tuple[float, float]] = {}
    for name in METRIC_FIELDS:
        head = getattr(first, name)
        tail = [v for v in (getattr(m, name) for m in rest) if v is not None]
        if head is not None and tail:
            out[name] = (head, statistics.median(tail))
    return out
