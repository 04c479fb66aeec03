import sys
from pathlib import Path

import pytest

from edgebench.analysis import ConfigMetrics, RunMetrics
from edgebench.model import ConfigPoint, Quantization
from edgebench.orchestrator import (
    PHASE_SEQUENCE,
    PhaseEvent,
    RunLog,
    RunStatus,
    WorkloadTemplate,
)
from edgebench.recommender import (
    Constraint,
    Dataset,
    Direction,
    MetricId,
    Query,
    Relation,
)
from edgebench.sampler import TelemetrySample

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
STUB = Path(__file__).resolve().parent / "stub_workload.py"

POINT = ConfigPoint("AGX Orin Devkit", "MAXN", "70m", "int4")


def stub_command(extra: str = "") -> WorkloadTemplate:
    return WorkloadTemplate(f"{sys.executable} {STUB} {extra}".strip())


def make_events(idle=(0.0, 1.0), load=(1.0, 2.0), gen=(2.0, 4.0), workload_offset=0.0):
    """Six phase events; receipt times as given, workload clock shifted by offset."""
    times = [idle[0], idle[1], load[0], load[1], gen[0], gen[1]]
    return tuple(
        PhaseEvent(phase, boundary, t, t + workload_offset)
        for (phase, boundary), t in zip(PHASE_SEQUENCE, times)
    )


def make_samples(times, power=lambda t: 5.0, gpu=lambda t: 0.0, ram=lambda t: 100.0):
    return tuple(TelemetrySample(t, power(t), gpu(t), ram(t)) for t in times)


def make_log(
    events=None,
    samples=None,
    tokens=512,
    status=None,
    config=POINT,
    iteration=0,
):
    if events is None:
        events = make_events()
    if samples is None:
        span = max((e.t_receipt for e in events), default=1.0)
        n = 40
        samples = make_samples([span * i / n for i in range(n + 1)])
    if status is None:
        status = RunStatus.completed()
    return RunLog(config, iteration, tuple(events), tuple(samples), tokens, status)


def make_entry(device, power_model, model, quant, **metrics) -> ConfigMetrics:
    point = ConfigPoint(device, power_model, model, quant)
    accuracy = metrics.pop("accuracy_pct", None)
    return ConfigMetrics(config=point, medians=RunMetrics(**metrics), accuracy_pct=accuracy)


@pytest.fixture
def devkit_point():
    return POINT


#: Plausible value range per metric, for generating datasets and query bounds.
METRIC_RANGES = {
    MetricId.LOAD_LATENCY: (1.0, 100.0),
    MetricId.GEN_LATENCY: (5.0, 500.0),
    MetricId.TOTAL_LATENCY: (6.0, 600.0),
    MetricId.PEAK_POWER_GEN: (10.0, 60.0),
    MetricId.ENERGY_GEN: (50.0, 5000.0),
    MetricId.ENERGY_LOAD: (5.0, 500.0),
    MetricId.PEAK_GPU_MEM: (100.0, 8000.0),
    MetricId.PEAK_RAM: (500.0, 16000.0),
    MetricId.TIME_PER_TOKEN: (0.01, 1.0),
    MetricId.ACCURACY: (20.0, 80.0),
}

_GRID = ("dev-a", "dev-b", "dev-c", "dev-d"), ("MAXN", "15W"), ("m-a", "m-b", "m-c")


def random_dataset(rng, size=30, with_accuracy=False, none_rate=0.1, tie_rate=0.25):
    """A dataset of up to 48 configs with random metrics, missing values, and ties."""
    devices, pms, models = _GRID
    points = [
        ConfigPoint(d, p, m, q)
        for d in devices
        for p in pms
        for m in models
        for q in (Quantization.INT4, Quantization.NONE)
    ]
    size = min(size, len(points))
    chosen = [points[i] for i in sorted(rng.sample(range(len(points)), size))]

    def value(metric):
        if rng.random() < none_rate:
            return None
        lo, hi = METRIC_RANGES[metric]
        if rng.random() < tie_rate:
            return rng.choice((lo, (lo + hi) / 2.0, hi))
        return rng.uniform(lo, hi)

    entries = {}
    for point in chosen:
        entries[point] = ConfigMetrics(
            config=point,
            medians=RunMetrics(
                load_latency_s=value(MetricId.LOAD_LATENCY),
                gen_latency_s=value(MetricId.GEN_LATENCY),
                time_per_token_s=value(MetricId.TIME_PER_TOKEN),
                peak_power_gen_w=value(MetricId.PEAK_POWER_GEN),
                energy_load_j=value(MetricId.ENERGY_LOAD),
                energy_gen_j=value(MetricId.ENERGY_GEN),
                peak_gpu_mem_mb=value(MetricId.PEAK_GPU_MEM),
                peak_ram_mb=value(MetricId.PEAK_RAM),
            ),
            iteration_count=5,
        )
    table = None
    if with_accuracy:
        table = {
            (m, q): rng.uniform(*METRIC_RANGES[MetricId.ACCURACY])
            for m in models
            for q in (Quantization.INT4, Quantization.NONE)
        }
    return Dataset(entries, table)


def random_query(rng, with_accuracy=False, max_constraints=3):
    metrics = [m for m in METRIC_RANGES if with_accuracy or m is not MetricId.ACCURACY]
    constraints = []
    for _ in range(rng.randrange(max_constraints + 1)):
        metric = rng.choice(metrics)
        relation = rng.choice((Relation.AT_MOST, Relation.AT_LEAST))
        constraints.append(Constraint(metric, relation, rng.uniform(*METRIC_RANGES[metric])))
    return Query(
        constraints=tuple(constraints),
        objective=rng.choice(metrics),
        direction=rng.choice((Direction.MINIMIZE, Direction.MAXIMIZE)),
    )
