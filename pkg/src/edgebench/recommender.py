"""Constraint-filtered, objective-ranked queries over measured configurations."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from enum import Enum

from .errors import MissingJoinError, ValidationError
from .model import ConfigPoint, Quantization


class MetricId(Enum):
    LOAD_LATENCY = "load-latency"
    GEN_LATENCY = "gen-latency"
    TOTAL_LATENCY = "total-latency"
    PEAK_POWER_GEN = "peak-power-gen"
    ENERGY_GEN = "energy-gen"
    ENERGY_LOAD = "energy-load"
    PEAK_GPU_MEM = "peak-gpu-mem"
    PEAK_RAM = "peak-ram"
    TIME_PER_TOKEN = "time-per-token"
    ACCURACY = "accuracy"

    @classmethod
    def parse(cls, label: str) -> "MetricId":
        try:
            return cls(label.strip().lower())
        except ValueError:
            known = ", ".join(m.value for m in cls)
            raise ValidationError(f"unknown metric {label!r} (known: {known})") from None


class Relation(Enum):
    AT_MOST = "<="
    AT_LEAST = ">="


class Direction(Enum):
    MINIMIZE = "min"
    MAXIMIZE = "max"


_CONSTRAINT_RE = re.compile(r"(?P<metric>[a-z-]+)\s*(?P<rel><=|>=)\s*(?P<bound>\S+)")


@dataclass(frozen=True)
class Constraint:
    metric: MetricId
    relation: Relation
    bound: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.bound):
            raise ValidationError("constraint bound must be finite")

    @classmethod
    def parse(cls, text: str) -> "Constraint":
        m = _CONSTRAINT_RE.fullmatch(text.strip())
        if m is None:
            raise ValidationError(f"constraint must look like metric<=bound, got {text!r}")
        try:
            bound = float(m.group("bound"))
        except ValueError:
            raise ValidationError(f"constraint bound {m.group('bound')!r} is not a number") from None
        return cls(MetricId.parse(m.group("metric")), Relation(m.group("rel")), bound)

    def holds(self, value: float) -> bool:
        if self.relation is Relation.AT_MOST:
            return value <= self.bound
        return value >= self.bound


@dataclass(frozen=True)
class Query:
    constraints: tuple[Constraint, ...]
    objective: MetricId
    direction: Direction

    def __post_init__(self) -> None:
        object.__setattr__(self, "constraints", tuple(self.constraints))


class Dataset:
    """Measured metrics per configuration, plus an optional accuracy join table.

    Entry iteration order is the insertion order, which loaders keep equal to
    the sweep enumeration order; queries report results in that order.
    """

    def __init__(self, entries=None, accuracy_table=None):
        from .analysis import ConfigMetrics  # local: avoids import cycle at module load

        self.entries: dict[ConfigPoint, ConfigMetrics] = dict(entries or {})
        self.accuracy_table: dict[tuple[str, Quantization], float] | None = (
            dict(accuracy_table) if accuracy_table is not None else None
        )

    def accuracy_for(self, config: ConfigPoint) -> float | None:
        if self.accuracy_table is None:
            return None
        return self.accuracy_table.get((config.model, config.quantization))


def metric_value(dataset: Dataset, metrics, metric: MetricId) -> float | None:
    """The entry's value for one metric, or None when it was never measured."""
    m = metrics.medians
    if metric is MetricId.LOAD_LATENCY:
        return m.load_latency_s
    if metric is MetricId.GEN_LATENCY:
        return m.gen_latency_s
    if metric is MetricId.TOTAL_LATENCY:
        if m.load_latency_s is None or m.gen_latency_s is None:
            return None
        return m.load_latency_s + m.gen_latency_s
    if metric is MetricId.PEAK_POWER_GEN:
        return m.peak_power_gen_w
    if metric is MetricId.ENERGY_GEN:
        return m.energy_gen_j
    if metric is MetricId.ENERGY_LOAD:
        return m.energy_load_j
    if metric is MetricId.PEAK_GPU_MEM:
        return m.peak_gpu_mem_mb
    if metric is MetricId.PEAK_RAM:
        return m.peak_ram_mb
    if metric is MetricId.TIME_PER_TOKEN:
        return m.time_per_token_s
    if metric is MetricId.ACCURACY:
        if metrics.accuracy_pct is not None:
            return metrics.accuracy_pct
        return dataset.accuracy_for(metrics.config)
    raise ValidationError(f"unhandled metric {metric}")


def _require_joins(dataset: Dataset, metrics) -> None:
    for metric in metrics:
        if metric is MetricId.ACCURACY and dataset.accuracy_table is None:
            if not any(cm.accuracy_pct is not None for cm in dataset.entries.values()):
                raise MissingJoinError("accuracy was queried but no accuracy table is joined")


def filter_entries(dataset: Dataset, constraints) -> list:
    """Entries satisfying every constraint, in dataset order.

    An entry with no measured value for a constrained metric does not satisfy
    the constraint.
    """
    constraints = tuple(constraints)
    _require_joins(dataset, [c.metric for c in constraints])
    out = []
    for cm in dataset.entries.values():
        ok = True
        for c in constraints:
            v = metric_value(dataset, cm, c.metric)
            if v is None or not c.holds(v):
                ok = False
                break
        if ok:
            out.append(cm)
    return out


@dataclass(frozen=True)
class SelectionResult:
    """Ranked feasible entries (optimum first) and the full set tied at the top."""

    ranked: tuple
    ties: tuple
    objective: MetricId
    direction: Direction

    @property
    def feasible(self) -> bool:
        return bool(self.ranked)

    @property
    def best(self):
        return self.ranked[0] if self.ranked else None

    def best_value(self, dataset: Dataset) -> float | None:
        return metric_value(dataset, self.ranked[0], self.objective) if self.ranked else None


def select_best(dataset: Dataset, query: Query) -> SelectionResult:
    """Rank the constraint-satisfying entries by the objective.

    Entries without a measured objective value drop out of the ranking. Ties
    keep dataset order and are all reported. An empty ranking means no
    feasible configuration, which is an answer rather than an error.
    """
    _require_joins(dataset, [query.objective])
    feasible = filter_entries(dataset, query.constraints)
    scored = []
    for idx, cm in enumerate(feasible):
        v = metric_value(dataset, cm, query.objective)
        if v is not None:
            scored.append((v, idx, cm))
    reverse = query.direction is Direction.MAXIMIZE
    scored.sort(key=lambda item: (-item[0] if reverse else item[0], item[1]))
    ranked = tuple(cm for _, _, cm in scored)
    ties = ()
    if scored:
        top = scored[0][0]
        ties = tuple(cm for v, _, cm in scored if v == top)
    return SelectionResult(ranked=ranked, ties=ties, objective=query.objective, direction=query.direction)


@dataclass(frozen=True)
class UseCaseRow:
    query: Query
    best: object | None  # ConfigMetrics; None when infeasible
    objective_value: float | None
    ties: tuple = field(default_factory=tuple)

    @property
    def feasible(self) -> bool:
        return self.best is not None


def use_case_report(dataset: Dataset, queries) -> list[UseCaseRow]:
    """One row per query: the chosen configuration, or an infeasible marker."""
    rows = []
    for query in queries:
        result = select_best(dataset, query)
        rows.append(
            UseCaseRow(
                query=query,
                best=result.best,
                objective_value=result.best_value(dataset),
                ties=result.ties,
            )
        )
    return rows


def pareto_front(dataset: Dataset, metrics, directions) -> list:
    """Entries not dominated on all listed metrics simultaneously.

    Maintains the running front incrementally: each candidate is compared to
    the current front only, dropping any front member the candidate dominates.
    Entries missing any listed metric are not comparable and are left out.
    Results come back in dataset order.
    """
    metrics = tuple(metrics)
    directions = tuple(directions)
    if not metrics:
        raise ValidationError("pareto front needs at least one metric")
    if len(metrics) != len(directions):
        raise ValidationError("pareto front needs one direction per metric")
    _require_joins(dataset, metrics)

    def vector(cm) -> tuple[float, ...] | None:
        vs = []
        for metric, direction in zip(metrics, directions):
            v = metric_value(dataset, cm, metric)
            if v is None:
                return None
            vs.append(-v if direction is Direction.MAXIMIZE else v)
        return tuple(vs)

    def dominates(a: tuple[float, ...], b: tuple[float, ...]) -> bool:
        return all(x <= y for x, y in zip(a, b)) and any(x < y for x, y in zip(a, b))

    front: list[tuple[tuple[float, ...], int, object]] = []
    for idx, cm in enumerate(dataset.entries.values()):
        v = vector(cm)
        if v is None:
            continue
        if any(dominates(fv, v) for fv, _, _ in front):
            continue
        front = [(fv, i, fcm) for fv, i, fcm in front if not dominates(v, fv)]
        front.append((v, idx, cm))
    front.sort(key=lambda item: item[1])
    return [cm for _, _, cm in front]
