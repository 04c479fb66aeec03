"""Runs phase-marked workloads under telemetry sampling and assembles run logs."""

from __future__ import annotations

import logging
import queue
import re
import shlex
import subprocess
import threading
import time
from dataclasses import dataclass
from enum import Enum

from .errors import MarkerError, SamplerError, ValidationError
from .model import ConfigPoint, SweepPlan, enumerate_sweep
from .sampler import (
    SamplerSpec,
    TelemetrySample,
    start_sampling,
    stop_sampling,
    synthesize_samples,
)

logger = logging.getLogger(__name__)

MARKER_PREFIX = "@@BENCH "
DEFAULT_TIMEOUT_S = 600.0


class Phase(Enum):
    IDLE = "idle"
    MODEL_LOAD = "model_load"
    GENERATE = "generate"


class Boundary(Enum):
    START = "start"
    END = "end"


#: The only legal event order within a run.
PHASE_SEQUENCE: tuple[tuple[Phase, Boundary], ...] = (
    (Phase.IDLE, Boundary.START),
    (Phase.IDLE, Boundary.END),
    (Phase.MODEL_LOAD, Boundary.START),
    (Phase.MODEL_LOAD, Boundary.END),
    (Phase.GENERATE, Boundary.START),
    (Phase.GENERATE, Boundary.END),
)


@dataclass(frozen=True)
class PhaseEvent:
    """A phase boundary stamped on receipt, with the workload's own clock when sent."""

    phase: Phase
    boundary: Boundary
    t_receipt: float
    t_workload: float | None = None


@dataclass(frozen=True)
class PhaseMarker:
    """A parsed phase-boundary marker line (no receipt time attached yet)."""

    phase: Phase
    boundary: Boundary
    t_workload: float


@dataclass(frozen=True)
class TokenMarker:
    """The terminal token-count marker."""

    count: int


@dataclass(frozen=True)
class RunStatus:
    state: str  # "completed" | "failed"
    reason: str | None = None

    @classmethod
    def completed(cls) -> "RunStatus":
        return cls("completed")

    @classmethod
    def failed(cls, reason: str) -> "RunStatus":
        return cls("failed", reason)

    @property
    def is_completed(self) -> bool:
        return self.state == "completed"


@dataclass(frozen=True)
class RunLog:
    """Everything recorded for one iteration of one configuration point."""

    config: ConfigPoint
    iteration: int
    events: tuple[PhaseEvent, ...]
    samples: tuple[TelemetrySample, ...]
    tokens_generated: int
    status: RunStatus

    def __post_init__(self) -> None:
        object.__setattr__(self, "events", tuple(self.events))
        object.__setattr__(self, "samples", tuple(self.samples))
        if self.iteration < 0:
            raise ValidationError("iteration must be >= 0")
        if self.tokens_generated < 0:
            raise ValidationError("tokens_generated must be >= 0")
        receipts = [e.t_receipt for e in self.events]
        if any(b < a for a, b in zip(receipts, receipts[1:])):
            raise ValidationError("events must be non-decreasing in t_receipt")
        for got, want in zip(self.events, PHASE_SEQUENCE):
            if (got.phase, got.boundary) != want:
                raise ValidationError("events must follow the idle/load/generate sequence")
        ts = [s.t for s in self.samples]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValidationError("samples must strictly increase in t")
        if self.status.is_completed:
            if len(self.events) != len(PHASE_SEQUENCE):
                raise ValidationError("a completed log must contain all six phase events")
            if self.tokens_generated <= 0:
                raise ValidationError("a completed log must record a positive token count")

    def event(self, phase: Phase, boundary: Boundary) -> PhaseEvent | None:
        for e in self.events:
            if e.phase is phase and e.boundary is boundary:
                return e
        return None


_PHASE_RE = re.compile(r"@@BENCH (IDLE|MODEL_LOAD|GENERATE)_(START|END) (\d+\.\d{6,})")
_TOKENS_RE = re.compile(r"@@BENCH TOKENS (\d+)")


def parse_marker_line(line: str) -> PhaseMarker | TokenMarker | None:
    """Parse one output line against the marker grammar.

    Returns None for ordinary workload chatter. Lines carrying the reserved
    prefix must match the grammar exactly or :class:`MarkerError` is raised.
    """
    line = line.rstrip("\r\n")
    if not line.startswith(MARKER_PREFIX):
        return None
    m = _PHASE_RE.fullmatch(line)
    if m:
        return PhaseMarker(Phase[m.group(1)], Boundary[m.group(2)], float(m.group(3)))
    m = _TOKENS_RE.fullmatch(line)
    if m:
        return TokenMarker(int(m.group(1)))
    raise MarkerError(f"malformed marker line: {line!r}")


@dataclass(frozen=True)
class WorkloadTemplate:
    """Launch command with {model}, {quant}, {tokens}, {idle_seconds} placeholders."""

    command: str

    def resolve(self, config: ConfigPoint, token_target: int, idle_seconds: float) -> list[str]:
        tokens = shlex.split(self.command)
        if not tokens:
            raise ValidationError("workload template is empty")
        try:
            return [
                tok.format(
                    model=config.model,
                    quant=config.quantization.value,
                    tokens=token_target,
                    idle_seconds=idle_seconds,
                )
                for tok in tokens
            ]
        except (KeyError, IndexError) as exc:
            raise ValidationError(f"workload template has an unknown placeholder: {exc}") from exc


_EOF = object()


def _reader(stream, out: "queue.Queue[tuple[float, object]]") -> None:
    for line in stream:
        out.put((time.monotonic(), line))
    out.put((time.monotonic(), _EOF))


def run_single(
    config: ConfigPoint,
    iteration: int,
    template: WorkloadTemplate,
    sampler_spec: SamplerSpec,
    timeout: float = DEFAULT_TIMEOUT_S,
    *,
    token_target: int,
    idle_seconds: float,
) -> RunLog:
    """Run one workload subprocess under sampling and assemble its RunLog.

    Marker lines are timestamped on receipt with the same monotonic clock the
    sampler uses. With a deterministic-mode sampler spec, receipt times are
    instead rebased onto the workload's own timestamps and the sample list is
    synthesized on the exact interval grid, making the log reproducible.
    """
    if timeout <= 0:
        raise ValidationError("timeout must be > 0")
    command = template.resolve(config, token_target, idle_seconds)
    deterministic = sampler_spec.deterministic and sampler_spec.is_mock

    handle = None if deterministic else start_sampling(sampler_spec)

    events: list[tuple[float, PhaseMarker]] = []  # (t_receipt_abs, marker)
    tokens: int | None = None
    status: RunStatus | None = None

    try:
        proc = subprocess.Popen(
            command,
            stdout=subprocess.PIPE,
            text=True,
            encoding="utf-8",
            errors="replace",
        )
    except OSError as exc:
        logger.warning("workload spawn failed for %s: %s", config.label(), exc)
        return _assemble(
            config, iteration, [], None, RunStatus.failed("spawn"), handle, sampler_spec
        )

    lines: "queue.Queue[tuple[float, object]]" = queue.Queue()
    reader = threading.Thread(target=_reader, args=(proc.stdout, lines), daemon=True)
    reader.start()
    deadline = time.monotonic() + timeout

    def fail(reason: str) -> RunStatus:
        proc.kill()
        proc.wait()
        return RunStatus.failed(reason)

    while status is None:
        try:
            t_receipt, item = lines.get(timeout=max(0.0, deadline - time.monotonic()))
        except queue.Empty:
            status = fail("timeout")
            break
        if item is _EOF:
            try:
                rc = proc.wait(timeout=max(0.0, deadline - time.monotonic()))
            except subprocess.TimeoutExpired:
                status = fail("timeout")
                break
            if rc != 0:
                status = RunStatus.failed("crash")
            elif len(events) == len(PHASE_SEQUENCE) and tokens is not None and tokens > 0:
                status = RunStatus.completed()
            else:
                status = RunStatus.failed("protocol")
            break
        try:
            marker = parse_marker_line(item)  # type: ignore[arg-type]
        except MarkerError as exc:
            logger.warning("%s: %s", config.label(), exc)
            status = fail("protocol")
            break
        if marker is None:
            continue  # workload chatter
        if isinstance(marker, TokenMarker):
            if len(events) != len(PHASE_SEQUENCE) or tokens is not None:
                status = fail("protocol")
                break
            tokens = marker.count
            continue
        if len(events) >= len(PHASE_SEQUENCE) or (marker.phase, marker.boundary) != PHASE_SEQUENCE[len(events)]:
            status = fail("protocol")
            break
        if events and marker.t_workload < events[-1][1].t_workload:
            status = fail("protocol")
            break
        events.append((t_receipt, marker))

    reader.join(timeout=2.0)
    return _assemble(config, iteration, events, tokens, status, handle, sampler_spec)


def _assemble(
    config: ConfigPoint,
    iteration: int,
    raw_events: list[tuple[float, PhaseMarker]],
    tokens: int | None,
    status: RunStatus,
    handle,
    sampler_spec: SamplerSpec,
) -> RunLog:
    if handle is not None:
        # Let the ticker cover the tail of the run so samples span every event.
        time.sleep(sampler_spec.interval_s)
        raw_samples = stop_sampling(handle)
        if handle.failure is not None:
            raise SamplerError(f"telemetry sampler failed: {handle.failure}")
        t0 = handle.t0
        events = tuple(
            PhaseEvent(m.phase, m.boundary, t_receipt - t0, m.t_workload)
            for t_receipt, m in raw_events
        )
        samples = tuple(
            TelemetrySample(s.t - t0, s.power_w, s.gpu_mem_mb, s.ram_mb) for s in raw_samples
        )
    else:
        # Deterministic mode: the workload clock defines the run timeline.
        origin = raw_events[0][1].t_workload if raw_events else 0.0
        events = tuple(
            PhaseEvent(m.phase, m.boundary, m.t_workload - origin, m.t_workload)
            for _, m in raw_events
        )
        if events:
            samples = tuple(synthesize_samples(sampler_spec, events[-1].t_receipt))
        else:
            samples = ()
    return RunLog(config, iteration, events, samples, tokens or 0, status)


def run_sweep(
    plan: SweepPlan,
    template: WorkloadTemplate,
    sampler_spec: SamplerSpec,
    *,
    timeout: float = DEFAULT_TIMEOUT_S,
    points: list[ConfigPoint] | None = None,
    on_log=None,
) -> list[RunLog]:
    """Run every point for ``plan.iterations`` back-to-back iterations, in sweep order.

    ``points`` optionally restricts the sweep to a subset (it may be empty, in
    which case nothing is spawned). ``on_log`` is invoked with each RunLog as
    soon as the run ends, before the next run starts; use it to persist logs.
    A sampler failure aborts the sweep; earlier logs have already been handed
    to ``on_log``. A workload spawn failure only fails that run.
    """
    if points is None:
        points = enumerate_sweep(plan)
    logs: list[RunLog] = []
    for point in points:
        for iteration in range(plan.iterations):
            log = run_single(
                point,
                iteration,
                template,
                sampler_spec,
                timeout=timeout,
                token_target=plan.token_target,
                idle_seconds=plan.idle_seconds,
            )
            logs.append(log)
            if on_log is not None:
                on_log(log)
            logger.info(
                "%s iter %d: %s%s",
                point.label(),
                iteration,
                log.status.state,
                f" ({log.status.reason})" if log.status.reason else "",
            )
    return logs
