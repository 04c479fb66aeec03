"""Interval-driven telemetry collection with a deterministic mock backend."""

from __future__ import annotations

import bisect
import logging
import random
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol

from .errors import SamplerError, ValidationError

logger = logging.getLogger(__name__)

MIN_INTERVAL_S = 0.1
STALL_FACTOR = 10.0


@dataclass(frozen=True)
class TelemetrySample:
    """One telemetry reading on the orchestrator's monotonic clock."""

    t: float
    power_w: float
    gpu_mem_mb: float
    ram_mb: float

    def __post_init__(self) -> None:
        if self.power_w < 0 or self.gpu_mem_mb < 0 or self.ram_mb < 0:
            raise ValidationError("telemetry values must be non-negative")


class TelemetryAdapter(Protocol):
    """Interface an external (real-device) telemetry source must provide.

    No implementation ships with the toolkit; register a factory with
    :func:`register_adapter` to use one.
    """

    def poll(self) -> tuple[float, float, float]:
        """Instantaneous (power_w, gpu_mem_mb, ram_mb)."""
        ...


_ADAPTERS: dict[str, Callable[[], TelemetryAdapter]] = {}


def register_adapter(name: str, factory: Callable[[], TelemetryAdapter]) -> None:
    _ADAPTERS[name] = factory


@dataclass(frozen=True)
class TraceScript:
    """Piecewise-linear (t, power, gpu_mem, ram) breakpoints for the mock backend."""

    points: tuple[tuple[float, float, float, float], ...]

    def __post_init__(self) -> None:
        if not self.points:
            raise ValidationError("trace script needs at least one breakpoint")
        times = [p[0] for p in self.points]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValidationError("trace script breakpoints must be strictly ascending in t")
        for t, power, gpu, ram in self.points:
            if power < 0 or gpu < 0 or ram < 0:
                raise ValidationError(f"trace script values at t={t} must be non-negative")

    @classmethod
    def constant(cls, power_w: float, gpu_mem_mb: float = 0.0, ram_mb: float = 0.0) -> "TraceScript":
        return cls(((0.0, power_w, gpu_mem_mb, ram_mb),))

    @classmethod
    def parse(cls, text: str) -> "TraceScript":
        points = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            fields = line.split()
            if len(fields) != 4:
                raise ValidationError(f"trace script line {lineno}: expected 4 fields, got {len(fields)}")
            try:
                points.append(tuple(float(f) for f in fields))
            except ValueError:
                raise ValidationError(f"trace script line {lineno}: non-numeric field") from None
        return cls(tuple(points))

    @classmethod
    def load(cls, path: str | Path) -> "TraceScript":
        return cls.parse(Path(path).read_text())

    def value_at(self, t: float) -> tuple[float, float, float]:
        """Linear interpolation between breakpoints; endpoints held outside the range."""
        pts = self.points
        if t <= pts[0][0]:
            return pts[0][1:]
        if t >= pts[-1][0]:
            return pts[-1][1:]
        times = [p[0] for p in pts]
        hi = bisect.bisect_right(times, t)
        t0, *v0 = pts[hi - 1]
        t1, *v1 = pts[hi]
        w = (t - t0) / (t1 - t0)
        return tuple(a + w * (b - a) for a, b in zip(v0, v1))


@dataclass(frozen=True)
class SamplerSpec:
    """How telemetry is collected: interval plus backend selection.

    ``backend`` is ``"mock"`` (requires ``trace``) or ``"external:<name>"``
    naming a registered adapter. ``deterministic`` switches the mock backend
    from real-time polling to exact sample-grid synthesis; ``seed`` and
    ``jitter`` perturb the synthesized grid reproducibly.
    """

    interval_s: float = 0.25
    backend: str = "mock"
    trace: TraceScript | None = None
    deterministic: bool = False
    seed: int = 0
    jitter: float = 0.0

    def __post_init__(self) -> None:
        if self.interval_s < MIN_INTERVAL_S:
            raise ValidationError(f"interval_s must be >= {MIN_INTERVAL_S}, got {self.interval_s}")
        if self.backend == "mock":
            if self.trace is None:
                raise ValidationError("mock backend requires a trace script")
        elif self.backend.startswith("external:"):
            if self.deterministic:
                raise ValidationError("deterministic mode is only available for the mock backend")
        else:
            raise ValidationError(f"unknown sampler backend {self.backend!r}")
        if not 0.0 <= self.jitter < 0.5:
            raise ValidationError("jitter must lie in [0, 0.5)")

    @property
    def is_mock(self) -> bool:
        return self.backend == "mock"


class SamplerHandle:
    """A running real-time sampler; collects until :meth:`stop`."""

    def __init__(self, spec: SamplerSpec, adapter: TelemetryAdapter | None):
        self._spec = spec
        self._adapter = adapter
        self._samples: list[TelemetrySample] = []
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._run, name="edgebench-sampler", daemon=True)
        self._result: list[TelemetrySample] | None = None
        self.failure: str | None = None
        self.t0 = time.monotonic()
        # Sample synchronously at t0 so collection covers anything the caller
        # starts after this constructor returns.
        try:
            power, gpu, ram = self._read(0.0)
        except Exception as exc:
            self.failure = f"backend poll failed: {exc}"
            logger.error("sampler backend failure: %s", exc)
            return
        self._samples.append(TelemetrySample(self.t0, power, gpu, ram))
        self._thread.start()

    def _read(self, elapsed: float) -> tuple[float, float, float]:
        if self._adapter is not None:
            return self._adapter.poll()
        assert self._spec.trace is not None
        return self._spec.trace.value_at(elapsed)

    def _run(self) -> None:
        interval = self._spec.interval_s
        last_t = self.t0
        k = 1
        while not self._stop.wait(max(0.0, self.t0 + k * interval - time.monotonic())):
            now = time.monotonic()
            if now - last_t > STALL_FACTOR * interval:
                self.failure = "stall"
                logger.error("sampler stalled: %.3f s since last sample", now - last_t)
                return
            try:
                power, gpu, ram = self._read(now - self.t0)
            except Exception as exc:
                self.failure = f"backend poll failed: {exc}"
                logger.error("sampler backend failure: %s", exc)
                return
            if self._samples and now <= self._samples[-1].t:
                continue  # monotonic clock tie; skip rather than violate ordering
            self._samples.append(TelemetrySample(now, power, gpu, ram))
            last_t = now
            k += 1

    def stop(self) -> list[TelemetrySample]:
        """Stop collection and return all samples; idempotent."""
        if self._result is None:
            self._stop.set()
            if self._thread.ident is not None:
                self._thread.join()
            self._result = list(self._samples)
        return list(self._result)


def start_sampling(spec: SamplerSpec) -> SamplerHandle:
    """Begin real-time collection at the nominal interval.

    Actual timestamps are recorded as observed; jitter is preserved. For a
    deterministic-mode spec the grid is synthesized after the fact with
    :func:`synthesize_samples` instead of starting a handle.
    """
    adapter: TelemetryAdapter | None = None
    if not spec.is_mock:
        name = spec.backend.split(":", 1)[1]
        factory = _ADAPTERS.get(name)
        if factory is None:
            raise SamplerError(f"telemetry adapter {name!r} is not registered")
        try:
            adapter = factory()
        except Exception as exc:
            raise SamplerError(f"telemetry adapter {name!r} failed to start: {exc}") from exc
    return SamplerHandle(spec, adapter)


def stop_sampling(handle: SamplerHandle) -> list[TelemetrySample]:
    return handle.stop()


def synthesize_samples(spec: SamplerSpec, t_end: float) -> list[TelemetrySample]:
    """Deterministic mock sample list covering [0, t_end] on the virtual clock.

    Grid steps are exactly ``interval_s`` apart, or reproducibly jittered from
    ``seed`` when ``jitter`` is nonzero; values come from the trace script.
    """
    if not spec.is_mock or spec.trace is None:
        raise SamplerError("sample synthesis requires the mock backend")
    rng = random.Random(spec.seed) if spec.jitter > 0 else None
    samples: list[TelemetrySample] = []
    t = 0.0
    while True:
        samples.append(TelemetrySample(t, *spec.trace.value_at(t)))
        if t >= t_end:
            break
        step = spec.interval_s
        if rng is not None:
            step *= 1.0 + spec.jitter * (2.0 * rng.random() - 1.0)
        t += step
    return samples
