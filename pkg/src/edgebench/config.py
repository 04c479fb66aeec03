"""Loads the toolkit's TOML configuration file.

Sections: [[device]] (the matrix), [[model]], [sweep] defaults, [sampler],
and [workload] with the launch template.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .errors import ValidationError
from .model import (
    DEFAULT_IDLE_SECONDS,
    DEFAULT_ITERATIONS,
    DEFAULT_TOKEN_TARGET,
    DeviceProfile,
    ModelSpec,
    Quantization,
    SweepPlan,
)
from .orchestrator import DEFAULT_TIMEOUT_S, WorkloadTemplate
from .sampler import SamplerSpec, TraceScript


@dataclass(frozen=True)
class BenchConfig:
    plan: SweepPlan
    sampler: SamplerSpec
    template: WorkloadTemplate
    timeout_s: float


def _require(table: dict, key: str, where: str):
    if key not in table:
        raise ValidationError(f"config is missing {where}.{key}")
    return table[key]


def load_config(path: str | Path) -> BenchConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read config file {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(f"config file {path} is not valid TOML: {exc}") from exc

    devices = []
    for i, dev in enumerate(raw.get("device", [])):
        devices.append(
            DeviceProfile(
                name=_require(dev, "name", f"device[{i}]"),
                cuda_cores=_require(dev, "cuda_cores", f"device[{i}]"),
                memory_mb=_require(dev, "memory_mb", f"device[{i}]"),
                power_models=tuple(_require(dev, "power_models", f"device[{i}]")),
            )
        )
    if not devices:
        raise ValidationError("config needs at least one [[device]] table")

    models = []
    for i, mod in enumerate(raw.get("model", [])):
        models.append(
            ModelSpec(
                id=_require(mod, "id", f"model[{i}]"),
                parameter_count=int(_require(mod, "parameters", f"model[{i}]")),
            )
        )
    if not models:
        raise ValidationError("config needs at least one [[model]] table")

    sweep = raw.get("sweep", {})
    if "devices" in sweep:
        by_name = {d.name: d for d in devices}
        missing = [n for n in sweep["devices"] if n not in by_name]
        if missing:
            raise ValidationError(f"sweep.devices names unknown devices: {', '.join(missing)}")
        devices = [by_name[n] for n in sweep["devices"]]
    quants = tuple(
        Quantization.from_label(q) for q in sweep.get("quantizations", ["int4", "none"])
    )
    plan = SweepPlan(
        devices=tuple(devices),
        models=tuple(models),
        quantizations=quants,
        iterations=sweep.get("iterations", DEFAULT_ITERATIONS),
        token_target=sweep.get("token_target", DEFAULT_TOKEN_TARGET),
        idle_seconds=sweep.get("idle_seconds", DEFAULT_IDLE_SECONDS),
    )

    samp = raw.get("sampler", {})
    trace = None
    if "trace" in samp and "trace_text" in samp:
        raise ValidationError("sampler.trace and sampler.trace_text are mutually exclusive")
    if "trace" in samp:
        trace_path = Path(samp["trace"])
        if not trace_path.is_absolute():
            trace_path = path.parent / trace_path
        trace = TraceScript.load(trace_path)
    elif "trace_text" in samp:
        trace = TraceScript.parse(samp["trace_text"])
    sampler = SamplerSpec(
        interval_s=samp.get("interval_s", 0.25),
        backend=samp.get("backend", "mock"),
        trace=trace,
        deterministic=samp.get("deterministic", False),
        seed=samp.get("seed", 0),
        jitter=samp.get("jitter", 0.0),
    )

    workload = raw.get("workload", {})
    template = WorkloadTemplate(_require(workload, "command", "workload"))
    timeout = workload.get("timeout_s", DEFAULT_TIMEOUT_S)
    if not isinstance(timeout, (int, float)) or timeout <= 0:
        raise ValidationError("workload.timeout_s must be a positive number")

    return BenchConfig(plan=plan, sampler=sampler, template=template, timeout_s=float(timeout))
