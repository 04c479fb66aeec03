"""Domain types, the configuration matrix, and sweep enumeration."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .errors import ValidationError

DEFAULT_ITERATIONS = 5
DEFAULT_TOKEN_TARGET = 512
DEFAULT_IDLE_SECONDS = 15.0


class Quantization(Enum):
    """Parameter precision a model runs at: native 16-bit or 4-bit."""

    INT4 = "int4"
    NONE = "none"

    @classmethod
    def from_label(cls, label: str) -> "Quantization":
        for q in cls:
            if q.value == label:
                return q
        raise ValidationError(f"unknown quantization label {label!r} (expected 'int4' or 'none')")


@dataclass(frozen=True)
class DeviceProfile:
    """One device configuration: identity plus its selectable power models."""

    name: str
    cuda_cores: int
    memory_mb: int
    power_models: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.name:
            raise ValidationError("device name must be non-empty")
        if self.cuda_cores <= 0:
            raise ValidationError(f"device {self.name!r}: cuda_cores must be > 0")
        if self.memory_mb <= 0:
            raise ValidationError(f"device {self.name!r}: memory_mb must be > 0")
        object.__setattr__(self, "power_models", tuple(self.power_models))
        if not self.power_models:
            raise ValidationError(f"device {self.name!r}: power_models must be non-empty")
        if len(set(self.power_models)) != len(self.power_models):
            raise ValidationError(f"device {self.name!r}: duplicate power model names")


@dataclass(frozen=True)
class ModelSpec:
    """A language model identified by id and parameter count."""

    id: str
    parameter_count: int

    def __post_init__(self) -> None:
        if not self.id:
            raise ValidationError("model id must be non-empty")
        if self.parameter_count <= 0:
            raise ValidationError(f"model {self.id!r}: parameter_count must be > 0")


@dataclass(frozen=True)
class ConfigPoint:
    """One cell of the sweep matrix; the 4-tuple keys all downstream joins."""

    device: str
    power_model: str
    model: str
    quantization: Quantization

    def __post_init__(self) -> None:
        object.__setattr__(self, "quantization", _coerce_quant(self.quantization))

    def key(self) -> tuple[str, str, str, str]:
        return (self.device, self.power_model, self.model, self.quantization.value)

    def label(self) -> str:
        return f"{self.device}/{self.power_model}/{self.model}/{self.quantization.value}"


def _coerce_quant(value: Quantization | str) -> Quantization:
    if isinstance(value, Quantization):
        return value
    return Quantization.from_label(value)


@dataclass(frozen=True)
class SweepPlan:
    """The full sweep: device matrix, models, quantizations, and run counts."""

    devices: tuple[DeviceProfile, ...]
    models: tuple[ModelSpec, ...]
    quantizations: tuple[Quantization, ...] = (Quantization.INT4, Quantization.NONE)
    iterations: int = DEFAULT_ITERATIONS
    token_target: int = DEFAULT_TOKEN_TARGET
    idle_seconds: float = DEFAULT_IDLE_SECONDS

    def __post_init__(self) -> None:
        object.__setattr__(self, "devices", tuple(self.devices))
        object.__setattr__(self, "models", tuple(self.models))
        object.__setattr__(self, "quantizations", tuple(self.quantizations))
        if not self.devices:
            raise ValidationError("plan must list at least one device")
        if not self.models:
            raise ValidationError("plan must list at least one model")
        if not self.quantizations:
            raise ValidationError("plan must list at least one quantization")
        if len(set(d.name for d in self.devices)) != len(self.devices):
            raise ValidationError("duplicate device names in plan")
        if len(set(m.id for m in self.models)) != len(self.models):
            raise ValidationError("duplicate model ids in plan")
        if len(set(self.quantizations)) != len(self.quantizations):
            raise ValidationError("duplicate quantizations in plan")
        if self.iterations < 1:
            raise ValidationError("iterations must be >= 1")
        if self.token_target < 1:
            raise ValidationError("token_target must be >= 1")
        if self.idle_seconds < 0:
            raise ValidationError("idle_seconds must be >= 0")

    def device(self, name: str) -> DeviceProfile | None:
        for d in self.devices:
            if d.name == name:
                return d
        return None


def _quant_sort_key(q: Quantization) -> int:
    # Int4 runs before the unquantized variant of the same model.
    return 0 if q is Quantization.INT4 else 1


def enumerate_sweep(plan: SweepPlan) -> list[ConfigPoint]:
    """Every (device, power model, model, quantization) combination.

    Order is total and deterministic: devices as listed in the plan, power
    models as listed in each profile, models by ascending parameter count,
    and Int4 before the unquantized run of the same model.
    """
    models = sorted(plan.models, key=lambda m: (m.parameter_count, m.id))
    quants = sorted(plan.quantizations, key=_quant_sort_key)
    points: list[ConfigPoint] = []
    for device in plan.devices:
        for power_model in device.power_models:
            for model in models:
                for quant in quants:
                    points.append(ConfigPoint(device.name, power_model, model.id, quant))
    return points


def validate_config(point: ConfigPoint, plan: SweepPlan) -> str | None:
    """None when the point belongs to the plan's sweep, else a description."""
    device = plan.device(point.device)
    if device is None:
        return f"unknown device {point.device!r}"
    if point.power_model not in device.power_models:
        return f"power model {point.power_model!r} not offered by device {point.device!r}"
    if not any(m.id == point.model for m in plan.models):
        return f"unknown model {point.model!r}"
    if point.quantization not in plan.quantizations:
        return f"quantization {point.quantization.value!r} not in plan"
    return None
