"""Phase-marked workload process speaking the @@BENCH marker grammar."""

from .adapter import (
    BackendError,
    HuggingFaceBackend,
    SimulatedBackend,
    UnknownModelError,
    run_real_adapter,
)
from .script import FailurePoint, ShimError, ShimScript, run_shim

__all__ = [
    "BackendError",
    "FailurePoint",
    "HuggingFaceBackend",
    "ShimError",
    "ShimScript",
    "SimulatedBackend",
    "UnknownModelError",
    "run_real_adapter",
    "run_shim",
]
