"""Scripted workload runs: sleep through the three phases, stamp each boundary.

Markers go to stdout one line at a time and are flushed immediately, so an
orchestrator reading the pipe sees them close to when they were stamped.
"""

from __future__ import annotations

import math
import sys
import time
from dataclasses import dataclass
from enum import Enum


class ShimError(Exception):
    """Invalid script parameters or a backend that cannot do its job."""


class FailurePoint(Enum):
    """Where a scripted run gives up, for exercising an orchestrator's failure paths."""

    DURING_LOAD = "load"
    DURING_GENERATE = "gen"
    HANG = "hang"


EXIT_LOAD_FAILURE = 3
EXIT_GENERATE_FAILURE = 4

_HANG_NAP_S = 3600.0


@dataclass(frozen=True)
class ShimScript:
    """Phase durations and the token count for one simulated run."""

    idle_s: float
    load_s: float
    gen_s: float
    tokens: int
    failure_point: FailurePoint | None = None

    def __post_init__(self) -> None:
        for name in ("idle_s", "load_s", "gen_s"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value) or value < 0:
                raise ShimError(f"{name} must be a finite non-negative number, got {value!r}")
        if not isinstance(self.tokens, int) or isinstance(self.tokens, bool) or self.tokens <= 0:
            raise ShimError(f"tokens must be a positive integer, got {self.tokens!r}")


def emit_marker(out, name: str, t: float) -> None:
    """Write one boundary marker and flush so receipt time tracks emission."""
    out.write(f"@@BENCH {name} {t:.6f}\n")
    out.flush()


def emit_tokens(out, count: int) -> None:
    out.write(f"@@BENCH TOKENS {count}\n")
    out.flush()


def run_shim(
    script: ShimScript,
    out=None,
    err=None,
    clock=time.perf_counter,
    sleep=time.sleep,
) -> int:
    """Play the script: markers around each phase, then the token count.

    Returns the intended process exit status: 0 for a completed run, nonzero
    at the scripted failure point. A HANG script never returns on its own;
    whoever spawned the process is expected to kill it.

    ``clock`` and ``sleep`` are injectable for tests.
    """
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err

    emit_marker(out, "IDLE_START", clock())
    sleep(script.idle_s)
    emit_marker(out, "IDLE_END", clock())

    emit_marker(out, "MODEL_LOAD_START", clock())
    if script.failure_point is FailurePoint.DURING_LOAD:
        print("shim: scripted failure during model load", file=err)
        return EXIT_LOAD_FAILURE
    if script.failure_point is FailurePoint.HANG:
        print("shim: scripted hang, waiting to be killed", file=err)
        while True:
            sleep(_HANG_NAP_S)
    sleep(script.load_s)
    emit_marker(out, "MODEL_LOAD_END", clock())

    emit_marker(out, "GENERATE_START", clock())
    if script.failure_point is FailurePoint.DURING_GENERATE:
        print("shim: scripted failure during generation", file=err)
        return EXIT_GENERATE_FAILURE
    sleep(script.gen_s)
    emit_marker(out, "GENERATE_END", clock())

    emit_tokens(out, script.tokens)
    return 0
