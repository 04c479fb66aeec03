"""Marker-wrapped inference: validate the model id, load weights, generate.

The default backend wraps a HuggingFace causal LM and imports its stack
lazily, so nothing heavy is touched unless a real model is requested. The
simulated backend stands in for it everywhere in the test suite.
"""

from __future__ import annotations

import sys
import time

from .script import (
    EXIT_GENERATE_FAILURE,
    EXIT_LOAD_FAILURE,
    ShimError,
    emit_marker,
    emit_tokens,
)


class UnknownModelError(ShimError):
    """Model id rejected up front; nothing has been emitted yet."""


class BackendError(ShimError):
    """Loading or generation fell over after the run started."""


class SimulatedBackend:
    """Inference stand-in with scripted timings and failure injection."""

    def __init__(
        self,
        known_models=("sim/tiny", "sim/base"),
        load_s: float = 0.01,
        per_token_s: float = 0.0001,
        fail_at: str | None = None,
    ):
        self.known_models = tuple(known_models)
        self.load_s = load_s
        self.per_token_s = per_token_s
        self.fail_at = fail_at

    def validate(self, model_id: str) -> None:
        if model_id not in self.known_models:
            raise UnknownModelError(
                f"unknown model {model_id!r} (known: {', '.join(self.known_models)})"
            )

    def load(self, model_id: str, int4: bool) -> None:
        if self.fail_at == "load":
            raise BackendError(f"simulated out-of-memory while loading {model_id}")
        time.sleep(self.load_s)

    def generate(self, token_target: int) -> int:
        if self.fail_at == "generate":
            raise BackendError("simulated failure during generation")
        time.sleep(self.per_token_s * token_target)
        return token_target


class HuggingFaceBackend:
    """Loads a causal LM by hub id and generates an exact-length completion.

    Measurement parity note: generation is forced to exactly token_target new
    tokens (greedy, no early stop), since the latency contract assumes a
    fixed-length completion.
    """

    def validate(self, model_id: str) -> None:
        if not model_id or model_id.strip() != model_id:
            raise UnknownModelError(f"model id {model_id!r} is not usable")

    def load(self, model_id: str, int4: bool) -> None:
        try:
            from transformers import AutoModelForCausalLM, AutoTokenizer
        except ImportError as exc:
            raise BackendError(
                f"inference stack unavailable: {exc} (pip install 'edgebench-shim[real]')"
            ) from exc
        kwargs = {}
        if int4:
            from transformers import BitsAndBytesConfig

            kwargs["quantization_config"] = BitsAndBytesConfig(load_in_4bit=True)
        try:
            self._tokenizer = AutoTokenizer.from_pretrained(model_id)
            self._model = AutoModelForCausalLM.from_pretrained(model_id, **kwargs)
        except Exception as exc:
            raise BackendError(f"could not load {model_id}: {exc}") from exc

    def generate(self, token_target: int) -> int:
        try:
            prompt = self._tokenizer("The", return_tensors="pt")
            output = self._model.generate(
                **prompt,
                max_new_tokens=token_target,
                min_new_tokens=token_target,
                do_sample=False,
            )
            return int(output.shape[-1] - prompt["input_ids"].shape[-1])
        except Exception as exc:
            raise BackendError(f"generation failed: {exc}") from exc


def run_real_adapter(
    model_id: str,
    token_target: int,
    idle_s: float = 0.0,
    int4: bool = False,
    backend=None,
    out=None,
    err=None,
    clock=time.perf_counter,
    sleep=time.sleep,
) -> int:
    """Drive a backend under the same marker contract as a scripted run.

    Raises UnknownModelError before anything is written when the model id
    fails validation. Backend trouble after that point leaves a partial
    marker stream and returns a nonzero status, which an orchestrator
    records as a failed run.
    """
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    backend = HuggingFaceBackend() if backend is None else backend
    if not isinstance(token_target, int) or token_target <= 0:
        raise ShimError(f"token target must be a positive integer, got {token_target!r}")
    if not (idle_s >= 0):
        raise ShimError(f"idle_s must be non-negative, got {idle_s!r}")
    backend.validate(model_id)

    emit_marker(out, "IDLE_START", clock())
    sleep(idle_s)
    emit_marker(out, "IDLE_END", clock())

    emit_marker(out, "MODEL_LOAD_START", clock())
    try:
        backend.load(model_id, int4)
    except BackendError as exc:
        print(f"shim: {exc}", file=err)
        return EXIT_LOAD_FAILURE
    emit_marker(out, "MODEL_LOAD_END", clock())

    emit_marker(out, "GENERATE_START", clock())
    try:
        produced = backend.generate(token_target)
    except BackendError as exc:
        print(f"shim: {exc}", file=err)
        return EXIT_GENERATE_FAILURE
    emit_marker(out, "GENERATE_END", clock())

    emit_tokens(out, produced)
    return 0
