"""Run candidate programs against examples and classify the results.

Two backends: the in-process pipe-DSL interpreter, and an external sandbox
worker spoken to over NDJSON stdio (one request line, one response line,
same order).  Every example is scored independently as match / mismatch /
execution_error; mismatch messages carry the ``expected X, got Y`` text the
refinement prompt appends.
"""

from __future__ import annotations

import json
import subprocess
import threading
from dataclasses import dataclass, field
from typing import Optional, Sequence

from . import listdsl
from .corpus import Example

MATCH = "match"
MISMATCH = "mismatch"
EXECUTION_ERROR = "execution_error"

BUILTIN_DSL = "builtin_dsl"
EXTERNAL_SANDBOX = "external_sandbox"
BACKENDS = (BUILTIN_DSL, EXTERNAL_SANDBOX)

INVALID_SHAPE_MESSAGE = "invalid output shape"

MAX_REPORTED_FAILURES = 3
MAX_FAILURE_CHARS = 200


class ExecutorError(Exception):
    pass


class SandboxUnavailableError(ExecutorError):
    """The external runner cannot be started or stopped responding.

    Distinct from a per-example execution_error: this is an infrastructure
    fault, not a property of the candidate program.
    """


@dataclass(frozen=True)
class ExampleResult:
    input: tuple[int, ...]
    expected: Optional[tuple[int, ...]]
    actual: Optional[tuple[int, ...]]
    status: str
    error_message: Optional[str] = None


@dataclass(frozen=True)
class ExecutionReport:
    results: tuple[ExampleResult, ...]

    @property
    def train_accuracy(self) -> float:
        if not self.results:
            return 0.0
        return sum(1 for r in self.results if r.status == MATCH) / len(self.results)

    @property
    def all_passed(self) -> bool:
        return bool(self.results) and all(r.status == MATCH for r in self.results)

    def failures(self) -> list[ExampleResult]:
        return [r for r in self.results if r.status != MATCH]


@dataclass(frozen=True)
class Prediction:
    """Outcome of running a program on one input with no expected output."""

    output: Optional[tuple[int, ...]]
    error_message: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.output is not None


@dataclass(frozen=True)
class ExecutorConfig:
    backend: str = BUILTIN_DSL
    step_budget: int = listdsl.DEFAULT_STEP_BUDGET
    timeout_s: float = 2.0
    memory_mib: int = 256
    sandbox_cmd: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ValueError(f"unknown executor backend {self.backend!r}")
        if self.step_budget <= 0 or self.timeout_s <= 0 or self.memory_mib <= 0:
            raise ValueError("executor limits must be strictly positive")
        if self.backend == EXTERNAL_SANDBOX and not self.sandbox_cmd:
            raise ValueError("external_sandbox backend needs sandbox_cmd")


def _check_shape(value) -> Optional[list[int]]:
    """Return the value as a flat int list, or None if ill-shaped."""
    if not isinstance(value, list):
        return None
    out = []
    for item in value:
        # bool is an int subclass; reject it explicitly
        if type(item) is not int:
            return None
        out.append(item)
    return out


class SandboxClient:
    """One external worker process, spoken to over NDJSON stdio."""

    def __init__(self, command: Sequence[str], memory_mib: int = 256):
        argv = list(command) + ["--memory-mib", str(memory_mib)]
        try:
            self._proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise SandboxUnavailableError(f"cannot start sandbox worker {argv[0]!r}: {exc}")
        self._lock = threading.Lock()
        self._next_id = 0

    def execute(
        self, program: str, values: Sequence[int], timeout_s: float
    ) -> tuple[Optional[list[int]], Optional[str]]:
        with self._lock:
            rid = self._next_id
            self._next_id += 1
            request = {
                "id": rid,
                "program": program,
                "input": list(values),
                "timeout_ms": int(timeout_s * 1000),
            }
            try:
                self._proc.stdin.write(json.dumps(request) + "\n")
                self._proc.stdin.flush()
                line = self._proc.stdout.readline()
            except (BrokenPipeError, OSError) as exc:
                raise SandboxUnavailableError(f"sandbox worker pipe failed: {exc}")
            if not line:
                raise SandboxUnavailableError("sandbox worker closed its stdout")
            try:
                response = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SandboxUnavailableError(f"sandbox worker sent non-JSON: {exc}")
            if response.get("id") != rid:
                raise SandboxUnavailableError(
                    f"sandbox protocol desync: sent id {rid}, got {response.get('id')!r}"
                )
        if response.get("status") == "ok":
            return response.get("output"), None
        return None, str(response.get("error", "unknown sandbox error"))

    def close(self) -> None:
        try:
            if self._proc.stdin:
                self._proc.stdin.close()
            self._proc.wait(timeout=5)
        except Exception:
            self._proc.kill()

    @property
    def alive(self) -> bool:
        return self._proc.poll() is None


class Executor:
    """Facade over the configured backend.

    An Executor owns at most one sandbox worker; calls through it are
    serialized.  Callers wanting parallel sandbox execution should hold one
    Executor per worker thread.
    """

    def __init__(self, config: ExecutorConfig = ExecutorConfig()):
        self.config = config
        self._client: Optional[SandboxClient] = None
        self._spawn_lock = threading.Lock()

    def _sandbox(self) -> SandboxClient:
        with self._spawn_lock:
            if self._client is None or not self._client.alive:
                self._client = SandboxClient(
                    self.config.sandbox_cmd, memory_mib=self.config.memory_mib
                )
            return self._client

    def _execute(
        self, program_text: str, values: Sequence[int]
    ) -> tuple[Optional[tuple[int, ...]], Optional[str]]:
        if self.config.backend == BUILTIN_DSL:
            outcome = listdsl.evaluate_text(program_text, values, budget=self.config.step_budget)
            if outcome.status != listdsl.OK:
                return None, outcome.detail or outcome.status
            raw = list(outcome.output)
        else:
            raw, error = self._sandbox().execute(program_text, values, self.config.timeout_s)
            if error is not None:
                return None, error
        shaped = _check_shape(raw)
        if shaped is None:
            return None, INVALID_SHAPE_MESSAGE
        return tuple(shaped), None

    def run_candidate(self, program_text: str, examples: Sequence[Example]) -> ExecutionReport:
        if not examples:
            raise ValueError("run_candidate needs at least one example")
        results = []
        for ex in examples:
            actual, error = self._execute(program_text, ex.input)
            expected = tuple(ex.output)
            if error is not None:
                results.append(
                    ExampleResult(tuple(ex.input), expected, None, EXECUTION_ERROR, error)
                )
            elif actual == expected:
                results.append(ExampleResult(tuple(ex.input), expected, actual, MATCH))
            else:
                message = f"expected {list(expected)}, got {list(actual)}"
                results.append(
                    ExampleResult(tuple(ex.input), expected, actual, MISMATCH, message)
                )
        return ExecutionReport(tuple(results))

    def predict(self, program_text: str, values: Sequence[int]) -> Prediction:
        actual, error = self._execute(program_text, values)
        if error is not None:
            return Prediction(None, error)
        return Prediction(actual)

    def close(self) -> None:
        if self._client is not None:
            self._client.close()
            self._client = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def format_error_report(report: ExecutionReport) -> str:
    """Bounded failure digest appended to refinement prompts.

    At most the first ``MAX_REPORTED_FAILURES`` failing examples, each line
    truncated to ``MAX_FAILURE_CHARS`` characters.
    """
    lines = []
    for result in report.failures()[:MAX_REPORTED_FAILURES]:
        line = f"input {list(result.input)}: {result.error_message}"
        if len(line) > MAX_FAILURE_CHARS:
            line = line[: MAX_FAILURE_CHARS - 3] + "..."
        lines.append(line)
    return "\n".join(lines)
