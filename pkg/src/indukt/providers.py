"""Chat-completion providers.

Four interchangeable backends sit behind one ``complete(request)`` call:

* :class:`HttpProvider` — live POST to a chat-completions endpoint;
* :class:`ReplayProvider` — serves responses recorded in a transcript;
* :class:`ScriptedProvider` — test double driven by a callable or list;
* :class:`SyntheticProvider` — seeded noisy oracle for a bound task.

:class:`TranscriptRecorder` wraps any of them and appends request/response
pairs to an NDJSON transcript keyed by a canonical request fingerprint, so
a recorded run can later be replayed byte-for-byte.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from random import Random
from typing import Callable, Protocol, Sequence, Union

from . import prompts
from .corpus import Task

DEFAULT_MAX_TOKENS = 1000
API_KEY_ENV_VAR = "INDUKT_API_KEY"

_ROLES = ("system", "user", "assistant")


class ProviderError(Exception):
    """Base class for provider failures."""


class CredentialError(ProviderError):
    pass


class TransportError(ProviderError):
    pass


class ReplayMissError(ProviderError):
    def __init__(self, fingerprint: str):
        super().__init__(f"no recorded response for request fingerprint {fingerprint}")
        self.fingerprint = fingerprint


@dataclass(frozen=True)
class CompletionRequest:
    """One chat-completion call, fully specified.

    ``messages`` is an ordered sequence of (role, text) pairs; roles are
    system/user/assistant.  ``n_samples`` asks for that many independent
    completions in one call.
    """

    messages: tuple[tuple[str, str], ...]
    temperature: float
    top_p: float
    n_samples: int = 1
    max_tokens: int = DEFAULT_MAX_TOKENS
    model_name: str = "default"

    def __post_init__(self):
        object.__setattr__(
            self, "messages", tuple((str(r), str(t)) for r, t in self.messages)
        )
        for role, _ in self.messages:
            if role not in _ROLES:
                raise ValueError(f"unknown message role {role!r}")
        if not self.messages:
            raise ValueError("request needs at least one message")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not 0.0 <= self.top_p <= 1.0:
            raise ValueError("top_p must be in [0, 1]")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")


def canonical_request_json(request: CompletionRequest) -> str:
    """Serialize a request with sorted keys so equal requests hash equal."""
    payload = {
        "messages": [[role, text] for role, text in request.messages],
        "temperature": request.temperature,
        "top_p": request.top_p,
        "n_samples": request.n_samples,
        "max_tokens": request.max_tokens,
        "model_name": request.model_name,
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def request_fingerprint(request: CompletionRequest) -> str:
    return hashlib.sha256(canonical_request_json(request).encode("utf-8")).hexdigest()


class Provider(Protocol):
    def complete(self, request: CompletionRequest) -> list[str]: ...


class _TokenBucket:
    """Blocking requests-per-minute limiter."""

    def __init__(self, per_minute: int, clock=time.monotonic, sleep=time.sleep):
        if per_minute < 1:
            raise ValueError("per_minute must be >= 1")
        self._rate = per_minute / 60.0
        self._capacity = float(per_minute)
        self._tokens = float(per_minute)
        self._clock = clock
        self._sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self._capacity, self._tokens + (now - self._last) * self._rate)
                self._last = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self._rate
            self._sleep(wait)


class HttpProvider:
    """Live backend speaking the common chat-completions JSON shape.

    The credential comes from ``api_key`` or the INDUKT_API_KEY environment
    variable.  Transient failures (connection errors, 429, 5xx) are retried
    with exponential backoff up to ``max_attempts``; anything else raises
    immediately.
    """

    def __init__(
        self,
        endpoint: str,
        api_key: str | None = None,
        requests_per_minute: int | None = None,
        max_attempts: int = 5,
        backoff_base: float = 0.5,
        timeout: float = 120.0,
        session=None,
        sleep=time.sleep,
        clock=time.monotonic,
    ):
        key = api_key if api_key is not None else os.environ.get(API_KEY_ENV_VAR, "")
        if not key:
            raise CredentialError(f"{API_KEY_ENV_VAR} is not set and no api_key was given")
        if session is None:
            import requests

            session = requests.Session()
        self._endpoint = endpoint
        self._api_key = key
        self._session = session
        self._max_attempts = max_attempts
        self._backoff_base = backoff_base
        self._timeout = timeout
        self._sleep = sleep
        self._bucket = (
            _TokenBucket(requests_per_minute, clock=clock, sleep=sleep)
            if requests_per_minute
            else None
        )

    def complete(self, request: CompletionRequest) -> list[str]:
        body = {
            "model": request.model_name,
            "messages": [{"role": r, "content": t} for r, t in request.messages],
            "temperature": request.temperature,
            "top_p": request.top_p,
            "n": request.n_samples,
            "max_tokens": request.max_tokens,
        }
        headers = {"Authorization": f"Bearer {self._api_key}"}
        last_error: Exception | None = None
        for attempt in range(self._max_attempts):
            if attempt:
                self._sleep(self._backoff_base * (2 ** (attempt - 1)))
            if self._bucket is not None:
                self._bucket.acquire()
            try:
                resp = self._session.post(
                    self._endpoint, json=body, headers=headers, timeout=self._timeout
                )
            except Exception as exc:  # connection-level failure: retry
                last_error = exc
                continue
            status = getattr(resp, "status_code", 0)
            if status == 200:
                texts = self._extract(resp.json())
                if len(texts) != request.n_samples:
                    raise TransportError(
                        f"endpoint returned {len(texts)} completions, wanted {request.n_samples}"
                    )
                return texts
            if status == 429 or status >= 500:
                last_error = TransportError(f"HTTP {status} from {self._endpoint}")
                continue
            raise TransportError(f"HTTP {status} from {self._endpoint}: {resp.text[:200]}")
        raise TransportError(
            f"gave up after {self._max_attempts} attempts: {last_error}"
        )

    @staticmethod
    def _extract(payload: dict) -> list[str]:
        if "choices" in payload:
            try:
                return [c["message"]["content"] for c in payload["choices"]]
            except (KeyError, TypeError) as exc:
                raise TransportError(f"malformed choices payload: {exc}")
        if "completions" in payload:
            return [str(t) for t in payload["completions"]]
        raise TransportError("response JSON has neither 'choices' nor 'completions'")


class TranscriptRecorder:
    """Wrap a provider and append every exchange to an NDJSON transcript."""

    def __init__(self, inner: Provider, path: str | os.PathLike):
        self._inner = inner
        self._path = Path(path)
        self._lock = threading.Lock()
        self._file = open(self._path, "a", encoding="utf-8")

    def complete(self, request: CompletionRequest) -> list[str]:
        texts = self._inner.complete(request)
        record = {
            "fp": request_fingerprint(request),
            "req": json.loads(canonical_request_json(request)),
            "resp": list(texts),
        }
        line = json.dumps(record, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
        with self._lock:
            self._file.write(line + "\n")
            self._file.flush()
        return texts

    def bind_task(self, task: Task) -> None:
        bind = getattr(self._inner, "bind_task", None)
        if bind is not None:
            bind(task)

    def close(self) -> None:
        with self._lock:
            self._file.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


class ReplayProvider:
    """Serve recorded responses; unknown requests are a hard error.

    Responses recorded under the same fingerprint are replayed in recording
    order, so repeated identical requests within a run stay faithful — which
    also means replay must see requests in recording order (the harness
    honours ``requires_sequential``).
    """

    requires_sequential = True

    def __init__(self, path: str | os.PathLike):
        self._queues: dict[str, deque[list[str]]] = {}
        self._lock = threading.Lock()
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    record = json.loads(line)
                    fp, resp = record["fp"], record["resp"]
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise ProviderError(f"bad transcript line {lineno}: {exc}")
                self._queues.setdefault(fp, deque()).append([str(t) for t in resp])

    def complete(self, request: CompletionRequest) -> list[str]:
        fp = request_fingerprint(request)
        with self._lock:
            queue = self._queues.get(fp)
            if not queue:
                raise ReplayMissError(fp)
            return queue.popleft()


Script = Union[Callable[[CompletionRequest], Union[str, Sequence[str]]], Sequence]


class ScriptedProvider:
    """Test double: answers come from a callable or a canned list.

    A callable receives the request and returns one text (broadcast to
    ``n_samples`` copies) or a list of exactly ``n_samples`` texts.  A list
    script is consumed one entry per call with the same normalization.
    """

    def __init__(self, script: Script):
        if callable(script):
            self._fn = script
            self._queue = None
        else:
            self._fn = None
            self._queue = deque(script)
        self._lock = threading.Lock()

    def complete(self, request: CompletionRequest) -> list[str]:
        if self._fn is not None:
            answer = self._fn(request)
        else:
            with self._lock:
                if not self._queue:
                    raise ProviderError("scripted provider ran out of responses")
                answer = self._queue.popleft()
        if isinstance(answer, str):
            return [answer] * request.n_samples
        texts = [str(t) for t in answer]
        if len(texts) != request.n_samples:
            raise ProviderError(
                f"script returned {len(texts)} texts for n_samples={request.n_samples}"
            )
        return texts


DECOY_HYPOTHESES = (
    "Sort the numbers in increasing order.",
    "Keep only the even numbers.",
    "Remove the first element of the list.",
    "Double every number in the list.",
    "Return the largest number by itself.",
    "Swap the first and last elements.",
    "Keep every other element, starting with the first.",
    "Replace every number with its position in the list.",
    "Append the sum of the list at the end.",
    "Drop all negative numbers.",
    "Rotate the list one step to the right.",
    "Repeat the first element once for each element.",
)

DECOY_PROGRAMS = (
    "identity",
    "sort",
    "reverse",
    "take 1",
    "drop 1",
    "filter_even",
    "add 1",
    "mul 2",
    "last",
    "sort | reverse",
    "unique",
    "rotate_right 1",
)

_N_SUMMARIES_RE = re.compile(r"exactly (\d+)")


def normalize_rule_text(text: str) -> str:
    """Whitespace/case/punctuation-insensitive form used for rule equality."""
    return re.sub(r"\s+", " ", text.strip().rstrip(".")).casefold()


class SyntheticProvider:
    """Seeded noisy oracle for pipeline tests and Monte Carlo studies.

    Before a trial runs, :meth:`bind_task` points the provider at a task;
    the task's description plays the role of the ground-truth rule and its
    reference program the role of a correct implementation.  Each stage then
    answers correctly with its configured probability and otherwise emits a
    decoy from a fixed pool.  Identical (seed, request) pairs always yield
    identical answers; repeats of the same request advance a per-fingerprint
    counter so they stay deterministic without being constant.
    """

    def __init__(self, seed: int = 0, p_gen: float = 1.0, p_sum: float = 1.0, p_impl: float = 1.0):
        for name, p in (("p_gen", p_gen), ("p_sum", p_sum), ("p_impl", p_impl)):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        self.seed = seed
        self.p_gen = p_gen
        self.p_sum = p_sum
        self.p_impl = p_impl
        self._task: Task | None = None
        self._counts: dict[str, int] = {}
        self._lock = threading.Lock()

    def bind_task(self, task: Task) -> None:
        self._task = task

    def _rng(self, request: CompletionRequest) -> Random:
        fp = request_fingerprint(request)
        with self._lock:
            n = self._counts.get(fp, 0)
            self._counts[fp] = n + 1
        digest = hashlib.sha256(f"{self.seed}:{fp}:{n}".encode()).digest()
        return Random(int.from_bytes(digest[:8], "big"))

    def complete(self, request: CompletionRequest) -> list[str]:
        task = self._task
        if task is None:
            raise ProviderError("synthetic provider has no bound task")
        stage = prompts.stage_of(request.messages)
        rng = self._rng(request)
        if stage == prompts.GENERATOR:
            return [
                task.description if rng.random() < self.p_gen else rng.choice(DECOY_HYPOTHESES)
                for _ in range(request.n_samples)
            ]
        if stage == prompts.SUMMARIZER:
            return [self._summarize(request, rng)] * request.n_samples
        if stage in (prompts.IMPLEMENTOR, prompts.REFINEMENT, prompts.DIRECT):
            return [self._program(rng) for _ in range(request.n_samples)]
        if stage == prompts.EVALUATOR:
            return [self._judge(request)] * request.n_samples
        raise ProviderError(f"synthetic provider cannot answer stage {stage!r}")

    def _summarize(self, request: CompletionRequest, rng: Random) -> str:
        task = self._task
        user = next(text for role, text in request.messages if role == "user")
        m = _N_SUMMARIES_RE.search(user)
        n_summaries = int(m.group(1)) if m else 8
        offered = prompts.parse_numbered(user)
        truth = normalize_rule_text(task.description)
        correct_present = any(normalize_rule_text(h) == truth for h in offered)
        pool = list(DECOY_HYPOTHESES)
        rng.shuffle(pool)
        items = []
        for i in range(n_summaries):
            if correct_present and rng.random() < self.p_sum:
                items.append(task.description)
            else:
                items.append(pool[i % len(pool)])
        return prompts.format_numbered(items)

    def _program(self, rng: Random) -> str:
        task = self._task
        if task.reference_program is not None and rng.random() < self.p_impl:
            return task.reference_program
        return rng.choice(DECOY_PROGRAMS)

    def _judge(self, request: CompletionRequest) -> str:
        truth = candidate = None
        for _, text in request.messages:
            for line in text.splitlines():
                if line.startswith(prompts.EVALUATOR_TRUTH_PREFIX):
                    truth = line[len(prompts.EVALUATOR_TRUTH_PREFIX) :]
                elif line.startswith(prompts.EVALUATOR_CANDIDATE_PREFIX):
                    candidate = line[len(prompts.EVALUATOR_CANDIDATE_PREFIX) :]
        if truth is None or candidate is None:
            raise ProviderError("evaluator request lacks rule lines")
        same = normalize_rule_text(truth) == normalize_rule_text(candidate)
        return "CORRECT" if same else "INCORRECT"
