"""Task corpus: loading, validation, and the 11-trial protocol.

A corpus file is UTF-8 JSON of the form ``{"tasks": [...]}`` where each
task carries an id, a ground-truth rule description, exactly 11
input/output examples, and optionally a reference program in the built-in
DSL.  Reference programs are verified against every example at load time,
so a loaded corpus doubles as an oracle for tests.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, Sequence

from . import listdsl

EXAMPLES_PER_TASK = 11
DEFAULT_VALUE_RANGE = (-1000, 1000)
DEFAULT_MAX_LIST_LEN = 64


class CorpusError(Exception):
    pass


class CorpusParseError(CorpusError):
    """The file is not valid JSON or not shaped like a corpus."""


class CorpusValidationError(CorpusError):
    """A structurally valid file violates a task invariant."""

    def __init__(self, task_id: str, message: str):
        super().__init__(f"task {task_id!r}: {message}")
        self.task_id = task_id


@dataclass(frozen=True)
class Example:
    input: tuple[int, ...]
    output: tuple[int, ...]


@dataclass(frozen=True)
class Task:
    id: str
    description: str
    examples: tuple[Example, ...]
    reference_program: Optional[str] = None


@dataclass(frozen=True)
class TrialSpec:
    """Trial n of a task: the first n-1 examples train, the n-th tests."""

    task_id: str
    trial_index: int
    training: tuple[Example, ...]
    test: Example


@dataclass(frozen=True)
class Corpus:
    tasks: tuple[Task, ...]

    def __len__(self) -> int:
        return len(self.tasks)

    def __iter__(self) -> Iterator[Task]:
        return iter(self.tasks)

    def get(self, task_id: str) -> Task:
        for task in self.tasks:
            if task.id == task_id:
                return task
        raise KeyError(task_id)


def _require_int_list(values: object, task_id: str, what: str) -> tuple[int, ...]:
    if not isinstance(values, list) or any(
        not isinstance(v, int) or isinstance(v, bool) for v in values
    ):
        raise CorpusValidationError(task_id, f"{what} must be a list of integers")
    return tuple(values)


def _parse_task(raw: object) -> Task:
    if not isinstance(raw, dict):
        raise CorpusParseError("each task must be a JSON object")
    task_id = raw.get("id")
    if not isinstance(task_id, str) or not task_id:
        raise CorpusParseError("task missing a string 'id'")

    allowed = {"id", "description", "examples", "reference_program"}
    unknown = set(raw) - allowed
    if unknown:
        raise CorpusValidationError(task_id, f"unknown fields: {sorted(unknown)}")

    description = raw.get("description")
    if not isinstance(description, str) or not description.strip():
        raise CorpusValidationError(task_id, "description is required and must be non-empty")

    raw_examples = raw.get("examples")
    if not isinstance(raw_examples, list):
        raise CorpusValidationError(task_id, "examples must be a list")
    examples = []
    for i, ex in enumerate(raw_examples):
        if not isinstance(ex, dict) or set(ex) != {"input", "output"}:
            raise CorpusValidationError(task_id, f"example {i + 1} must have exactly input/output")
        examples.append(
            Example(
                _require_int_list(ex["input"], task_id, f"example {i + 1} input"),
                _require_int_list(ex["output"], task_id, f"example {i + 1} output"),
            )
        )

    reference = raw.get("reference_program")
    if reference is not None and not isinstance(reference, str):
        raise CorpusValidationError(task_id, "reference_program must be a string or null")

    return Task(task_id, description, tuple(examples), reference)


def _validate_task(
    task: Task,
    value_range: tuple[int, int],
    max_list_len: int,
) -> None:
    if len(task.examples) != EXAMPLES_PER_TASK:
        raise CorpusValidationError(
            task.id, f"expected {EXAMPLES_PER_TASK} examples, found {len(task.examples)}"
        )
    lo, hi = value_range
    for i, ex in enumerate(task.examples):
        for side, values in (("input", ex.input), ("output", ex.output)):
            if len(values) > max_list_len:
                raise CorpusValidationError(
                    task.id, f"example {i + 1} {side} longer than {max_list_len}"
                )
            for v in values:
                if not lo <= v <= hi:
                    raise CorpusValidationError(
                        task.id, f"example {i + 1} {side} value {v} outside {lo}..{hi}"
                    )
    if task.reference_program is not None:
        try:
            program = listdsl.parse(task.reference_program)
        except listdsl.DslParseError as exc:
            raise CorpusValidationError(task.id, f"reference program does not parse: {exc}")
        for i, ex in enumerate(task.examples):
            outcome = listdsl.evaluate(program, list(ex.input))
            if outcome.status != listdsl.OK or tuple(outcome.output or ()) != ex.output:
                got = outcome.output if outcome.status == listdsl.OK else outcome.status
                raise CorpusValidationError(
                    task.id,
                    f"reference program mismatch on example {i + 1}: "
                    f"expected {list(ex.output)}, got {got}",
                )


def load_corpus(
    path: str | Path,
    value_range: tuple[int, int] = DEFAULT_VALUE_RANGE,
    max_list_len: int = DEFAULT_MAX_LIST_LEN,
) -> Corpus:
    """Load and fully validate a corpus file."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CorpusParseError(f"cannot read corpus {path}: {exc}") from exc
    if not isinstance(raw, dict) or set(raw) != {"tasks"} or not isinstance(raw["tasks"], list):
        raise CorpusParseError("corpus must be a JSON object with a single 'tasks' list")

    tasks = [_parse_task(entry) for entry in raw["tasks"]]
    seen: set[str] = set()
    for task in tasks:
        if task.id in seen:
            raise CorpusValidationError(task.id, "duplicate task id")
        seen.add(task.id)
        _validate_task(task, value_range, max_list_len)
    return Corpus(tuple(tasks))


def corpus_to_json(corpus: Corpus) -> dict:
    return {
        "tasks": [
            {
                "id": task.id,
                "description": task.description,
                "examples": [
                    {"input": list(ex.input), "output": list(ex.output)}
                    for ex in task.examples
                ],
                "reference_program": task.reference_program,
            }
            for task in corpus.tasks
        ]
    }


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(corpus_to_json(corpus), indent=2) + "\n", encoding="utf-8"
    )


def trial(task: Task, n: int) -> TrialSpec:
    """Trial n in 1..11: training = examples 1..n-1, test = example n."""
    if not 1 <= n <= len(task.examples):
        raise ValueError(f"trial index {n} out of range 1..{len(task.examples)}")
    return TrialSpec(task.id, n, task.examples[: n - 1], task.examples[n - 1])


def trials(task: Task) -> Iterator[TrialSpec]:
    for n in range(1, len(task.examples) + 1):
        yield trial(task, n)


def oracle_outputs(task: Task, inputs: Sequence[Sequence[int]]) -> list[list[int]]:
    """Interpret the task's reference program on each input."""
    if task.reference_program is None:
        raise CorpusError(f"task {task.id!r} has no reference program")
    program = listdsl.parse(task.reference_program)
    outputs = []
    for values in inputs:
        outcome = listdsl.evaluate(program, list(values))
        if outcome.status != listdsl.OK:
            raise CorpusError(
                f"reference program for {task.id!r} failed on {list(values)}: {outcome.status}"
            )
        outputs.append(list(outcome.output or []))
    return outputs
