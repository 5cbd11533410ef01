"""Prompt templates for every pipeline stage.

Templates live as data files (``data/prompts/*.txt``) so they can be
swapped without touching code.  Each file holds a ``[system]`` block and
a ``[user]`` block; rendering substitutes only the known ``{slot}``
placeholders, so braces inside user-supplied text are left alone.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from typing import Mapping, Sequence

from . import listdsl
from .corpus import Example

GENERATOR = "generator"
SUMMARIZER = "summarizer"
IMPLEMENTOR = "implementor"
REFINEMENT = "refinement"
DIRECT = "direct"
EVALUATOR = "evaluator"

STAGES = (GENERATOR, SUMMARIZER, IMPLEMENTOR, REFINEMENT, DIRECT, EVALUATOR)

# Static system-text prefixes, one per stage; used to recognize which stage
# produced a request (scripted providers key their behaviour on this).
STAGE_MARKERS = {
    GENERATOR: "You are an expert at spotting patterns",
    SUMMARIZER: "You condense candidate rules",
    IMPLEMENTOR: "You implement list-transformation rules",
    REFINEMENT: "You repair list-transformation programs",
    DIRECT: "You write",
    EVALUATOR: "You judge whether two rule statements",
}

# Line prefixes in the evaluator template; kept as constants so scripted
# judges can parse requests without duplicating template text.
EVALUATOR_TRUTH_PREFIX = "Ground-truth rule: "
EVALUATOR_CANDIDATE_PREFIX = "Candidate rule: "

_SLOT_NAMES = (
    "examples",
    "hypotheses",
    "hypothesis",
    "program",
    "error_report",
    "ground_truth",
    "language",
    "language_help",
    "n_hypotheses",
    "n_summaries",
)


class PromptError(ValueError):
    pass


def _load_template(stage: str) -> tuple[str, str]:
    text = (
        resources.files("indukt.data.prompts").joinpath(f"{stage}.txt").read_text("utf-8")
    )
    m = re.match(r"\[system\]\n(.*?)\n\[user\]\n(.*)", text, re.DOTALL)
    if m is None:
        raise PromptError(f"template for {stage!r} lacks [system]/[user] blocks")
    return m.group(1).strip(), m.group(2).strip()


_TEMPLATE_CACHE: dict[str, tuple[str, str]] = {}


def _template(stage: str) -> tuple[str, str]:
    if stage not in _TEMPLATE_CACHE:
        _TEMPLATE_CACHE[stage] = _load_template(stage)
    return _TEMPLATE_CACHE[stage]


def format_example(example: Example) -> str:
    return f"{list(example.input)} -> {list(example.output)}"


def format_examples(examples: Sequence[Example]) -> str:
    return "\n".join(format_example(ex) for ex in examples)


def format_numbered(items: Sequence[str]) -> str:
    return "\n".join(f"{i}. {item}" for i, item in enumerate(items, start=1))


_NUMBERED_RE = re.compile(r"^\s*(\d+)[.)]\s*(.+?)\s*$")


def parse_numbered(text: str) -> list[str]:
    """Extract the texts of ``1. ...`` / ``2) ...`` lines, in order."""
    items = []
    for line in text.splitlines():
        m = _NUMBERED_RE.match(line)
        if m:
            items.append(m.group(2))
    return items


def _substitute(template: str, slots: Mapping[str, str]) -> str:
    out = template
    for name in _SLOT_NAMES:
        token = "{" + name + "}"
        if token in out:
            if name not in slots:
                raise PromptError(f"missing context field {name!r}")
            out = out.replace(token, slots[name])
    return out


def render_prompt(stage: str, context: Mapping[str, object]) -> list[tuple[str, str]]:
    """Render the stage template into role-tagged messages.

    Context keys by stage:
      generator    examples (sequence of Example)
      summarizer   hypotheses (sequence of str)
      implementor  hypothesis, examples, language, language_help
      refinement   hypothesis, examples, program, error_report, language,
                   language_help
      direct       examples, language, language_help
      evaluator    hypothesis, ground_truth
    """
    if stage not in STAGES:
        raise PromptError(f"unknown stage {stage!r}")
    system, user = _template(stage)

    slots: dict[str, str] = {}
    if "examples" in context:
        slots["examples"] = format_examples(context["examples"])  # type: ignore[arg-type]
    if "hypotheses" in context:
        hyps = list(context["hypotheses"])  # type: ignore[arg-type]
        slots["hypotheses"] = format_numbered(hyps)
        slots["n_hypotheses"] = str(len(hyps))
    for key in ("hypothesis", "program", "error_report", "ground_truth", "language", "language_help"):
        if key in context:
            slots[key] = str(context[key])
    if "n_summaries" in context:
        slots["n_summaries"] = str(context["n_summaries"])

    return [
        ("system", _substitute(system, slots)),
        ("user", _substitute(user, slots)),
    ]


@dataclass(frozen=True)
class SamplingProfile:
    """Decoding knobs used when calling a model for a given stage."""

    temperature: float
    top_p: float


STAGE_SAMPLING = {
    GENERATOR: SamplingProfile(temperature=1.0, top_p=1.0),
    SUMMARIZER: SamplingProfile(temperature=1.0, top_p=0.0),
    IMPLEMENTOR: SamplingProfile(temperature=0.7, top_p=0.0),
    REFINEMENT: SamplingProfile(temperature=0.7, top_p=0.0),
    DIRECT: SamplingProfile(temperature=0.0, top_p=0.0),
    EVALUATOR: SamplingProfile(temperature=0.0, top_p=0.0),
}

# One-line usage notes for each interpreter primitive, stitched into the
# {language_help} slot so code-writing stages know the vocabulary.
_PRIMITIVE_DOCS = {
    "identity": "leave the list unchanged",
    "reverse": "reverse the list",
    "sort": "sort ascending",
    "unique": "drop duplicates, keeping first occurrences",
    "head": "keep only the first element",
    "tail": "drop the first element",
    "last": "keep only the last element",
    "init": "drop the last element",
    "length": "replace the list by [its length]",
    "sum": "replace the list by [sum of elements]",
    "max": "replace the list by [largest element]; [] stays []",
    "min": "replace the list by [smallest element]; [] stays []",
    "take n": "keep the first n elements",
    "drop n": "drop the first n elements",
    "append v": "append v at the end",
    "prepend v": "prepend v at the front",
    "remove v": "remove every occurrence of v",
    "count v": "replace the list by [number of occurrences of v]",
    "add k": "add k to every element",
    "sub k": "subtract k from every element",
    "mul k": "multiply every element by k",
    "mod k": "take every element modulo k (k must be nonzero)",
    "rotate_left n": "rotate left by n positions",
    "rotate_right n": "rotate right by n positions",
    "repeat n": "concatenate n copies of the list (n >= 0)",
    "filter_even": "keep even elements",
    "filter_odd": "keep odd elements",
    "filter_gt v": "keep elements greater than v",
    "filter_lt v": "keep elements less than v",
    "index i": "keep only the element at 1-based position i ([] if out of range)",
    "slice a b": "keep 1-based positions a through b inclusive",
    "replace u v": "replace every occurrence of u with v",
    "insert p v": "insert v at 1-based position p (clamped to the ends)",
    "concat_self": "concatenate the list with itself",
}


def dsl_language_help() -> str:
    """Describe the pipe DSL for the {language_help} slot."""
    lines = [
        "A program is one or more stages joined by '|'; each stage is a",
        "primitive name followed by its integer arguments, e.g.",
        "'sort | take 3 | add 1'.  Stages run left to right on the whole",
        "list.  Available primitives:",
    ]
    for sig, doc in _PRIMITIVE_DOCS.items():
        lines.append(f"  {sig}: {doc}")
    return "\n".join(lines)


def _doc_names() -> set[str]:
    return {sig.split()[0] for sig in _PRIMITIVE_DOCS}


assert _doc_names() == set(listdsl.primitive_names()), "primitive docs out of sync"


def stage_of(messages: Sequence[tuple[str, str]]) -> str:
    """Identify which stage rendered a message list, by its system marker."""
    system = next((text for role, text in messages if role == "system"), "")
    # most specific marker first: "You write" is a prefix-level catch-all
    for stage in (GENERATOR, SUMMARIZER, IMPLEMENTOR, REFINEMENT, EVALUATOR, DIRECT):
        if system.startswith(STAGE_MARKERS[stage]):
            return stage
    raise PromptError("request does not match any stage template")
