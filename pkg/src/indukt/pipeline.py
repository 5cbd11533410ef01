"""One trial, end to end.

Hypothesis-search mode: sample 64 rule hypotheses, condense them to 8
summaries in one call, then implement each summary as 8 candidate programs
with up to 3 refinement rounds per candidate, short-circuiting as soon as a
program passes every training example.  The tied-best programs (by training
accuracy, deduplicated) are all scored on the held-out test example and
their mean exact-match is the trial's test accuracy.

Direct mode: one greedy completion, no refinement.
"""

from __future__ import annotations

import re
import time
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from . import listdsl, prompts
from .corpus import TrialSpec
from .executor import (
    ExampleResult,
    ExecutionReport,
    Executor,
    format_error_report,
)
from .providers import CompletionRequest, Provider, ProviderError

HYPOTHESIS_SEARCH = "hypothesis_search"
DIRECT = "direct"
MODES = (HYPOTHESIS_SEARCH, DIRECT)

PAPER_ACCOUNTING = "paper"
STRICT_ACCOUNTING = "strict"

NO_HYPOTHESIS = "(no hypothesis)"
FALLBACK_PROGRAM = "identity"


@dataclass(frozen=True)
class PipelineConfig:
    n_generator: int = 64
    n_summaries: int = 8
    n_candidates: int = 8
    max_refinements: int = 3
    max_tokens: int = 1000
    model_name: str = "default"
    budget_accounting: str = PAPER_ACCOUNTING
    language: str = "the pipe DSL"
    language_help: Optional[str] = None
    sampling: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.budget_accounting not in (PAPER_ACCOUNTING, STRICT_ACCOUNTING):
            raise ValueError(f"unknown budget_accounting {self.budget_accounting!r}")
        for name in ("n_generator", "n_summaries", "n_candidates", "max_tokens"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.max_refinements < 0:
            raise ValueError("max_refinements must be >= 0")

    def profile(self, stage: str) -> prompts.SamplingProfile:
        return self.sampling.get(stage, prompts.STAGE_SAMPLING[stage])

    def help_text(self) -> str:
        if self.language_help is not None:
            return self.language_help
        return prompts.dsl_language_help()

    @property
    def implementor_call_cap(self) -> int:
        cap = self.n_summaries * self.n_candidates * self.max_refinements
        if self.budget_accounting == STRICT_ACCOUNTING:
            cap += self.n_summaries
        return cap

    @property
    def total_call_cap(self) -> int:
        return self.n_generator + 1 + self.implementor_call_cap

    @property
    def version_cap(self) -> int:
        return self.n_summaries * self.n_candidates * (1 + self.max_refinements)


@dataclass(frozen=True)
class Hypothesis:
    text: str
    source: str  # "generator" or "summarizer"
    index: int  # 1-based sample index / summary slot


@dataclass(frozen=True)
class ProgramVersion:
    text: str
    report: ExecutionReport
    round: int  # 0 = initial sample, 1..max_refinements = refinements


@dataclass(frozen=True)
class CandidateProgram:
    hypothesis_slot: int
    candidate_index: int
    versions: tuple[ProgramVersion, ...]

    @property
    def final_train_accuracy(self) -> float:
        return max(v.report.train_accuracy for v in self.versions)

    @property
    def best_version(self) -> ProgramVersion:
        best = self.versions[0]
        for v in self.versions[1:]:
            if v.report.train_accuracy > best.report.train_accuracy:
                best = v
        return best

    @property
    def passed(self) -> bool:
        return any(v.report.all_passed for v in self.versions)


@dataclass
class BudgetLedger:
    """Per-trial call and version counters.

    ``wall_time`` is measured for live runs but deliberately excluded from
    serialization so record/replay round-trips stay byte-identical.
    """

    generator_calls: int = 0
    summarizer_calls: int = 0
    implementor_calls: int = 0
    program_versions: int = 0
    wall_time: float = 0.0

    @property
    def total_calls(self) -> int:
        return self.generator_calls + self.summarizer_calls + self.implementor_calls

    def assert_within(self, config: PipelineConfig) -> None:
        if self.generator_calls > config.n_generator:
            raise AssertionError(f"generator_calls {self.generator_calls} over cap")
        if self.summarizer_calls > 1:
            raise AssertionError(f"summarizer_calls {self.summarizer_calls} over cap")
        if self.implementor_calls > config.implementor_call_cap:
            raise AssertionError(f"implementor_calls {self.implementor_calls} over cap")
        if self.total_calls > config.total_call_cap:
            raise AssertionError(f"total_calls {self.total_calls} over cap")
        if self.program_versions > config.version_cap:
            raise AssertionError(f"program_versions {self.program_versions} over cap")


@dataclass(frozen=True)
class TrialOutcome:
    task_id: str
    run_id: str
    trial_index: int
    mode: str
    generator_hypotheses: tuple[str, ...]
    summaries: tuple[str, ...]
    candidates: tuple[CandidateProgram, ...]
    selected: tuple[str, ...]
    train_solved: bool
    test_accuracy: float
    test_solved_any: bool
    ledger: BudgetLedger
    events: tuple[str, ...] = ()
    infrastructure_error: Optional[str] = None


def extract_program(text: str) -> str:
    """Pull the program out of a model response.

    First fenced code block if present, else the longest line that parses
    as a DSL program, else the whole stripped response.
    """
    m = re.search(r"```[a-zA-Z_]*\n?(.*?)```", text, re.DOTALL)
    if m:
        return m.group(1).strip()
    parseable = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        try:
            listdsl.parse(line)
        except listdsl.DslParseError:
            continue
        parseable.append(line)
    if parseable:
        return max(parseable, key=len)
    return text.strip()


def _normalize_hypothesis(text: str) -> str:
    return re.sub(r"\s+", " ", text.strip()).casefold()


def _canonical_program(text: str) -> str:
    try:
        return listdsl.canonical(text)
    except listdsl.DslParseError:
        return " ".join(text.split())


def _request(
    stage: str, context: dict, config: PipelineConfig, n_samples: int
) -> CompletionRequest:
    profile = config.profile(stage)
    return CompletionRequest(
        messages=tuple(prompts.render_prompt(stage, context)),
        temperature=profile.temperature,
        top_p=profile.top_p,
        n_samples=n_samples,
        max_tokens=config.max_tokens,
        model_name=config.model_name,
    )


def generate_hypotheses(
    trial: TrialSpec, provider: Provider, config: PipelineConfig, ledger: BudgetLedger
) -> tuple[list[Hypothesis], list[str]]:
    """Sample the generator; one multi-sample request, ledgered as n calls."""
    request = _request(
        prompts.GENERATOR,
        {"examples": trial.training, "n_hypotheses": config.n_generator},
        config,
        n_samples=config.n_generator,
    )
    texts = provider.complete(request)
    ledger.generator_calls += config.n_generator
    events = []
    hypotheses = []
    for i, text in enumerate(texts, start=1):
        text = text.strip()
        if not text:
            text = NO_HYPOTHESIS
            events.append(f"generator sample {i} empty; sentinel used")
        hypotheses.append(Hypothesis(text, "generator", i))
    return hypotheses, events


def _top_by_frequency(texts: Sequence[str], k: int) -> list[str]:
    counts: dict[str, int] = {}
    first_form: dict[str, str] = {}
    for text in texts:
        key = _normalize_hypothesis(text)
        counts[key] = counts.get(key, 0) + 1
        first_form.setdefault(key, text)
    ordered = sorted(first_form, key=lambda key: -counts[key])  # stable: ties keep first-seen order
    return [first_form[key] for key in ordered[:k]]


def summarize(
    hypotheses: Sequence[Hypothesis],
    provider: Provider,
    config: PipelineConfig,
    ledger: BudgetLedger,
) -> tuple[list[Hypothesis], list[str]]:
    """One summarizer call condensing the generator output to 8 rules."""
    request = _request(
        prompts.SUMMARIZER,
        {"hypotheses": [h.text for h in hypotheses], "n_summaries": config.n_summaries},
        config,
        n_samples=1,
    )
    response = provider.complete(request)[0]
    ledger.summarizer_calls += 1
    events = []
    parsed = prompts.parse_numbered(response)
    if not parsed:
        fallback = _top_by_frequency([h.text for h in hypotheses], config.n_summaries)
        events.append("summarizer response unparseable; top-by-frequency fallback used")
        parsed = fallback
    elif len(parsed) < config.n_summaries:
        events.append(
            f"summarizer returned {len(parsed)} of {config.n_summaries} summaries"
        )
    parsed = parsed[: config.n_summaries]
    return [Hypothesis(text, "summarizer", i) for i, text in enumerate(parsed, start=1)], events


def implement(
    hypothesis: Hypothesis,
    trial: TrialSpec,
    provider: Provider,
    executor: Executor,
    config: PipelineConfig,
    ledger: BudgetLedger,
) -> tuple[list[CandidateProgram], bool, list[str]]:
    """Implement one summary as candidate programs with refinement.

    Returns (candidates evaluated, whether one passed, events).  Evaluation
    stops at the first passing candidate; later candidates from the same
    batch are never scored.
    """
    events: list[str] = []
    context = {
        "hypothesis": hypothesis.text,
        "examples": trial.training,
        "language": config.language,
        "language_help": config.help_text(),
    }
    batch_request = _request(prompts.IMPLEMENTOR, context, config, n_samples=config.n_candidates)
    try:
        initial_texts = provider.complete(batch_request)
    except ProviderError as exc:
        events.append(f"implementor batch failed for slot {hypothesis.index}: {exc}")
        return [], False, events
    if config.budget_accounting == STRICT_ACCOUNTING:
        ledger.implementor_calls += 1

    candidates: list[CandidateProgram] = []
    for cand_index, raw in enumerate(initial_texts, start=1):
        program = extract_program(raw)
        report = executor.run_candidate(program, trial.training)
        versions = [ProgramVersion(program, report, round=0)]
        ledger.program_versions += 1
        current = versions[0]
        for round_no in range(1, config.max_refinements + 1):
            if current.report.all_passed:
                break
            refine_request = _request(
                prompts.REFINEMENT,
                {
                    **context,
                    "program": current.text,
                    "error_report": format_error_report(current.report),
                },
                config,
                n_samples=1,
            )
            try:
                revision = provider.complete(refine_request)[0]
            except ProviderError as exc:
                events.append(
                    f"refinement failed for slot {hypothesis.index} candidate {cand_index}: {exc}"
                )
                break
            ledger.implementor_calls += 1
            program = extract_program(revision)
            report = executor.run_candidate(program, trial.training)
            current = ProgramVersion(program, report, round=round_no)
            versions.append(current)
            ledger.program_versions += 1
        candidate = CandidateProgram(hypothesis.index, cand_index, tuple(versions))
        candidates.append(candidate)
        if candidate.passed:
            return candidates, True, events
    return candidates, False, events


def _select(candidates: Sequence[CandidateProgram]) -> tuple[list[str], float]:
    """Tied-best program texts (canonical, deduplicated) and their accuracy."""
    best = max(c.final_train_accuracy for c in candidates)
    seen = set()
    selected = []
    for c in candidates:
        if c.final_train_accuracy == best:
            text = c.best_version.text
            key = _canonical_program(text)
            if key not in seen:
                seen.add(key)
                selected.append(text)
    return selected, best


def _score_test(
    selected: Sequence[str], trial: TrialSpec, executor: Executor
) -> tuple[float, bool]:
    expected = tuple(trial.test.output)
    hits = 0
    for program in selected:
        prediction = executor.predict(program, trial.test.input)
        if prediction.ok and prediction.output == expected:
            hits += 1
    accuracy = hits / len(selected) if selected else 0.0
    return accuracy, hits > 0


def run_trial_hypothesis_search(
    trial: TrialSpec,
    provider: Provider,
    executor: Executor,
    config: PipelineConfig = PipelineConfig(),
    run_id: str = "",
) -> TrialOutcome:
    started = time.monotonic()
    ledger = BudgetLedger()
    events: list[str] = []

    hypotheses, gen_events = generate_hypotheses(trial, provider, config, ledger)
    events.extend(gen_events)
    summaries, sum_events = summarize(hypotheses, provider, config, ledger)
    events.extend(sum_events)

    candidates: list[CandidateProgram] = []
    if trial.training:
        implemented: set[str] = set()
        for summary in summaries:
            key = _normalize_hypothesis(summary.text)
            if key in implemented:
                events.append(f"summary slot {summary.index} duplicates an earlier slot")
                continue
            implemented.add(key)
            batch, solved, impl_events = implement(
                summary, trial, provider, executor, config, ledger
            )
            events.extend(impl_events)
            candidates.extend(batch)
            if solved:
                break

    if candidates:
        selected, best = _select(candidates)
        train_solved = best == 1.0
    else:
        if trial.training:
            events.append("no candidates evaluated; identity fallback selected")
        selected, train_solved = [FALLBACK_PROGRAM], False
    test_accuracy, test_any = _score_test(selected, trial, executor)

    ledger.wall_time = time.monotonic() - started
    ledger.assert_within(config)
    return TrialOutcome(
        task_id=trial.task_id,
        run_id=run_id,
        trial_index=trial.trial_index,
        mode=HYPOTHESIS_SEARCH,
        generator_hypotheses=tuple(h.text for h in hypotheses),
        summaries=tuple(s.text for s in summaries),
        candidates=tuple(candidates),
        selected=tuple(selected),
        train_solved=train_solved,
        test_accuracy=test_accuracy,
        test_solved_any=test_any,
        ledger=ledger,
        events=tuple(events),
    )


def run_trial_direct(
    trial: TrialSpec,
    provider: Provider,
    executor: Executor,
    config: PipelineConfig = PipelineConfig(),
    run_id: str = "",
) -> TrialOutcome:
    started = time.monotonic()
    ledger = BudgetLedger()
    events: list[str] = []

    request = _request(
        prompts.DIRECT,
        {
            "examples": trial.training,
            "language": config.language,
            "language_help": config.help_text(),
        },
        config,
        n_samples=1,
    )
    response = provider.complete(request)[0]
    ledger.implementor_calls += 1
    program = extract_program(response)

    if trial.training:
        report = executor.run_candidate(program, trial.training)
    else:
        report = ExecutionReport(())
    version = ProgramVersion(program, report, round=0)
    ledger.program_versions += 1
    candidate = CandidateProgram(hypothesis_slot=0, candidate_index=1, versions=(version,))

    selected = [program]
    test_accuracy, test_any = _score_test(selected, trial, executor)

    ledger.wall_time = time.monotonic() - started
    return TrialOutcome(
        task_id=trial.task_id,
        run_id=run_id,
        trial_index=trial.trial_index,
        mode=DIRECT,
        generator_hypotheses=(),
        summaries=(),
        candidates=(candidate,),
        selected=tuple(selected),
        train_solved=bool(trial.training) and report.all_passed,
        test_accuracy=test_accuracy,
        test_solved_any=test_any,
        ledger=ledger,
        events=tuple(events),
    )


# --- serialization -------------------------------------------------------

def _result_to_dict(r: ExampleResult) -> dict:
    return {
        "input": list(r.input),
        "expected": list(r.expected) if r.expected is not None else None,
        "actual": list(r.actual) if r.actual is not None else None,
        "status": r.status,
        "error_message": r.error_message,
    }


def _result_from_dict(d: dict) -> ExampleResult:
    return ExampleResult(
        input=tuple(d["input"]),
        expected=tuple(d["expected"]) if d["expected"] is not None else None,
        actual=tuple(d["actual"]) if d["actual"] is not None else None,
        status=d["status"],
        error_message=d["error_message"],
    )


def _candidate_to_dict(c: CandidateProgram) -> dict:
    return {
        "hypothesis_slot": c.hypothesis_slot,
        "candidate_index": c.candidate_index,
        "versions": [
            {
                "text": v.text,
                "round": v.round,
                "results": [_result_to_dict(r) for r in v.report.results],
            }
            for v in c.versions
        ],
    }


def _candidate_from_dict(d: dict) -> CandidateProgram:
    versions = tuple(
        ProgramVersion(
            text=v["text"],
            report=ExecutionReport(tuple(_result_from_dict(r) for r in v["results"])),
            round=v["round"],
        )
        for v in d["versions"]
    )
    return CandidateProgram(d["hypothesis_slot"], d["candidate_index"], versions)


def outcome_to_dict(outcome: TrialOutcome) -> dict:
    # wall_time stays out so replayed runs serialize byte-identically
    return {
        "task_id": outcome.task_id,
        "run_id": outcome.run_id,
        "trial_index": outcome.trial_index,
        "mode": outcome.mode,
        "generator_hypotheses": list(outcome.generator_hypotheses),
        "summaries": list(outcome.summaries),
        "candidates": [_candidate_to_dict(c) for c in outcome.candidates],
        "selected": list(outcome.selected),
        "train_solved": outcome.train_solved,
        "test_accuracy": outcome.test_accuracy,
        "test_solved_any": outcome.test_solved_any,
        "ledger": {
            "generator_calls": outcome.ledger.generator_calls,
            "summarizer_calls": outcome.ledger.summarizer_calls,
            "implementor_calls": outcome.ledger.implementor_calls,
            "program_versions": outcome.ledger.program_versions,
        },
        "events": list(outcome.events),
        "infrastructure_error": outcome.infrastructure_error,
    }


def outcome_from_dict(d: dict) -> TrialOutcome:
    ledger = BudgetLedger(
        generator_calls=d["ledger"]["generator_calls"],
        summarizer_calls=d["ledger"]["summarizer_calls"],
        implementor_calls=d["ledger"]["implementor_calls"],
        program_versions=d["ledger"]["program_versions"],
    )
    return TrialOutcome(
        task_id=d["task_id"],
        run_id=d["run_id"],
        trial_index=d["trial_index"],
        mode=d["mode"],
        generator_hypotheses=tuple(d["generator_hypotheses"]),
        summaries=tuple(d["summaries"]),
        candidates=tuple(_candidate_from_dict(c) for c in d["candidates"]),
        selected=tuple(d["selected"]),
        train_solved=d["train_solved"],
        test_accuracy=d["test_accuracy"],
        test_solved_any=d["test_solved_any"],
        ledger=ledger,
        events=tuple(d["events"]),
        infrastructure_error=d.get("infrastructure_error"),
    )
