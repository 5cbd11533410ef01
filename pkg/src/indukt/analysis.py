"""Per-module error analysis over run logs.

Every scorable trial gets four verdicts — did the generator propose a
correct rule, did a correct rule survive summarization, did the best
program pass training, did it pass the test example — and the joint counts
form a 16-cell contingency table.  From it come conditional success rates,
collapsed odds ratios, and correlations; a published table of the same
shape ships as a fixture so the derivations can be checked against known
numbers.
"""

from __future__ import annotations

import json
import math
import statistics
from dataclasses import dataclass
from importlib import resources
from typing import Callable, Optional, Sequence

from . import prompts
from .corpus import Corpus
from .harness import RunLog
from .pipeline import NO_HYPOTHESIS, TrialOutcome
from .providers import (
    CompletionRequest,
    Provider,
    ProviderError,
    normalize_rule_text,
)

MODULE_NAMES = ("generator", "summarizer", "implementor_train", "implementor_test")

# patterns are F/S strings in MODULE_NAMES order, generator most significant
PATTERNS = tuple(
    "".join("S" if (i >> (3 - b)) & 1 else "F" for b in range(4)) for i in range(16)
)


class AnalysisError(Exception):
    pass


@dataclass(frozen=True)
class ModuleVerdicts:
    """Per-trial module success flags plus the underlying counts."""

    run_id: str
    task_id: str
    trial_index: int
    generator_ok: bool
    summarizer_ok: bool
    implementor_train_ok: bool
    implementor_test_ok: bool
    generator_correct_count: int
    summarizer_correct_count: int
    retained_correct: bool

    @property
    def pattern(self) -> str:
        flags = (
            self.generator_ok,
            self.summarizer_ok,
            self.implementor_train_ok,
            self.implementor_test_ok,
        )
        return "".join("S" if f else "F" for f in flags)


@dataclass(frozen=True)
class ContingencyTable:
    """16 joint counts plus the reported grand total.

    ``total`` normally equals the cell sum; a fixture may carry a published
    total that disagrees with its own cells, in which case rates against
    the total use ``total`` and the mismatch is surfaced, not hidden.
    """

    counts: dict
    total: int

    def __post_init__(self):
        for pattern in PATTERNS:
            if pattern not in self.counts:
                raise AnalysisError(f"contingency table missing cell {pattern}")
        if len(self.counts) != 16:
            extra = set(self.counts) - set(PATTERNS)
            raise AnalysisError(f"unexpected contingency cells {sorted(extra)}")

    @property
    def cell_sum(self) -> int:
        return sum(self.counts.values())

    def count(self, pattern: str) -> int:
        return self.counts[pattern]

    def marginal(self, module: str) -> int:
        """Successes for one module, summed over the other three."""
        i = MODULE_NAMES.index(module)
        return sum(c for p, c in self.counts.items() if p[i] == "S")

    def joint(self, **flags: bool) -> int:
        """Sum of cells matching the given module flags (``module_ok=bool``)."""
        indices = {
            MODULE_NAMES.index(m.removesuffix("_ok")): ("S" if v else "F")
            for m, v in flags.items()
        }
        return sum(
            c
            for p, c in self.counts.items()
            if all(p[i] == want for i, want in indices.items())
        )


# --- judging -------------------------------------------------------------

def judge_hypothesis(
    hypothesis: str,
    ground_truth: str,
    provider: Optional[Provider] = None,
    exact_shortcut: bool = True,
    model_name: str = "default",
) -> Optional[bool]:
    """Is the hypothesis a correct statement of the ground-truth rule?

    Empty or sentinel hypotheses are wrong without a call; normalized exact
    matches are right without a call.  With a provider, one evaluator call
    is made and its CORRECT/INCORRECT token parsed (unparseable counts as
    incorrect).  Returns None when the provider fails, so callers can drop
    the verdict from denominators.
    """
    if not ground_truth:
        raise ValueError("ground_truth must be non-empty")
    text = hypothesis.strip()
    if not text or text == NO_HYPOTHESIS:
        return False
    if exact_shortcut and normalize_rule_text(text) == normalize_rule_text(ground_truth):
        return True
    if provider is None:
        return False
    profile = prompts.STAGE_SAMPLING[prompts.EVALUATOR]
    request = CompletionRequest(
        messages=tuple(
            prompts.render_prompt(
                prompts.EVALUATOR, {"hypothesis": text, "ground_truth": ground_truth}
            )
        ),
        temperature=profile.temperature,
        top_p=profile.top_p,
        n_samples=1,
        model_name=model_name,
    )
    try:
        response = provider.complete(request)[0]
    except ProviderError:
        return None
    upper = response.upper()
    # check INCORRECT first: "CORRECT" is a substring of it
    if "INCORRECT" in upper:
        return False
    if "CORRECT" in upper:
        return True
    return False


Judge = Callable[[str, str], Optional[bool]]


def make_judge(provider: Optional[Provider] = None, model_name: str = "default") -> Judge:
    """Judge closure with a per-hypothesis memo to avoid repeat calls."""
    memo: dict[tuple[str, str], Optional[bool]] = {}

    def judge(hypothesis: str, ground_truth: str) -> Optional[bool]:
        key = (normalize_rule_text(hypothesis), normalize_rule_text(ground_truth))
        if key not in memo:
            memo[key] = judge_hypothesis(hypothesis, ground_truth, provider, model_name=model_name)
        return memo[key]

    return judge


def verdicts_for_logs(
    logs: Sequence[RunLog], corpus: Corpus, judge: Optional[Judge] = None
) -> list[ModuleVerdicts]:
    """Judge every scorable outcome; flagged trials are skipped."""
    if judge is None:
        judge = make_judge()
    verdicts = []
    for log in logs:
        for outcome in log.outcomes:
            if outcome.infrastructure_error is not None:
                continue
            truth = corpus.get(outcome.task_id).description
            gen_count = sum(
                1 for h in outcome.generator_hypotheses if judge(h, truth) is True
            )
            sum_count = sum(1 for s in outcome.summaries if judge(s, truth) is True)
            verdicts.append(
                ModuleVerdicts(
                    run_id=outcome.run_id,
                    task_id=outcome.task_id,
                    trial_index=outcome.trial_index,
                    generator_ok=gen_count >= 1,
                    summarizer_ok=sum_count >= 1,
                    implementor_train_ok=outcome.train_solved,
                    implementor_test_ok=outcome.test_solved_any,
                    generator_correct_count=gen_count,
                    summarizer_correct_count=sum_count,
                    retained_correct=gen_count >= 1 and sum_count >= 1,
                )
            )
    return verdicts


def build_contingency(verdicts: Sequence[ModuleVerdicts]) -> ContingencyTable:
    if not verdicts:
        raise AnalysisError("no verdicts to tabulate")
    counts = {pattern: 0 for pattern in PATTERNS}
    for v in verdicts:
        counts[v.pattern] += 1
    return ContingencyTable(counts=counts, total=len(verdicts))


def load_table2_fixture() -> ContingencyTable:
    raw = json.loads(
        resources.files("indukt.data").joinpath("table2_fixture.json").read_text("utf-8")
    )
    counts = {cell["pattern"]: int(cell["count"]) for cell in raw["cells"]}
    return ContingencyTable(counts=counts, total=int(raw["reported_total"]))


# --- derived statistics ---------------------------------------------------

def derived_rates(table: ContingencyTable) -> dict:
    """Headline rates; denominators are printed alongside each rate.

    Marginals and of-total rates divide by ``table.total``; conditional
    rates divide by their own cell sums.
    """
    if table.total <= 0:
        raise AnalysisError("contingency table total must be positive")
    total = table.total
    test_ok = table.joint(implementor_test_ok=True)
    double_failures = table.joint(generator_ok=False, summarizer_ok=False)
    rescue = table.joint(
        generator_ok=False, summarizer_ok=False, implementor_test_ok=True
    )
    g_only = table.joint(generator_ok=True, summarizer_ok=False)
    g_only_test = table.joint(
        generator_ok=True, summarizer_ok=False, implementor_test_ok=True
    )
    both = table.joint(generator_ok=True, summarizer_ok=True)
    both_test = table.joint(
        generator_ok=True, summarizer_ok=True, implementor_test_ok=True
    )
    return {
        "total": total,
        "cell_sum": table.cell_sum,
        "cell_sum_matches_total": table.cell_sum == total,
        "overall_test_rate": test_ok / total,
        "overall_test_count": test_ok,
        "generator_marginal": table.marginal("generator") / total,
        "generator_success_count": table.marginal("generator"),
        "summarizer_marginal": table.marginal("summarizer") / total,
        "summarizer_success_count": table.marginal("summarizer"),
        "implementor_train_marginal": table.marginal("implementor_train") / total,
        "implementor_train_success_count": table.marginal("implementor_train"),
        "rescue_count": rescue,
        "rescue_rate_of_total": rescue / total,
        "double_failure_count": double_failures,
        "rescue_rate_of_double_failures": rescue / double_failures if double_failures else 0.0,
        "p_test_given_g_ok_s_fail": g_only_test / g_only if g_only else 0.0,
        "p_test_given_g_ok_s_fail_n": g_only,
        "p_test_given_both_ok": both_test / both if both else 0.0,
        "p_test_given_both_ok_n": both,
    }


def structural_zero_holds(table: ContingencyTable) -> bool:
    """True iff the summarizer never succeeds while the generator fails."""
    return table.joint(generator_ok=False, summarizer_ok=True) == 0


@dataclass(frozen=True)
class OddsRatioResult:
    value: float
    degenerate: bool
    cells: tuple[int, int, int, int]  # a, b, c, d of the collapsed 2x2


def odds_ratio(table: ContingencyTable, outcome: str = "implementor_train") -> OddsRatioResult:
    """Cross-product odds ratio of generator success vs an outcome module.

    The collapsed 2×2 is (a: G ok & outcome ok, b: G ok & fail,
    c: G fail & ok, d: G fail & fail); a*d / (b*c) equals the exponentiated
    coefficient of a single-binary-predictor logistic regression, so no
    iterative fit is needed.  A zero cell makes the ratio degenerate; the
    value is then signed infinity (or nan for 0/0) with the flag set.
    """
    if outcome not in ("implementor_train", "implementor_test"):
        raise ValueError(f"odds_ratio outcome must be an implementor module, got {outcome!r}")
    a = table.joint(generator_ok=True, **{f"{outcome}_ok": True})
    b = table.joint(generator_ok=True, **{f"{outcome}_ok": False})
    c = table.joint(generator_ok=False, **{f"{outcome}_ok": True})
    d = table.joint(generator_ok=False, **{f"{outcome}_ok": False})
    if b == 0 or c == 0:
        value = math.nan if a * d == 0 else math.inf
        return OddsRatioResult(value, True, (a, b, c, d))
    if a == 0 or d == 0:
        return OddsRatioResult(0.0, True, (a, b, c, d))
    return OddsRatioResult((a * d) / (b * c), False, (a, b, c, d))


def pearson_r(xs: Sequence[float], ys: Sequence[float]) -> Optional[float]:
    """Pearson correlation; None (undefined) when a series has no variance."""
    if len(xs) != len(ys):
        raise ValueError("series lengths differ")
    if len(xs) < 2:
        return None
    try:
        return statistics.correlation(xs, ys)
    except statistics.StatisticsError:
        return None


@dataclass(frozen=True)
class CorrelationReport:
    trial_train_r: Optional[float]
    trial_test_r: Optional[float]
    task_train_r: Optional[float]
    task_test_r: Optional[float]


def correlations(verdicts: Sequence[ModuleVerdicts]) -> CorrelationReport:
    """Generator-vs-implementor correlation at trial and task level."""
    g = [1.0 if v.generator_ok else 0.0 for v in verdicts]
    it = [1.0 if v.implementor_train_ok else 0.0 for v in verdicts]
    ie = [1.0 if v.implementor_test_ok else 0.0 for v in verdicts]

    by_task: dict[str, list[ModuleVerdicts]] = {}
    for v in verdicts:
        by_task.setdefault(v.task_id, []).append(v)
    task_g, task_it, task_ie = [], [], []
    for vs in by_task.values():
        task_g.append(statistics.fmean(1.0 if v.generator_ok else 0.0 for v in vs))
        task_it.append(statistics.fmean(1.0 if v.implementor_train_ok else 0.0 for v in vs))
        task_ie.append(statistics.fmean(1.0 if v.implementor_test_ok else 0.0 for v in vs))

    return CorrelationReport(
        trial_train_r=pearson_r(g, it),
        trial_test_r=pearson_r(g, ie),
        task_train_r=pearson_r(task_g, task_it),
        task_test_r=pearson_r(task_g, task_ie),
    )


def retention_rate(verdicts: Sequence[ModuleVerdicts]) -> Optional[float]:
    """Among trials where the generator found a correct rule, how often one
    survived summarization."""
    with_correct = [v for v in verdicts if v.generator_ok]
    if not with_correct:
        return None
    return sum(1 for v in with_correct if v.retained_correct) / len(with_correct)


def refinement_costs(
    logs: Sequence[RunLog],
    split_by: str = "train_outcome",
    version_budget: int = 256,
) -> dict:
    """Mean program versions per trial, split by solved-vs-failed outcome."""
    if split_by not in ("train_outcome", "test_outcome"):
        raise ValueError(f"unknown split {split_by!r}")
    solved, failed = [], []
    for log in logs:
        for o in log.outcomes:
            if o.infrastructure_error is not None:
                continue
            ok = o.train_solved if split_by == "train_outcome" else o.test_solved_any
            (solved if ok else failed).append(o.ledger.program_versions)
    return {
        "split_by": split_by,
        "solved_mean_versions": statistics.fmean(solved) if solved else None,
        "failed_mean_versions": statistics.fmean(failed) if failed else None,
        "solved_n": len(solved),
        "failed_n": len(failed),
        "version_budget": version_budget,
        "solved_budget_fraction": statistics.fmean(solved) / version_budget if solved else None,
        "failed_budget_fraction": statistics.fmean(failed) / version_budget if failed else None,
    }


# --- report assembly ------------------------------------------------------

def _correlation_dict(report: CorrelationReport) -> dict:
    return {
        "trial_train_r": report.trial_train_r,
        "trial_test_r": report.trial_test_r,
        "task_train_r": report.task_train_r,
        "task_test_r": report.task_test_r,
    }


def analysis_report(
    table: ContingencyTable,
    verdicts: Optional[Sequence[ModuleVerdicts]] = None,
    logs: Optional[Sequence[RunLog]] = None,
) -> dict:
    """Assemble the full analysis as one JSON-serializable document."""
    train_or = odds_ratio(table, "implementor_train")
    test_or = odds_ratio(table, "implementor_test")
    report = {
        "contingency": {pattern: table.count(pattern) for pattern in PATTERNS},
        "rates": derived_rates(table),
        "structural_zero_holds": structural_zero_holds(table),
        "odds_ratio_train": {
            "value": train_or.value,
            "degenerate": train_or.degenerate,
            "cells": list(train_or.cells),
        },
        "odds_ratio_test": {
            "value": test_or.value,
            "degenerate": test_or.degenerate,
            "cells": list(test_or.cells),
        },
    }
    if verdicts:
        report["correlations"] = _correlation_dict(correlations(verdicts))
        report["retention_rate"] = retention_rate(verdicts)
        report["n_verdicts"] = len(verdicts)
    if logs:
        report["refinement_costs_train"] = refinement_costs(logs, "train_outcome")
        report["refinement_costs_test"] = refinement_costs(logs, "test_outcome")
    return report


def contingency_rows(table: ContingencyTable) -> list[dict]:
    """Row-per-cell view mirroring the published table layout."""
    rows = []
    for pattern in PATTERNS:
        row = {
            module: ("success" if pattern[i] == "S" else "fail")
            for i, module in enumerate(MODULE_NAMES)
        }
        row["count"] = table.count(pattern)
        rows.append(row)
    return rows


def module_accuracy_rows(table: ContingencyTable) -> list[dict]:
    """Row-per-module success-rate view."""
    return [
        {
            "module": module,
            "successes": table.marginal(module),
            "total": table.total,
            "accuracy": table.marginal(module) / table.total,
        }
        for module in MODULE_NAMES
    ]
