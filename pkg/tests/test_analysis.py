import math

import pytest

from indukt.analysis import (
    MODULE_NAMES,
    PATTERNS,
    AnalysisError,
    ContingencyTable,
    ModuleVerdicts,
    analysis_report,
    build_contingency,
    contingency_rows,
    correlations,
    derived_rates,
    judge_hypothesis,
    load_table2_fixture,
    make_judge,
    module_accuracy_rows,
    odds_ratio,
    pearson_r,
    refinement_costs,
    retention_rate,
    structural_zero_holds,
    verdicts_for_logs,
)
from indukt.corpus import Corpus, Task
from indukt.harness import RunLog
from indukt.pipeline import HYPOTHESIS_SEARCH, NO_HYPOTHESIS, BudgetLedger, TrialOutcome
from indukt.providers import ProviderError, ScriptedProvider


def table_from(partial, total=None):
    counts = {pattern: 0 for pattern in PATTERNS}
    counts.update(partial)
    return ContingencyTable(counts=counts, total=total or sum(counts.values()))


def stub_verdict(g, s, it, ie, task="T", trial=1, run_id="run-0"):
    return ModuleVerdicts(
        run_id=run_id,
        task_id=task,
        trial_index=trial,
        generator_ok=g,
        summarizer_ok=s,
        implementor_train_ok=it,
        implementor_test_ok=ie,
        generator_correct_count=int(g),
        summarizer_correct_count=int(s),
        retained_correct=g and s,
    )


def stub_outcome(
    task_id="A",
    trial=1,
    hyps=(),
    sums=(),
    train=False,
    test=False,
    versions=0,
    error=None,
    run_id="run-0",
):
    return TrialOutcome(
        task_id=task_id,
        run_id=run_id,
        trial_index=trial,
        mode=HYPOTHESIS_SEARCH,
        generator_hypotheses=tuple(hyps),
        summaries=tuple(sums),
        candidates=(),
        selected=(),
        train_solved=train,
        test_accuracy=1.0 if test else 0.0,
        test_solved_any=test,
        ledger=BudgetLedger(program_versions=versions),
        events=(),
        infrastructure_error=error,
    )


def stub_log(outcomes, run_id="run-0"):
    return RunLog(run_id, HYPOTHESIS_SEARCH, "0" * 64, {}, tuple(outcomes))


class TestPatterns:
    def test_enumeration_order(self):
        assert PATTERNS[0] == "FFFF"
        assert PATTERNS[-1] == "SSSS"
        assert len(set(PATTERNS)) == 16
        # generator is the most significant bit
        assert PATTERNS.index("SFFF") == 8
        assert PATTERNS.index("FFFS") == 1

    def test_verdict_pattern(self):
        assert stub_verdict(True, False, True, False).pattern == "SFSF"
        assert stub_verdict(False, False, False, True).pattern == "FFFS"


class TestContingencyTable:
    def test_missing_cell_rejected(self):
        counts = {pattern: 0 for pattern in PATTERNS[:-1]}
        with pytest.raises(AnalysisError, match="missing cell"):
            ContingencyTable(counts=counts, total=0)

    def test_extra_cell_rejected(self):
        counts = {pattern: 0 for pattern in PATTERNS}
        counts["XXXX"] = 1
        with pytest.raises(AnalysisError, match="unexpected"):
            ContingencyTable(counts=counts, total=1)

    def test_marginals_and_joints(self):
        table = table_from({"SSSS": 5, "SFFF": 3, "FFFS": 2})
        assert table.cell_sum == 10
        assert table.marginal("generator") == 8
        assert table.marginal("summarizer") == 5
        assert table.marginal("implementor_train") == 5
        assert table.marginal("implementor_test") == 7
        assert table.joint(generator_ok=True, summarizer_ok=False) == 3
        assert table.joint(generator_ok=False, implementor_test_ok=True) == 2
        # single-flag joint equals the marginal
        assert table.joint(generator_ok=True) == table.marginal("generator")

    def test_all_success_log_fills_one_cell(self):
        verdicts = [stub_verdict(True, True, True, True, trial=t) for t in range(1, 12)]
        table = build_contingency(verdicts)
        assert table.count("SSSS") == 11
        assert table.cell_sum == 11
        assert structural_zero_holds(table)

    def test_empty_verdicts_rejected(self):
        with pytest.raises(AnalysisError):
            build_contingency([])


class TestFixture:
    @pytest.fixture
    def table(self):
        return load_table2_fixture()

    def test_headline_cells(self, table):
        assert table.count("FFFF") == 1116
        assert table.count("FFFS") == 793
        assert table.count("SFSS") == 449
        assert table.count("SSSS") == 1804
        for pattern in ("FSFF", "FSFS", "FSSF", "FSSS"):
            assert table.count(pattern) == 0

    def test_total_discrepancy_is_surfaced(self, table):
        rates = derived_rates(table)
        assert table.total == 5500
        assert table.cell_sum == 5509
        assert rates["cell_sum_matches_total"] is False

    def test_rates_follow_from_cells(self, table):
        rates = derived_rates(table)
        assert rates["overall_test_count"] == 3411
        assert rates["overall_test_rate"] == pytest.approx(3411 / 5500)
        assert rates["rescue_count"] == 1092
        assert rates["double_failure_count"] == 2948
        assert rates["rescue_rate_of_total"] == pytest.approx(1092 / 5500)
        assert rates["rescue_rate_of_double_failures"] == pytest.approx(1092 / 2948)
        assert rates["p_test_given_g_ok_s_fail"] == pytest.approx(501 / 665)
        assert rates["p_test_given_g_ok_s_fail_n"] == 665
        assert rates["p_test_given_both_ok"] == pytest.approx(1818 / 1896)
        assert rates["p_test_given_both_ok_n"] == 1896
        assert rates["generator_marginal"] == pytest.approx(2561 / 5500)
        assert rates["summarizer_marginal"] == pytest.approx(1896 / 5500)
        assert rates["implementor_train_marginal"] == pytest.approx(3377 / 5500)

    def test_structural_zero(self, table):
        assert structural_zero_holds(table)
        violated = table_from({"FSSS": 1, "SSSS": 5})
        assert not structural_zero_holds(violated)

    def test_odds_ratios(self, table):
        train = odds_ratio(table, "implementor_train")
        assert train.cells == (2338, 223, 1039, 1909)
        assert not train.degenerate
        assert train.value == pytest.approx((2338 * 1909) / (223 * 1039))

        test = odds_ratio(table, "implementor_test")
        assert test.cells == (2319, 242, 1092, 1856)
        assert test.value == pytest.approx((2319 * 1856) / (242 * 1092))

    def test_marginal_two_ways(self, table):
        for module in MODULE_NAMES:
            assert table.marginal(module) == table.joint(**{f"{module}_ok": True})


class TestOddsRatio:
    def test_hand_computed(self):
        # G ok/IT ok 20, G ok/IT fail 5, G fail/IT ok 10, G fail/IT fail 30
        table = table_from({"SFSF": 20, "SFFF": 5, "FFSF": 10, "FFFF": 30})
        result = odds_ratio(table, "implementor_train")
        assert result.cells == (20, 5, 10, 30)
        assert result.value == pytest.approx(12.0)
        assert not result.degenerate

    def test_zero_failure_cell_is_degenerate_inf(self):
        table = table_from({"SFSF": 20, "FFSF": 10, "FFFF": 30})  # b == 0
        result = odds_ratio(table, "implementor_train")
        assert result.degenerate
        assert math.isinf(result.value)

    def test_zero_success_cell_is_degenerate_zero(self):
        table = table_from({"SFFF": 5, "FFSF": 10, "FFFF": 30})  # a == 0
        result = odds_ratio(table, "implementor_train")
        assert result.degenerate
        assert result.value == 0.0

    def test_empty_quadrants_are_nan(self):
        table = table_from({"FFFF": 30})  # a = b = c = 0
        result = odds_ratio(table, "implementor_train")
        assert result.degenerate
        assert math.isnan(result.value)

    def test_outcome_validation(self):
        with pytest.raises(ValueError):
            odds_ratio(table_from({"SSSS": 1}), "summarizer")


class TestPearson:
    def test_perfect_correlation(self):
        assert pearson_r([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
        assert pearson_r([1, 2, 3], [6, 4, 2]) == pytest.approx(-1.0)

    def test_hand_computed(self):
        xs = [1.0, 2.0, 3.0, 4.0]
        ys = [1.0, 3.0, 2.0, 4.0]
        assert pearson_r(xs, ys) == pytest.approx(0.8)

    def test_no_variance_is_undefined(self):
        assert pearson_r([1, 1, 1], [1, 2, 3]) is None
        assert pearson_r([], []) is None
        assert pearson_r([1], [2]) is None

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            pearson_r([1, 2], [1])


class TestJudge:
    def test_exact_match_short_circuits(self):
        assert judge_hypothesis("Sort the list.", "sort   the list") is True

    def test_sentinel_and_empty_are_wrong(self):
        assert judge_hypothesis(NO_HYPOTHESIS, "sort") is False
        assert judge_hypothesis("   ", "sort") is False

    def test_no_provider_means_exact_only(self):
        assert judge_hypothesis("The list gets sorted.", "Sort the list.") is False

    def test_provider_verdicts(self):
        yes = ScriptedProvider(["CORRECT"])
        assert judge_hypothesis("paraphrase", "Sort the list.", yes) is True
        no = ScriptedProvider(["INCORRECT"])
        assert judge_hypothesis("paraphrase", "Sort the list.", no) is False

    def test_incorrect_parsed_before_correct(self):
        # "INCORRECT" contains the substring "CORRECT"
        tricky = ScriptedProvider(["The answer is INCORRECT"])
        assert judge_hypothesis("p", "g", tricky) is False

    def test_garbled_response_counts_as_wrong(self):
        assert judge_hypothesis("p", "g", ScriptedProvider(["maybe?"])) is False

    def test_provider_failure_returns_none(self):
        def boom(request):
            raise ProviderError("down")

        assert judge_hypothesis("p", "g", ScriptedProvider(boom)) is None

    def test_ground_truth_required(self):
        with pytest.raises(ValueError):
            judge_hypothesis("p", "")

    def test_make_judge_memoizes(self):
        calls = []

        def count(request):
            calls.append(request)
            return "CORRECT"

        judge = make_judge(ScriptedProvider(count))
        assert judge("It sorts.", "Sort the list.") is True
        assert judge("it  sorts", "Sort the list.") is True  # same normalized pair
        assert len(calls) == 1
        judge("It reverses.", "Sort the list.")
        assert len(calls) == 2


class TestVerdictsForLogs:
    @pytest.fixture
    def corpus(self):
        task = Task(
            id="A",
            description="Reverse the order of the list.",
            examples=(),
            reference_program="reverse",
        )
        return Corpus((task,))

    def test_counts_and_flags(self, corpus):
        truth = "Reverse the order of the list."
        outcomes = [
            stub_outcome(
                hyps=(truth, "Sort it.", truth),
                sums=("Sort it.",),
                train=True,
                test=True,
                trial=1,
            ),
            stub_outcome(
                hyps=("Sort it.",),
                sums=(truth,),
                train=False,
                test=False,
                trial=2,
            ),
        ]
        verdicts = verdicts_for_logs([stub_log(outcomes)], corpus)
        assert len(verdicts) == 2

        first = verdicts[0]
        assert first.generator_correct_count == 2
        assert first.generator_ok
        assert not first.summarizer_ok
        assert not first.retained_correct
        assert first.pattern == "SFSS"

        second = verdicts[1]
        assert not second.generator_ok
        assert second.summarizer_ok  # correct text appeared only in summaries
        assert second.pattern == "FSFF"

    def test_flagged_outcomes_skipped(self, corpus):
        outcomes = [
            stub_outcome(trial=1),
            stub_outcome(trial=2, error="sandbox died"),
        ]
        verdicts = verdicts_for_logs([stub_log(outcomes)], corpus)
        assert [v.trial_index for v in verdicts] == [1]

    def test_custom_judge_is_used(self, corpus):
        outcomes = [stub_outcome(hyps=("Some paraphrase.",), sums=())]
        generous = verdicts_for_logs([stub_log(outcomes)], corpus, judge=lambda h, g: True)
        assert generous[0].generator_ok
        strict = verdicts_for_logs([stub_log(outcomes)], corpus, judge=lambda h, g: False)
        assert not strict[0].generator_ok


class TestCorrelations:
    def test_identical_series(self):
        verdicts = [
            stub_verdict(bool(b), False, bool(b), bool(b), task=f"t{i}")
            for i, b in enumerate([1, 0, 1, 0, 1, 1])
        ]
        report = correlations(verdicts)
        assert report.trial_train_r == pytest.approx(1.0)
        assert report.trial_test_r == pytest.approx(1.0)

    def test_orthogonal_series(self):
        flags = [(1, 1), (1, 0), (0, 1), (0, 0)]
        verdicts = [
            stub_verdict(bool(g), False, bool(it), False, task=f"t{i}")
            for i, (g, it) in enumerate(flags)
        ]
        report = correlations(verdicts)
        assert report.trial_train_r == pytest.approx(0.0)

    def test_constant_series_undefined(self):
        verdicts = [stub_verdict(True, True, bool(i % 2), True, task=f"t{i}") for i in range(4)]
        report = correlations(verdicts)
        assert report.trial_test_r is None  # test flags all identical

    def test_task_level_aggregation(self):
        # task X: generator 1.0, train 1.0; task Y: generator 0.0, train 0.0
        verdicts = [
            stub_verdict(True, True, True, True, task="X", trial=1),
            stub_verdict(True, True, True, True, task="X", trial=2),
            stub_verdict(False, False, False, False, task="Y", trial=1),
            stub_verdict(False, False, False, False, task="Y", trial=2),
        ]
        report = correlations(verdicts)
        assert report.task_train_r == pytest.approx(1.0)


class TestRetention:
    def test_fraction_of_generator_successes(self):
        verdicts = (
            [stub_verdict(True, True, False, False)] * 37
            + [stub_verdict(True, False, False, False)] * 13
            + [stub_verdict(False, False, False, False)] * 50
        )
        assert retention_rate(verdicts) == pytest.approx(0.74)

    def test_none_without_generator_successes(self):
        assert retention_rate([stub_verdict(False, False, False, False)]) is None


class TestRefinementCosts:
    def test_split_by_train_outcome(self):
        outcomes = [
            stub_outcome(trial=1, train=True, versions=1),
            stub_outcome(trial=2, train=True, versions=3),
            stub_outcome(trial=3, train=False, versions=256),
            stub_outcome(trial=4, train=False, versions=200),
            stub_outcome(trial=5, train=False, versions=0, error="flagged"),
        ]
        costs = refinement_costs([stub_log(outcomes)])
        assert costs["split_by"] == "train_outcome"
        assert costs["solved_mean_versions"] == pytest.approx(2.0)
        assert costs["failed_mean_versions"] == pytest.approx(228.0)
        assert (costs["solved_n"], costs["failed_n"]) == (2, 2)
        assert costs["solved_budget_fraction"] == pytest.approx(2.0 / 256)
        assert costs["failed_budget_fraction"] == pytest.approx(228.0 / 256)

    def test_split_by_test_outcome(self):
        outcomes = [
            stub_outcome(trial=1, test=True, versions=4),
            stub_outcome(trial=2, test=False, versions=6),
        ]
        costs = refinement_costs([stub_log(outcomes)], split_by="test_outcome")
        assert costs["solved_mean_versions"] == pytest.approx(4.0)
        assert costs["failed_mean_versions"] == pytest.approx(6.0)

    def test_empty_sides_are_none(self):
        outcomes = [stub_outcome(trial=1, train=True, versions=2)]
        costs = refinement_costs([stub_log(outcomes)])
        assert costs["failed_mean_versions"] is None
        assert costs["failed_budget_fraction"] is None

    def test_unknown_split(self):
        with pytest.raises(ValueError):
            refinement_costs([], split_by="mood")


class TestReportAssembly:
    def test_table_only_report(self):
        table = load_table2_fixture()
        report = analysis_report(table)
        assert set(report) == {
            "contingency",
            "rates",
            "structural_zero_holds",
            "odds_ratio_train",
            "odds_ratio_test",
        }
        assert report["contingency"]["SSSS"] == 1804
        assert report["structural_zero_holds"] is True
        assert report["odds_ratio_train"]["cells"] == [2338, 223, 1039, 1909]

    def test_verdicts_and_logs_extend_report(self):
        verdicts = [
            stub_verdict(True, True, True, True, task="X"),
            stub_verdict(False, False, False, False, task="Y"),
        ]
        outcomes = [stub_outcome(trial=1, train=True, versions=2)]
        report = analysis_report(
            build_contingency(verdicts), verdicts=verdicts, logs=[stub_log(outcomes)]
        )
        assert report["n_verdicts"] == 2
        assert report["retention_rate"] == pytest.approx(1.0)
        assert "correlations" in report
        assert report["refinement_costs_train"]["solved_mean_versions"] == pytest.approx(2.0)
        assert report["refinement_costs_test"]["failed_mean_versions"] == pytest.approx(2.0)

    def test_row_views(self):
        table = load_table2_fixture()
        rows = contingency_rows(table)
        assert len(rows) == 16
        assert rows[0] == {
            "generator": "fail",
            "summarizer": "fail",
            "implementor_train": "fail",
            "implementor_test": "fail",
            "count": 1116,
        }
        assert rows[-1]["count"] == 1804

        accuracy_rows = module_accuracy_rows(table)
        assert [r["module"] for r in accuracy_rows] == list(MODULE_NAMES)
        assert accuracy_rows[0]["successes"] == 2561
        assert accuracy_rows[0]["accuracy"] == pytest.approx(2561 / 5500)
