import pytest

from indukt import listdsl
from indukt.listdsl import (
    ARITY_OR_NAME_ERROR,
    OK,
    SATURATION_LIMIT,
    STEP_BUDGET_EXCEEDED,
    ArityError,
    DslSyntaxError,
    InvalidArgumentError,
    Program,
    Stage,
    UnknownPrimitiveError,
    canonical,
    evaluate,
    evaluate_text,
    parse,
    pretty,
)


def run(text, values, budget=listdsl.DEFAULT_STEP_BUDGET):
    outcome = evaluate_text(text, list(values), budget)
    assert outcome.status == OK, outcome
    return outcome.output


# Each row: program text, input, expected output.  These pin down the
# exact semantics of every primitive, including the empty-list and
# out-of-range conventions.
SEMANTICS = [
    ("identity", [3, 1, 2], [3, 1, 2]),
    ("reverse", [1, 2, 3], [3, 2, 1]),
    ("reverse", [], []),
    ("sort", [3, 1, 2], [1, 2, 3]),
    ("unique", [2, 1, 2, 3, 1], [2, 1, 3]),
    ("head", [5, 6], [5]),
    ("head", [], []),
    ("tail", [5, 6, 7], [6, 7]),
    ("tail", [], []),
    ("last", [5, 6, 7], [7]),
    ("last", [], []),
    ("init", [5, 6, 7], [5, 6]),
    ("init", [], []),
    ("length", [4, 4, 4], [3]),
    ("length", [], [0]),
    ("sum", [1, 2, 3], [6]),
    ("sum", [], [0]),
    ("max", [3, 9, 1], [9]),
    ("max", [], []),
    ("min", [3, 9, 1], [1]),
    ("min", [], []),
    ("take 2", [9, 8, 7], [9, 8]),
    ("take 5", [9, 8], [9, 8]),
    ("take -1", [9, 8], []),
    ("take 0", [9, 8], []),
    ("drop 1", [9, 8, 7], [8, 7]),
    ("drop 9", [9, 8], []),
    ("drop -2", [9, 8], [9, 8]),
    ("append 4", [1, 2], [1, 2, 4]),
    ("prepend 4", [1, 2], [4, 1, 2]),
    ("remove 2", [2, 1, 2, 3], [1, 3]),
    ("count 2", [2, 1, 2, 3], [2]),
    ("count 7", [], [0]),
    ("add 10", [1, -1], [11, 9]),
    ("sub 3", [5, 2], [2, -1]),
    ("mul -2", [3, 0], [-6, 0]),
    ("mod 3", [7, -7, 6], [1, 2, 0]),  # Python modulo semantics
    ("rotate_left 1", [1, 2, 3], [2, 3, 1]),
    ("rotate_left 4", [1, 2, 3], [2, 3, 1]),
    ("rotate_left 2", [], []),
    ("rotate_right 1", [1, 2, 3], [3, 1, 2]),
    ("repeat 3", [1, 2], [1, 2, 1, 2, 1, 2]),
    ("repeat 0", [1, 2], []),
    ("filter_even", [1, 2, 3, 4], [2, 4]),
    ("filter_odd", [1, 2, 3, 4], [1, 3]),
    ("filter_even", [-2, -1], [-2]),
    ("filter_gt 2", [1, 2, 3, 4], [3, 4]),
    ("filter_lt 2", [1, 2, 3, 4], [1]),
    ("index 1", [7, 8, 9], [7]),
    ("index 3", [7, 8, 9], [9]),
    ("index 4", [7, 8, 9], []),
    ("index 0", [7, 8, 9], []),
    ("slice 2 3", [5, 6, 7, 8], [6, 7]),
    ("slice 1 99", [5, 6], [5, 6]),
    ("slice 3 2", [5, 6, 7], []),
    ("replace 2 9", [1, 2, 3, 2], [1, 9, 3, 9]),
    ("insert 1 0", [5, 6], [0, 5, 6]),
    ("insert 3 0", [5, 6], [5, 6, 0]),
    ("insert 99 0", [5, 6], [5, 6, 0]),
    ("concat_self", [1, 2], [1, 2, 1, 2]),
    ("concat_self", [], []),
    # multi-stage pipelines
    ("take 2 | add 1", [-10, -1, -18], [-9, 0]),
    ("sort | unique | take 3", [5, 5, 1, 3, 1, 9], [1, 3, 5]),
    ("drop 1 | reverse", [4, 5, 6], [6, 5]),
    ("sum | mul 2", [1, 2, 3], [12]),
]


@pytest.mark.parametrize("text,values,expected", SEMANTICS)
def test_primitive_semantics(text, values, expected):
    assert run(text, values) == expected


class TestParsing:
    def test_round_trip(self):
        program = parse("  sort |take   2|add -1 ")
        assert pretty(program) == "sort | take 2 | add -1"

    def test_canonical_is_idempotent(self):
        text = canonical("take 2|add 1")
        assert canonical(text) == text

    def test_stage_structure(self):
        program = parse("slice 2 4 | reverse")
        assert program.stages == (Stage("slice", (2, 4)), Stage("reverse", ()))

    def test_unknown_primitive_position(self):
        with pytest.raises(UnknownPrimitiveError) as info:
            parse("sort | tak 2")
        assert info.value.name == "tak"
        assert info.value.pos == 7

    def test_missing_argument(self):
        with pytest.raises(ArityError):
            parse("take")

    def test_extra_argument(self):
        with pytest.raises(ArityError):
            parse("reverse 3")

    def test_empty_text(self):
        with pytest.raises(DslSyntaxError):
            parse("   ")

    def test_trailing_pipe(self):
        with pytest.raises(DslSyntaxError):
            parse("sort |")

    def test_double_pipe(self):
        with pytest.raises(DslSyntaxError):
            parse("sort || reverse")

    def test_stray_character(self):
        with pytest.raises(DslSyntaxError) as info:
            parse("sort ; reverse")
        assert info.value.pos == 5

    def test_mod_zero_rejected_at_parse(self):
        with pytest.raises(InvalidArgumentError):
            parse("mod 0")

    def test_negative_repeat_rejected_at_parse(self):
        with pytest.raises(InvalidArgumentError):
            parse("repeat -2")

    def test_program_needs_a_stage(self):
        with pytest.raises(ValueError):
            Program(())


class TestEvaluation:
    def test_saturation_on_add(self):
        assert run("add 1", [SATURATION_LIMIT]) == [SATURATION_LIMIT]
        assert run("sub 1", [-SATURATION_LIMIT]) == [-SATURATION_LIMIT]

    def test_saturation_on_mul_and_sum(self):
        assert run("mul 3", [SATURATION_LIMIT - 1]) == [SATURATION_LIMIT]
        assert run("sum", [SATURATION_LIMIT, SATURATION_LIMIT]) == [SATURATION_LIMIT]

    def test_step_cost_accounting(self):
        # one stage costs 1 + len_in + len_out
        outcome = evaluate(parse("identity"), [1, 2, 3])
        assert outcome.steps_used == 7
        outcome = evaluate(parse("take 1 | drop 1"), [1, 2, 3])
        assert outcome.steps_used == (1 + 3 + 1) + (1 + 1 + 0)

    def test_budget_exceeded_reports_committed_steps(self):
        outcome = evaluate(parse("identity | identity"), [1, 2, 3], budget=10)
        assert outcome.status == STEP_BUDGET_EXCEEDED
        assert outcome.output is None
        assert outcome.steps_used == 7  # first stage only

    def test_growth_checked_before_materializing(self):
        # 10 doublings from 4 elements would be 4096 elements; with a tiny
        # budget this must fail fast instead of building the list
        text = " | ".join(["concat_self"] * 10)
        outcome = evaluate_text(text, [1, 2, 3, 4], budget=50)
        assert outcome.status == STEP_BUDGET_EXCEEDED

    def test_repeat_bomb_is_cheap_to_reject(self):
        outcome = evaluate_text("repeat 1000000000", [1, 2], budget=10_000)
        assert outcome.status == STEP_BUDGET_EXCEEDED
        assert outcome.steps_used == 0

    def test_parse_failure_surfaces_as_status(self):
        outcome = evaluate_text("tak 2", [1, 2])
        assert outcome.status == ARITY_OR_NAME_ERROR
        assert "tak" in outcome.detail

    def test_budget_must_be_positive(self):
        with pytest.raises(ValueError):
            evaluate(parse("identity"), [], budget=0)

    def test_input_not_mutated(self):
        values = [3, 1, 2]
        evaluate(parse("sort"), values)
        assert values == [3, 1, 2]


def test_primitive_registry_is_consistent():
    names = listdsl.primitive_names()
    assert len(names) == len(set(names)) == 34
    for name in names:
        assert listdsl.PRIMITIVES[name].name == name
