"""A small deterministic list-transformation language.

Programs are pipelines of primitive stages applied left to right::

    program := stage ("|" stage)*
    stage   := NAME INT*

e.g. ``"take 2 | add 1"`` keeps the first two elements and then adds one
to each.  The language is total: partial operations on empty or short
lists yield ``[]`` instead of raising (``head`` of ``[]`` is ``[]``), and
arithmetic saturates at +/-(2^31 - 1).  Evaluation is step-bounded; a
stage costs ``1 + len(input) + len(output)`` steps and the budget is
checked before oversized outputs are materialized, so runaway programs
(``repeat``/``concat_self`` chains) terminate in O(budget) work.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Optional

SATURATION_LIMIT = 2**31 - 1
DEFAULT_STEP_BUDGET = 10_000

# EvalOutcome.status values
OK = "ok"
STEP_BUDGET_EXCEEDED = "step_budget_exceeded"
ARITY_OR_NAME_ERROR = "arity_or_name_error"


class DslParseError(ValueError):
    """Base class for all program-text rejections."""


class DslSyntaxError(DslParseError):
    def __init__(self, message: str, pos: int):
        super().__init__(f"{message} (at position {pos})")
        self.pos = pos


class UnknownPrimitiveError(DslParseError):
    def __init__(self, name: str, pos: int):
        super().__init__(f"unknown primitive {name!r} (at position {pos})")
        self.name = name
        self.pos = pos


class ArityError(DslParseError):
    def __init__(self, name: str, expected: int, got: int):
        super().__init__(f"{name} takes {expected} argument(s), got {got}")
        self.name = name


class InvalidArgumentError(DslParseError):
    def __init__(self, name: str, message: str):
        super().__init__(f"{name}: {message}")
        self.name = name


@dataclass(frozen=True)
class Stage:
    name: str
    args: tuple[int, ...] = ()


@dataclass(frozen=True)
class Program:
    stages: tuple[Stage, ...]

    def __post_init__(self) -> None:
        if not self.stages:
            raise ValueError("a program needs at least one stage")


@dataclass(frozen=True)
class EvalOutcome:
    status: str
    output: Optional[list[int]]
    steps_used: int
    detail: Optional[str] = None


def _sat(v: int) -> int:
    if v > SATURATION_LIMIT:
        return SATURATION_LIMIT
    if v < -SATURATION_LIMIT:
        return -SATURATION_LIMIT
    return v


def _unique(xs: list[int]) -> list[int]:
    seen: set[int] = set()
    out = []
    for x in xs:
        if x not in seen:
            seen.add(x)
            out.append(x)
    return out


def _rotate_left(xs: list[int], k: int) -> list[int]:
    if not xs:
        return []
    k %= len(xs)
    return xs[k:] + xs[:k]


def _index(xs: list[int], i: int) -> list[int]:
    if 1 <= i <= len(xs):
        return [xs[i - 1]]
    return []


def _slice(xs: list[int], a: int, b: int) -> list[int]:
    lo = max(a, 1)
    hi = min(b, len(xs))
    if lo > hi:
        return []
    return xs[lo - 1 : hi]


def _insert(xs: list[int], p: int, v: int) -> list[int]:
    pos = min(max(p, 1), len(xs) + 1)
    return xs[: pos - 1] + [_sat(v)] + xs[pos - 1 :]


@dataclass(frozen=True)
class Primitive:
    name: str
    arity: int
    fn: Callable[[list[int], tuple[int, ...]], list[int]]
    # Analytic output length for primitives whose output can exceed the
    # input; lets evaluate() reject over-budget stages without building them.
    growth: Optional[Callable[[int, tuple[int, ...]], int]] = None
    # Parse-time constraint on argument values (returns an error message).
    check_args: Optional[Callable[[tuple[int, ...]], Optional[str]]] = None


_PRIMITIVES = [
    Primitive("identity", 0, lambda xs, a: list(xs)),
    Primitive("reverse", 0, lambda xs, a: xs[::-1]),
    Primitive("sort", 0, lambda xs, a: sorted(xs)),
    Primitive("unique", 0, lambda xs, a: _unique(xs)),
    Primitive("head", 0, lambda xs, a: xs[:1]),
    Primitive("tail", 0, lambda xs, a: xs[1:]),
    Primitive("last", 0, lambda xs, a: xs[-1:]),
    Primitive("init", 0, lambda xs, a: xs[:-1]),
    Primitive("length", 0, lambda xs, a: [len(xs)], growth=lambda n, a: 1),
    Primitive("sum", 0, lambda xs, a: [_sat(sum(xs))], growth=lambda n, a: 1),
    Primitive("max", 0, lambda xs, a: [max(xs)] if xs else []),
    Primitive("min", 0, lambda xs, a: [min(xs)] if xs else []),
    Primitive("take", 1, lambda xs, a: xs[: max(a[0], 0)]),
    Primitive("drop", 1, lambda xs, a: xs[max(a[0], 0) :]),
    Primitive("append", 1, lambda xs, a: xs + [_sat(a[0])], growth=lambda n, a: n + 1),
    Primitive("prepend", 1, lambda xs, a: [_sat(a[0])] + xs, growth=lambda n, a: n + 1),
    Primitive("remove", 1, lambda xs, a: [x for x in xs if x != a[0]]),
    Primitive("count", 1, lambda xs, a: [sum(1 for x in xs if x == a[0])], growth=lambda n, a: 1),
    Primitive("add", 1, lambda xs, a: [_sat(x + a[0]) for x in xs]),
    Primitive("sub", 1, lambda xs, a: [_sat(x - a[0]) for x in xs]),
    Primitive("mul", 1, lambda xs, a: [_sat(x * a[0]) for x in xs]),
    Primitive(
        "mod",
        1,
        lambda xs, a: [x % a[0] for x in xs],
        check_args=lambda a: "argument must be nonzero" if a[0] == 0 else None,
    ),
    Primitive("rotate_left", 1, lambda xs, a: _rotate_left(xs, a[0])),
    Primitive("rotate_right", 1, lambda xs, a: _rotate_left(xs, -a[0])),
    Primitive(
        "repeat",
        1,
        lambda xs, a: xs * a[0],
        growth=lambda n, a: n * a[0],
        check_args=lambda a: "argument must be >= 0" if a[0] < 0 else None,
    ),
    Primitive("filter_even", 0, lambda xs, a: [x for x in xs if x % 2 == 0]),
    Primitive("filter_odd", 0, lambda xs, a: [x for x in xs if x % 2 != 0]),
    Primitive("filter_gt", 1, lambda xs, a: [x for x in xs if x > a[0]]),
    Primitive("filter_lt", 1, lambda xs, a: [x for x in xs if x < a[0]]),
    Primitive("index", 1, lambda xs, a: _index(xs, a[0]), growth=lambda n, a: 1),
    Primitive("slice", 2, lambda xs, a: _slice(xs, a[0], a[1])),
    Primitive("replace", 2, lambda xs, a: [_sat(a[1]) if x == a[0] else x for x in xs]),
    Primitive("insert", 2, lambda xs, a: _insert(xs, a[0], a[1]), growth=lambda n, a: n + 1),
    Primitive("concat_self", 0, lambda xs, a: xs + xs, growth=lambda n, a: 2 * n),
]

PRIMITIVES: dict[str, Primitive] = {p.name: p for p in _PRIMITIVES}


def primitive_names() -> list[str]:
    return [p.name for p in _PRIMITIVES]


_TOKEN_RE = re.compile(r"(?P<pipe>\|)|(?P<int>-?\d+)|(?P<name>[A-Za-z_][A-Za-z0-9_]*)")


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise DslSyntaxError(f"unexpected character {text[pos]!r}", pos)
        tokens.append((m.lastgroup, m.group(), pos))  # type: ignore[arg-type]
        pos = m.end()
    return tokens


def parse(text: str) -> Program:
    """Parse program text; raises a DslParseError subclass on rejection."""
    tokens = _tokenize(text)
    if not tokens:
        raise DslSyntaxError("empty program", 0)

    stages: list[Stage] = []
    i = 0
    while True:
        if i >= len(tokens):
            raise DslSyntaxError("expected primitive name", len(text))
        kind, value, pos = tokens[i]
        if kind != "name":
            raise DslSyntaxError(f"expected primitive name, found {value!r}", pos)
        prim = PRIMITIVES.get(value)
        if prim is None:
            raise UnknownPrimitiveError(value, pos)
        i += 1
        args: list[int] = []
        while i < len(tokens) and tokens[i][0] == "int":
            args.append(int(tokens[i][1]))
            i += 1
        if len(args) != prim.arity:
            raise ArityError(prim.name, prim.arity, len(args))
        if prim.check_args is not None:
            problem = prim.check_args(tuple(args))
            if problem is not None:
                raise InvalidArgumentError(prim.name, problem)
        stages.append(Stage(prim.name, tuple(args)))
        if i >= len(tokens):
            break
        kind, value, pos = tokens[i]
        if kind != "pipe":
            raise DslSyntaxError(f"expected '|' between stages, found {value!r}", pos)
        i += 1

    return Program(tuple(stages))


def pretty(program: Program) -> str:
    """Canonical text: single-space separated args, stages joined by " | "."""
    parts = []
    for stage in program.stages:
        if stage.args:
            parts.append(stage.name + " " + " ".join(str(a) for a in stage.args))
        else:
            parts.append(stage.name)
    return " | ".join(parts)


def evaluate(program: Program, values: list[int], budget: int = DEFAULT_STEP_BUDGET) -> EvalOutcome:
    """Run the program on a list of integers under a step budget.

    steps_used on a budget failure is the count accrued by completed
    stages; the over-budget stage is never materialized.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    cur = list(values)
    steps = 0
    for stage in program.stages:
        prim = PRIMITIVES[stage.name]
        n_in = len(cur)
        if prim.growth is not None:
            cost = 1 + n_in + prim.growth(n_in, stage.args)
            if steps + cost > budget:
                return EvalOutcome(STEP_BUDGET_EXCEEDED, None, steps)
            cur = prim.fn(cur, stage.args)
        else:
            out = prim.fn(cur, stage.args)
            cost = 1 + n_in + len(out)
            if steps + cost > budget:
                return EvalOutcome(STEP_BUDGET_EXCEEDED, None, steps)
            cur = out
        steps += cost
    return EvalOutcome(OK, cur, steps)


def evaluate_text(text: str, values: list[int], budget: int = DEFAULT_STEP_BUDGET) -> EvalOutcome:
    """evaluate() on raw text; parse rejections become arity_or_name_error."""
    try:
        program = parse(text)
    except DslParseError as exc:
        return EvalOutcome(ARITY_OR_NAME_ERROR, None, 0, detail=str(exc))
    return evaluate(program, values, budget)


def canonical(text: str) -> str:
    """Canonical form of valid program text (parse then pretty-print)."""
    return pretty(parse(text))
