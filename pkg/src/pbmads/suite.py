"""Built-in benchmark problems and the text problem-definition format.

The built-ins are small analytic problems spanning n in [2, 10] and m in
[1, 4], every start infeasible, with reference optima that are verified
independently in the test suite (dense grid refinement for the 2-d problems,
multi-start SLSQP cross-checks for the rest).
"""
from __future__ import annotations

import ast
import math
from dataclasses import dataclass

from .blackbox import Problem
from .core import DesignPoint, violation


# ---------------------------------------------------------------- built-ins


def _toy2d_f(x):
    return x[0] + x[1]


def _toy2d_c(x):
    return (x[0] * x[0] + x[1] * x[1] - 1.0,)


def _ring2_f(x):
    return (x[0] - 3.0) ** 2 + x[1] * x[1]


def _ring2_c(x):
    r2 = x[0] * x[0] + x[1] * x[1]
    return (1.0 - r2, r2 - 4.0)


def _boxlin3_f(x):
    return x[0] + 2.0 * x[1] - x[2]


def _boxlin3_c(x):
    return (
        x[0] + x[1] + x[2] - 1.0,
        x[0] * x[0] + x[1] * x[1] + x[2] * x[2] - 2.0,
    )


def _maxsum4_f(x):
    return max(abs(v) for v in x)


def _maxsum4_c(x):
    return (1.0 - (x[0] + x[1] + x[2] + x[3]),)


def _wells6_f(x):
    return sum((v - 0.8) ** 2 for v in x)


def _wells6_c(x):
    total = sum(x)
    sq = sum(v * v for v in x)
    return (total - 3.0, x[0] - x[1] - 1.0, sq - 4.0)


def _beam10_f(x):
    return sum((i + 1) * v * v for i, v in enumerate(x)) / 10.0


def _beam10_c(x):
    total = sum(x)
    return (
        2.0 - total,
        max(abs(v) for v in x) - 2.0,
        x[0] - x[1] - 1.5,
        total - 5.0,
    )


def _pt(*coords: float) -> DesignPoint:
    return DesignPoint(tuple(coords))


_H10 = sum(1.0 / i for i in range(1, 11))

_BUILTINS = (
    Problem(
        name="toy2d",
        n=2,
        m=1,
        objective=_toy2d_f,
        constraints=_toy2d_c,
        bounds=((-2.0, 2.0), (-2.0, 2.0)),
        starts=(_pt(1.5, 1.5), _pt(-1.8, 1.2), _pt(0.9, 1.4)),
        f_star=-math.sqrt(2.0),
        description="linear objective on the unit disk; optimum on the boundary",
    ),
    Problem(
        name="ring2",
        n=2,
        m=2,
        objective=_ring2_f,
        constraints=_ring2_c,
        bounds=((-3.0, 3.0), (-3.0, 3.0)),
        starts=(_pt(0.2, 0.1), _pt(0.0, 0.0), _pt(-0.4, 0.3)),
        f_star=1.0,
        description="quadratic objective over an annulus; starts inside the hole",
    ),
    Problem(
        name="boxlin3",
        n=3,
        m=2,
        objective=_boxlin3_f,
        constraints=_boxlin3_c,
        bounds=((-1.5, 1.5),) * 3,
        starts=(_pt(1.2, 1.2, -0.5), _pt(1.0, 1.0, 1.0), _pt(-1.2, 1.3, 1.4)),
        f_star=-math.sqrt(12.0),
        description="linear objective under a halfspace and a ball constraint",
    ),
    Problem(
        name="maxsum4",
        n=4,
        m=1,
        objective=_maxsum4_f,
        constraints=_maxsum4_c,
        bounds=((-2.0, 2.0),) * 4,
        starts=(_pt(0.0, 0.0, 0.0, 0.0), _pt(-0.5, 0.2, 0.1, 0.1), _pt(0.3, 0.3, 0.2, 0.1)),
        f_star=0.25,
        description="nonsmooth max-coordinate objective with a coupling halfspace",
    ),
    Problem(
        name="wells6",
        n=6,
        m=3,
        objective=_wells6_f,
        constraints=_wells6_c,
        bounds=((-2.0, 2.0),) * 6,
        starts=(
            _pt(0.9, 0.9, 0.9, 0.9, 0.9, 0.9),
            _pt(1.1, 0.8, 0.7, 0.9, 1.0, 0.6),
            _pt(0.8, 0.8, 0.8, 0.8, 0.8, 0.8),
        ),
        f_star=0.54,
        description="shifted quadratic with one active linear constraint at the optimum",
    ),
    Problem(
        name="beam10",
        n=10,
        m=4,
        objective=_beam10_f,
        constraints=_beam10_c,
        bounds=((-2.0, 2.0),) * 10,
        starts=(
            _pt(*([0.0] * 10)),
            _pt(*([0.1] * 10)),
            _pt(0.05, -0.1, 0.15, 0.0, 0.1, -0.05, 0.1, 0.0, 0.05, 0.0),
        ),
        f_star=4.0 / (10.0 * _H10),
        description="weighted quadratic with a minimum-sum constraint active at the optimum",
    ),
)

_REGISTRY: dict[str, Problem] = {p.name: p for p in _BUILTINS}


def builtin_suite() -> dict[str, Problem]:
    return {p.name: p for p in _BUILTINS}


def builtin_names() -> tuple[str, ...]:
    return tuple(p.name for p in _BUILTINS)


def register_problem(problem: Problem, replace: bool = False) -> None:
    if not replace and problem.name in _REGISTRY:
        raise ValueError(f"problem {problem.name!r} is already registered")
    _REGISTRY[problem.name] = problem


def get_problem(name: str) -> Problem:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; known: {', '.join(sorted(_REGISTRY))}") from None


# ------------------------------------------------- text problem definitions

_ALLOWED_FUNCS = ("exp", "log", "sin", "cos", "abs", "max")

_ENV = {
    "__builtins__": {},
    "exp": math.exp,
    "log": math.log,
    "sin": math.sin,
    "cos": math.cos,
    "abs": abs,
    "max": max,
    "pi": math.pi,
    "e": math.e,
}

_ALLOWED_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)
_ALLOWED_UNARY = (ast.USub, ast.UAdd)


class ProblemFormatError(ValueError):
    """Malformed problem-definition text; the message names the line."""


def _validate_expr(tree: ast.AST, n: int, source: str, line_no: int) -> None:
    for node in ast.walk(tree):
        if isinstance(node, (ast.Expression, ast.Constant)):
            if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
                raise ProblemFormatError(
                    f"line {line_no}: literal {node.value!r} is not a number"
                )
        elif isinstance(node, ast.BinOp):
            if not isinstance(node.op, _ALLOWED_BINOPS):
                raise ProblemFormatError(f"line {line_no}: operator not allowed in {source!r}")
        elif isinstance(node, ast.UnaryOp):
            if not isinstance(node.op, _ALLOWED_UNARY):
                raise ProblemFormatError(f"line {line_no}: operator not allowed in {source!r}")
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.keywords:
                raise ProblemFormatError(f"line {line_no}: bad function call in {source!r}")
            if node.func.id not in _ALLOWED_FUNCS:
                raise ProblemFormatError(
                    f"line {line_no}: unknown function {node.func.id!r} "
                    f"(allowed: {', '.join(_ALLOWED_FUNCS)})"
                )
        elif isinstance(node, ast.Name):
            name = node.id
            if name in _ALLOWED_FUNCS or name in ("pi", "e"):
                continue
            if name.startswith("x") and name[1:].isdigit():
                j = int(name[1:])
                if 1 <= j <= n:
                    continue
                raise ProblemFormatError(
                    f"line {line_no}: variable {name} out of range for n={n}"
                )
            raise ProblemFormatError(f"line {line_no}: unknown name {name!r} in {source!r}")
        elif isinstance(node, (ast.Load, *(_ALLOWED_BINOPS), *(_ALLOWED_UNARY))):
            continue
        else:
            raise ProblemFormatError(
                f"line {line_no}: construct {type(node).__name__} not allowed in {source!r}"
            )


class ExprFunc:
    """One compiled whitelisted expression over x1..xn; pickles by source."""

    def __init__(self, source: str, n: int, line_no: int = 0):
        self.source = source
        self.n = n
        self.line_no = line_no
        python_src = source.replace("^", "**")
        try:
            tree = ast.parse(python_src, mode="eval")
        except SyntaxError as exc:
            raise ProblemFormatError(f"line {line_no}: cannot parse {source!r}: {exc.msg}") from None
        _validate_expr(tree, n, source, line_no)
        self._code = compile(tree, f"<expr line {line_no}>", "eval")
        self._names = tuple(f"x{i + 1}" for i in range(n))

    def __call__(self, coords) -> float:
        local = dict(zip(self._names, coords))
        return float(eval(self._code, _ENV, local))

    def __getstate__(self):
        return (self.source, self.n, self.line_no)

    def __setstate__(self, state):
        self.__init__(*state)


class ExprConstraints:
    """Tuple of compiled constraint expressions, evaluated together."""

    def __init__(self, funcs: tuple[ExprFunc, ...]):
        self.funcs = funcs

    def __call__(self, coords) -> tuple[float, ...]:
        return tuple(f(coords) for f in self.funcs)


@dataclass(frozen=True)
class _Pending:
    line_no: int
    value: str


def parse_problem_text(text: str, name_hint: str = "problem") -> Problem:
    """Parse the key/value problem format.

    Lines: `name`, `n`, `m`, `bounds` (either `none`, one lo/hi pair applied
    to all coordinates, or 2n numbers), `f <expression>`, `c<j> <expression>`,
    `start <n numbers>` (repeatable), optional `fstar <number>`. `#` starts a
    comment; expressions may use +, -, *, /, ^ and exp, log, sin, cos, abs,
    max over x1..xn.
    """
    fields: dict[str, _Pending] = {}
    constraints: dict[int, _Pending] = {}
    starts: list[_Pending] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split(None, 1)
        key = parts[0]
        value = parts[1].strip() if len(parts) > 1 else ""
        if not value:
            raise ProblemFormatError(f"line {line_no}: {key!r} needs a value")
        if key == "start":
            starts.append(_Pending(line_no, value))
        elif key.startswith("c") and key[1:].isdigit():
            j = int(key[1:])
            if j in constraints:
                raise ProblemFormatError(f"line {line_no}: duplicate constraint c{j}")
            constraints[j] = _Pending(line_no, value)
        elif key in ("name", "n", "m", "bounds", "f", "fstar"):
            if key in fields:
                raise ProblemFormatError(f"line {line_no}: duplicate key {key!r}")
            fields[key] = _Pending(line_no, value)
        else:
            raise ProblemFormatError(f"line {line_no}: unknown key {key!r}")

    def _need(key: str) -> _Pending:
        if key not in fields:
            raise ProblemFormatError(f"missing required key {key!r}")
        return fields[key]

    def _int(key: str) -> int:
        pending = _need(key)
        try:
            return int(pending.value)
        except ValueError:
            raise ProblemFormatError(
                f"line {pending.line_no}: {key} must be an integer, got {pending.value!r}"
            ) from None

    name = fields["name"].value if "name" in fields else name_hint
    n = _int("n")
    m = _int("m")
    if n < 1:
        raise ProblemFormatError(f"line {fields['n'].line_no}: n must be positive")
    if m < 1:
        raise ProblemFormatError(f"line {fields['m'].line_no}: m must be at least 1")

    expected = set(range(1, m + 1))
    if set(constraints) != expected:
        missing = sorted(expected - set(constraints))
        extra = sorted(set(constraints) - expected)
        detail = []
        if missing:
            detail.append("missing " + ", ".join(f"c{j}" for j in missing))
        if extra:
            detail.append("unexpected " + ", ".join(f"c{j}" for j in extra))
        raise ProblemFormatError(f"constraint lines do not match m={m}: {'; '.join(detail)}")

    bounds: tuple[tuple[float, float], ...] | None = None
    if "bounds" in fields:
        pending = fields["bounds"]
        if pending.value.lower() == "none":
            bounds = None
        else:
            try:
                nums = [float(v) for v in pending.value.split()]
            except ValueError:
                raise ProblemFormatError(
                    f"line {pending.line_no}: bounds must be numbers or 'none'"
                ) from None
            if len(nums) == 2:
                bounds = tuple((nums[0], nums[1]) for _ in range(n))
            elif len(nums) == 2 * n:
                bounds = tuple((nums[2 * i], nums[2 * i + 1]) for i in range(n))
            else:
                raise ProblemFormatError(
                    f"line {pending.line_no}: bounds needs 2 or {2 * n} numbers, got {len(nums)}"
                )

    objective = ExprFunc(_need("f").value, n, _need("f").line_no)
    cons = ExprConstraints(
        tuple(ExprFunc(constraints[j].value, n, constraints[j].line_no) for j in sorted(constraints))
    )

    if not starts:
        raise ProblemFormatError("at least one `start` line is required")
    parsed_starts = []
    for pending in starts:
        try:
            nums = [float(v) for v in pending.value.split()]
        except ValueError:
            raise ProblemFormatError(f"line {pending.line_no}: start must be numbers") from None
        if len(nums) != n:
            raise ProblemFormatError(
                f"line {pending.line_no}: start needs {n} coordinates, got {len(nums)}"
            )
        parsed_starts.append(DesignPoint(tuple(nums)))

    f_star = None
    if "fstar" in fields:
        pending = fields["fstar"]
        try:
            f_star = float(pending.value)
        except ValueError:
            raise ProblemFormatError(f"line {pending.line_no}: fstar must be a number") from None

    try:
        return Problem(
            name=name,
            n=n,
            m=m,
            objective=objective,
            constraints=cons,
            bounds=bounds,
            starts=tuple(parsed_starts),
            f_star=f_star,
            description="user-defined problem",
            source_text=text,
        )
    except ValueError as exc:
        raise ProblemFormatError(str(exc)) from None


def load_problem_file(path) -> Problem:
    from pathlib import Path

    p = Path(path)
    name_hint = p.stem
    return parse_problem_text(p.read_text(), name_hint=name_hint)


def resolve_problem(spec: str) -> Problem:
    """A problem name from the registry, or a path to a definition file."""
    if spec in _REGISTRY:
        return _REGISTRY[spec]
    from pathlib import Path

    if Path(spec).exists():
        return load_problem_file(spec)
    raise KeyError(
        f"unknown problem {spec!r} and no such file; known problems: "
        + ", ".join(sorted(_REGISTRY))
    )


def infeasible_start_check(problem: Problem) -> bool:
    """True when every registered start strictly violates some constraint."""
    for x0 in problem.starts:
        values = problem.raw_constraints(x0.coords)
        if violation(values, problem.in_domain(x0)) <= 0:
            return False
    return True
