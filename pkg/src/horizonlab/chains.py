"""Compositional problem construction: atomic tasks, adapters, and chains.

An atomic task is a templated word problem whose answer is an exact-integer
expression over its parameters (and optionally one chained input).  Chains
link tasks either by *substitution* (feed a transformed previous answer into
the next task's input slot and recompute its ground truth) or by
*transformation* (re-express one parameter of the next task in terms of the
previous answer so that every ground truth stays what it was standalone).

All arithmetic is exact: division must divide evenly and every intermediate
value must stay within +/-10^9.
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass, field
from pathlib import Path

from .model import derive_rng

INT_LIMIT = 10**9

_STREAM_BANK = 5
_STREAM_COMPOSE = 6

_COMPOSE_RETRIES = 200

# Fresh placeholder letters for chained values, in rendering order.
PLACEHOLDERS = "WXYZUVTSRQ"


class ChainError(ValueError):
    """Base class for task/chain construction and evaluation failures."""


class InexactDivisionError(ChainError):
    pass


class ValueRangeError(ChainError):
    pass


class BankFormatError(ChainError):
    pass


# ---------------------------------------------------------------------------
# Expression trees
# ---------------------------------------------------------------------------

_BINARY = {"add": "+", "sub": "-", "mul": "*", "div": "/"}
_OP_BY_SYMBOL = {"+": "add", "-": "sub", "*": "mul", "/": "div", "neg": "neg"}


@dataclass(frozen=True)
class Expr:
    """Node of an integer expression tree."""

    op: str  # const | ref | add | sub | mul | div | neg
    value: int | None = None
    name: str | None = None
    args: tuple["Expr", ...] = ()

    def refs(self) -> set[str]:
        if self.op == "ref":
            return {self.name}
        out: set[str] = set()
        for a in self.args:
            out |= a.refs()
        return out

    def to_sexpr(self) -> str:
        if self.op == "const":
            return str(self.value)
        if self.op == "ref":
            return self.name
        if self.op == "neg":
            return f"(neg {self.args[0].to_sexpr()})"
        return f"({_BINARY[self.op]} {' '.join(a.to_sexpr() for a in self.args)})"


def const(v: int) -> Expr:
    return Expr("const", value=int(v))


def ref(name: str) -> Expr:
    return Expr("ref", name=name)


def parse_sexpr(text: str) -> Expr:
    """Parse an s-expression over {+, -, *, /, neg}, integers, and names."""
    tokens = text.replace("(", " ( ").replace(")", " ) ").split()
    if not tokens:
        raise ChainError("empty expression")
    pos = 0

    def parse() -> Expr:
        nonlocal pos
        if pos >= len(tokens):
            raise ChainError(f"unbalanced expression: {text!r}")
        tok = tokens[pos]
        pos += 1
        if tok == "(":
            if pos >= len(tokens):
                raise ChainError(f"dangling '(' in {text!r}")
            head = tokens[pos]
            pos += 1
            if head not in _OP_BY_SYMBOL:
                raise ChainError(f"unknown operator {head!r} in {text!r}")
            op = _OP_BY_SYMBOL[head]
            args = []
            while pos < len(tokens) and tokens[pos] != ")":
                args.append(parse())
            if pos >= len(tokens):
                raise ChainError(f"missing ')' in {text!r}")
            pos += 1  # consume ')'
            if op == "neg":
                if len(args) != 1:
                    raise ChainError("neg takes exactly one argument")
            elif op in ("sub", "div"):
                if len(args) != 2:
                    raise ChainError(f"{head!r} takes exactly two arguments")
            elif len(args) < 2:
                raise ChainError(f"{head!r} takes at least two arguments")
            return Expr(op, args=tuple(args))
        if tok == ")":
            raise ChainError(f"unexpected ')' in {text!r}")
        try:
            return const(int(tok))
        except ValueError:
            if not tok.isidentifier():
                raise ChainError(f"bad token {tok!r} in {text!r}") from None
            return ref(tok)

    out = parse()
    if pos != len(tokens):
        raise ChainError(f"trailing tokens in {text!r}")
    return out


def eval_expr(expr: Expr, env: dict[str, int]) -> int:
    """Exact integer evaluation with range checks at every node."""
    if expr.op == "const":
        v = expr.value
    elif expr.op == "ref":
        if expr.name not in env:
            raise ChainError(f"unbound name {expr.name!r}")
        v = env[expr.name]
    elif expr.op == "neg":
        v = -eval_expr(expr.args[0], env)
    else:
        vals = [eval_expr(a, env) for a in expr.args]
        if expr.op == "add":
            v = sum(vals)
        elif expr.op == "sub":
            v = vals[0] - vals[1]
        elif expr.op == "mul":
            v = 1
            for x in vals:
                v *= x
        else:  # div
            num, den = vals
            if den == 0:
                raise InexactDivisionError("division by zero")
            quot, rem = divmod(num, den)
            if rem != 0:
                raise InexactDivisionError(f"{num} is not divisible by {den}")
            v = quot
    if abs(v) > INT_LIMIT:
        raise ValueRangeError(f"value {v} outside +/-{INT_LIMIT}")
    return v


# ---------------------------------------------------------------------------
# Tasks and banks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AtomicTask:
    """One templated problem with an exact integer answer."""

    id: str
    template: str
    params: dict[str, int]
    input_slot: str | None
    answer_expr: Expr

    def template_slots(self) -> set[str]:
        return {
            name
            for _, name, _, _ in string.Formatter().parse(self.template)
            if name is not None
        }

    def validate(self) -> None:
        bound = set(self.params)
        if self.input_slot is not None:
            if self.input_slot in self.params:
                raise BankFormatError(
                    f"task {self.id}: input slot {self.input_slot!r} collides with a parameter"
                )
            bound.add(self.input_slot)
        unbound = self.template_slots() - bound
        if unbound:
            raise BankFormatError(f"task {self.id}: unbound template slots {sorted(unbound)}")
        free = self.answer_expr.refs() - bound
        if free:
            raise BankFormatError(f"task {self.id}: expression references unknown {sorted(free)}")


def eval_task(task: AtomicTask, input_value: int | None = None) -> int:
    """Ground-truth answer of a task, given its chained input if it has one."""
    if task.input_slot is None and input_value is not None:
        raise ChainError(f"task {task.id} takes no input")
    if task.input_slot is not None and input_value is None:
        raise ChainError(f"task {task.id} requires an input for slot {task.input_slot!r}")
    env = dict(task.params)
    if task.input_slot is not None:
        env[task.input_slot] = int(input_value)
    return eval_expr(task.answer_expr, env)


@dataclass(frozen=True)
class TaskBank:
    tasks: tuple[AtomicTask, ...]

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for t in self.tasks:
            if t.id in seen:
                raise BankFormatError(f"duplicate task id {t.id!r}")
            seen.add(t.id)

    def __len__(self) -> int:
        return len(self.tasks)

    @property
    def heads(self) -> tuple[AtomicTask, ...]:
        return tuple(t for t in self.tasks if t.input_slot is None)

    @property
    def tails(self) -> tuple[AtomicTask, ...]:
        return tuple(t for t in self.tasks if t.input_slot is not None)


def load_task_bank(path: str | Path) -> TaskBank:
    """Load and validate a JSONL task bank; all line errors are reported."""
    path = Path(path)
    tasks: list[AtomicTask] = []
    errors: list[str] = []
    seen: set[str] = set()
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            errors.append(f"line {lineno}: JSON parse error: {exc.msg}")
            continue
        try:
            task = _task_from_record(raw, lineno)
            task.validate()
            if task.input_slot is None:
                answer = eval_task(task)  # range + exactness on the declared params
                del answer
            if task.id in seen:
                raise BankFormatError(f"duplicate task id {task.id!r}")
            seen.add(task.id)
            tasks.append(task)
        except ChainError as exc:
            errors.append(f"line {lineno}: {exc}")
    if errors:
        raise BankFormatError("; ".join(errors))
    return TaskBank(tasks=tuple(tasks))


_BANK_KEYS = {"id", "template", "params", "input_slot", "answer_expr"}


def _task_from_record(raw: object, lineno: int) -> AtomicTask:
    if not isinstance(raw, dict):
        raise BankFormatError("record must be a JSON object")
    unknown = set(raw) - _BANK_KEYS
    if unknown:
        raise BankFormatError(f"unknown keys {sorted(unknown)}")
    missing = _BANK_KEYS - set(raw)
    if missing:
        raise BankFormatError(f"missing keys {sorted(missing)}")
    if not isinstance(raw["id"], str) or not raw["id"]:
        raise BankFormatError("id must be a nonempty string")
    if not isinstance(raw["template"], str):
        raise BankFormatError("template must be a string")
    params = raw["params"]
    if not isinstance(params, dict) or not all(
        isinstance(k, str) and isinstance(v, int) and not isinstance(v, bool)
        for k, v in params.items()
    ):
        raise BankFormatError("params must map names to integers")
    slot = raw["input_slot"]
    if slot is not None and (not isinstance(slot, str) or not slot):
        raise BankFormatError("input_slot must be null or a nonempty string")
    if not isinstance(raw["answer_expr"], str):
        raise BankFormatError("answer_expr must be an s-expression string")
    return AtomicTask(
        id=raw["id"],
        template=raw["template"],
        params=dict(params),
        input_slot=slot,
        answer_expr=parse_sexpr(raw["answer_expr"]),
    )


def save_task_bank(bank: TaskBank, path: str | Path) -> None:
    lines = []
    for t in bank.tasks:
        lines.append(
            json.dumps(
                {
                    "id": t.id,
                    "template": t.template,
                    "params": t.params,
                    "input_slot": t.input_slot,
                    "answer_expr": t.answer_expr.to_sexpr(),
                },
                sort_keys=True,
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Built-in bank generator
# ---------------------------------------------------------------------------

_HEAD_FORMS = [
    (
        "{a} crates each hold {b} melons, and {c} more melons sit loose on the dock. "
        "How many melons are on the dock in total?",
        "(+ (* a b) c)",
        {"a": (2, 12), "b": (3, 15), "c": (1, 30)},
    ),
    (
        "A print shop binds {a} booklets with {b} pages each. How many pages does it print?",
        "(* a b)",
        {"a": (3, 20), "b": (4, 40)},
    ),
    (
        "{a} runners each plan {b} laps, but {c} laps get rained out overall. "
        "How many laps are completed?",
        "(- (* a b) c)",
        {"a": (3, 12), "b": (4, 12), "c": (1, 10)},
    ),
    (
        "Tickets cost {a} dollars each. A group buys {b} tickets and pays a {c} dollar "
        "booking fee. What is the total bill?",
        "(+ (* a b) c)",
        {"a": (3, 25), "b": (2, 12), "c": (1, 15)},
    ),
    (
        "A warehouse splits {a} boxes evenly among {b} stores. How many boxes does each "
        "store receive?",
        "(/ a b)",
        {"b": (2, 9), "q": (2, 40)},  # a is synthesized as b * q
    ),
    (
        "One tank holds {a} liters and another holds {b} liters. How many liters are "
        "there in both tanks together?",
        "(+ a b)",
        {"a": (10, 500), "b": (10, 500)},
    ),
]

_TAIL_FORMS = [
    (
        "The scoreboard shows {x} points and the home team scores {a} more. "
        "What is the new total?",
        "(+ x a)",
        {"a": (2, 40)},
    ),
    (
        "Each of {a} shelves receives {x} books and {b} books stay in the cart. "
        "How many books arrived altogether?",
        "(+ (* a x) b)",
        {"a": (2, 6), "b": (1, 20)},
    ),
    (
        "A depot starts the day with {a} parcels and sends out {x} of them. "
        "How many parcels remain at the depot?",
        "(- a x)",
        {"a": (50, 9000)},
    ),
    (
        "A kiosk sells {x} snacks in the morning and {a} times as many in the afternoon. "
        "How many snacks does it sell in the afternoon?",
        "(* a x)",
        {"a": (2, 5)},
    ),
    (
        "A team banks {x} points per round for {a} rounds and earns a {b} point bonus. "
        "What is the final score?",
        "(+ (* x a) b)",
        {"a": (2, 5), "b": (1, 25)},
    ),
]


def builtin_bank(size: int, seed: int) -> TaskBank:
    """Deterministically generate a bank of small arithmetic word tasks.

    Tasks alternate between head forms (no input) and tail forms (one input
    slot ``x``).  Tail expressions avoid division so they stay integral for
    every integer input; head answers are kept within [1, 10^4].
    """
    if size < 1:
        raise ValueError("size must be >= 1")
    rng = derive_rng(seed, _STREAM_BANK)
    tasks: list[AtomicTask] = []
    for i in range(size):
        if i % 2 == 0:
            text, expr_text, ranges = _HEAD_FORMS[int(rng.integers(len(_HEAD_FORMS)))]
            for _ in range(200):
                params = {}
                if "q" in ranges:  # exact-division form: synthesize a = b * q
                    b = int(rng.integers(ranges["b"][0], ranges["b"][1] + 1))
                    q = int(rng.integers(ranges["q"][0], ranges["q"][1] + 1))
                    params = {"a": b * q, "b": b}
                else:
                    params = {
                        name: int(rng.integers(lo, hi + 1)) for name, (lo, hi) in ranges.items()
                    }
                task = AtomicTask(
                    id=f"t{i:05d}",
                    template=text,
                    params=params,
                    input_slot=None,
                    answer_expr=parse_sexpr(expr_text),
                )
                if 1 <= eval_task(task) <= 10**4:
                    break
            else:  # pragma: no cover - ranges above always admit an answer
                raise ChainError("failed to draw a head task in range")
        else:
            text, expr_text, ranges = _TAIL_FORMS[int(rng.integers(len(_TAIL_FORMS)))]
            params = {name: int(rng.integers(lo, hi + 1)) for name, (lo, hi) in ranges.items()}
            task = AtomicTask(
                id=f"t{i:05d}",
                template=text,
                params=params,
                input_slot="x",
                answer_expr=parse_sexpr(expr_text),
            )
        task.validate()
        tasks.append(task)
    return TaskBank(tasks=tuple(tasks))


# ---------------------------------------------------------------------------
# Adapters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Adapter:
    """Deterministic transform carrying one answer into the next input."""

    kind: str  # identity | affine | modwrap
    a: int = 1
    b: int = 0
    m: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("identity", "affine", "modwrap"):
            raise ChainError(f"unknown adapter kind {self.kind!r}")
        if self.kind == "modwrap" and self.m < 1:
            raise ChainError("modwrap modulus must be positive")

    def apply(self, y: int) -> int:
        if self.kind == "identity":
            return y
        if self.kind == "affine":
            v = self.a * y + self.b
            if abs(v) > INT_LIMIT:
                raise ValueRangeError(f"adapter output {v} outside +/-{INT_LIMIT}")
            return v
        return y % self.m

    def describe(self) -> str:
        if self.kind == "identity":
            return "identity"
        if self.kind == "affine":
            return f"affine({self.a},{self.b})"
        return f"modwrap({self.m})"

    def phrase(self, reference: str) -> str:
        """Instruction text mapping the previous answer onto a placeholder."""
        if self.kind == "identity":
            return f"equal to {reference}"
        if self.kind == "modwrap":
            return f"the remainder when {reference} is divided by {self.m}"
        parts = []
        if self.a == 1:
            parts.append(reference)
        else:
            parts.append(f"{self.a} times {reference}")
        if self.b > 0:
            parts.append(f"plus {self.b}")
        elif self.b < 0:
            parts.append(f"minus {-self.b}")
        return " ".join(parts) if self.a != 1 or self.b != 0 else f"equal to {reference}"


def parse_adapter(text: str) -> Adapter:
    """Inverse of ``Adapter.describe``."""
    if text == "identity":
        return Adapter("identity")
    if text.startswith("affine(") and text.endswith(")"):
        a, b = (int(v) for v in text[len("affine(") : -1].split(","))
        return Adapter("affine", a=a, b=b)
    if text.startswith("modwrap(") and text.endswith(")"):
        return Adapter("modwrap", m=int(text[len("modwrap(") : -1]))
    raise ChainError(f"bad adapter text {text!r}")


DEFAULT_ADAPTER_KINDS = ("identity", "affine", "modwrap")


def _draw_adapter(rng, kinds) -> Adapter:
    kind = kinds[int(rng.integers(len(kinds)))]
    if kind == "identity":
        return Adapter("identity")
    if kind == "affine":
        return Adapter("affine", a=int(rng.integers(1, 6)), b=int(rng.integers(-20, 21)))
    return Adapter("modwrap", m=int(rng.integers(7, 98)))


# ---------------------------------------------------------------------------
# Chains
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Rewrite:
    """Value-preserving rewrite: parameter ``name`` becomes a*prev + b."""

    name: str
    a: int
    b: int

    def apply(self, prev: int) -> int:
        return self.a * prev + self.b

    def describe(self) -> str:
        return f"rewrite({self.name}={self.a}*prev{self.b:+d})"

    def render(self, placeholder: str) -> str:
        if self.a == 1 and self.b == 0:
            return placeholder
        if self.a == 1:
            op = "+" if self.b >= 0 else "-"
            return f"({placeholder} {op} {abs(self.b)})"
        if self.b == 0:
            return f"({self.a} x {placeholder})"
        op = "+" if self.b >= 0 else "-"
        return f"({self.a} x {placeholder} {op} {abs(self.b)})"


@dataclass(frozen=True)
class ChainSpec:
    """An ordered chain of tasks with ground-truth intermediates."""

    mode: str  # substitution | transformation
    tasks: tuple[AtomicTask, ...]
    adapters: tuple[Adapter, ...]
    rewrites: tuple[Rewrite, ...]  # empty for substitution chains
    intermediates: tuple[int, ...]
    final_answer: int

    @property
    def h(self) -> int:
        return len(self.tasks)


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def _evaluate_substitution(tasks, adapters, first_value: int | None = None) -> list[int]:
    """Sequential chain evaluation; ``first_value`` overrides y_1 for probes."""
    values: list[int] = []
    for j, task in enumerate(tasks):
        if j == 0:
            y = eval_task(task) if first_value is None else first_value
        else:
            x = adapters[j - 1].apply(values[-1])
            y = eval_task(task, x)
        if abs(y) > INT_LIMIT:
            raise ValueRangeError(f"intermediate {y} outside +/-{INT_LIMIT}")
        values.append(y)
    return values


def _evaluate_transformation(tasks, rewrites, first_value: int | None = None) -> list[int]:
    values: list[int] = []
    for j, task in enumerate(tasks):
        if j == 0:
            y = eval_task(task) if first_value is None else first_value
        else:
            params = dict(task.params)
            rw = rewrites[j - 1]
            params[rw.name] = rw.apply(values[-1])
            probe = AtomicTask(task.id, task.template, params, task.input_slot, task.answer_expr)
            y = eval_task(probe)
        if abs(y) > INT_LIMIT:
            raise ValueRangeError(f"intermediate {y} outside +/-{INT_LIMIT}")
        values.append(y)
    return values


def compose_substitution(
    bank: TaskBank,
    h: int,
    adapter_policy: tuple[str, ...] = DEFAULT_ADAPTER_KINDS,
    seed: int = 0,
) -> ChainSpec:
    """Draw a substitution chain: distinct tasks, adapters, recomputed truths.

    Draws are rejected and resampled (bounded retries) whenever evaluation
    breaks exactness or range constraints.
    """
    if h < 1:
        raise ValueError("h must be >= 1")
    heads, tails = bank.heads, bank.tails
    if not heads:
        raise ChainError("bank has no head task (a task without an input slot)")
    if len(tails) < h - 1:
        raise ChainError(f"bank has {len(tails)} input tasks; chain of h={h} needs {h - 1}")
    if not adapter_policy:
        raise ChainError("adapter policy must allow at least one kind")
    rng = derive_rng(seed, _STREAM_COMPOSE)
    last_error: ChainError | None = None
    for _ in range(_COMPOSE_RETRIES):
        head = heads[int(rng.integers(len(heads)))]
        tail_idx = rng.choice(len(tails), size=h - 1, replace=False)
        tasks = (head, *(tails[int(i)] for i in tail_idx))
        adapters = tuple(_draw_adapter(rng, adapter_policy) for _ in range(h - 1))
        try:
            values = _evaluate_substitution(tasks, adapters)
        except ChainError as exc:
            last_error = exc
            continue
        return ChainSpec(
            mode="substitution",
            tasks=tasks,
            adapters=adapters,
            rewrites=(),
            intermediates=tuple(values),
            final_answer=values[-1],
        )
    raise ChainError(
        f"no well-posed substitution chain after {_COMPOSE_RETRIES} draws "
        f"(last failure: {last_error})"
    )


def compose_transformation(bank: TaskBank, h: int, seed: int = 0) -> ChainSpec:
    """Draw a transformation chain: ground truths stay the standalone answers.

    One parameter of each later task is re-expressed as a*prev + b with its
    value unchanged; the additive rewrite (a=1) is always admissible, and a
    scaled rewrite with a = value // prev is used when it is proper.
    """
    if h < 1:
        raise ValueError("h must be >= 1")
    heads = bank.heads
    usable = [t for t in heads if t.params]
    if h == 1 and heads:
        usable = list(heads)
    if len(usable) < h:
        raise ChainError(
            f"bank has {len(usable)} standalone tasks with parameters; need {h}"
        )
    rng = derive_rng(seed, _STREAM_COMPOSE)
    last_error: ChainError | None = None
    for _ in range(_COMPOSE_RETRIES):
        idx = rng.choice(len(usable), size=h, replace=False)
        tasks = tuple(usable[int(i)] for i in idx)
        try:
            answers = [eval_task(t) for t in tasks]
            rewrites = []
            for j in range(1, h):
                prev = answers[j - 1]
                name = sorted(tasks[j].params)[int(rng.integers(len(tasks[j].params)))]
                v = tasks[j].params[name]
                options = [Rewrite(name, 1, v - prev)]
                if prev != 0:
                    a = v // prev
                    if a >= 1:
                        options.append(Rewrite(name, a, v - a * prev))
                rw = options[int(rng.integers(len(options)))]
                if rw.apply(prev) != v:
                    raise ChainError("rewrite failed to preserve the parameter value")
                rewrites.append(rw)
            values = _evaluate_transformation(tasks, rewrites)
        except ChainError as exc:
            last_error = exc
            continue
        if values != answers:  # pragma: no cover - guarded by construction
            last_error = ChainError("transformation changed an intermediate")
            continue
        return ChainSpec(
            mode="transformation",
            tasks=tasks,
            adapters=tuple(Adapter("identity") for _ in range(h - 1)),
            rewrites=tuple(rewrites),
            intermediates=tuple(values),
            final_answer=values[-1],
        )
    raise ChainError(
        f"no well-posed transformation chain after {_COMPOSE_RETRIES} draws "
        f"(last failure: {last_error})"
    )


def render_prompt(chain: ChainSpec) -> str:
    """Render a chain as one numbered prompt; byte-stable per chain.

    Every step after the first names a fresh placeholder for the previous
    step's final answer; the closing line asks for only the final number.
    """
    lines = [
        f"Work through the following {chain.h} linked problems in order. "
        "Later steps reuse your earlier answers exactly as instructed."
    ]
    for j, task in enumerate(chain.tasks, start=1):
        fills = {name: str(value) for name, value in task.params.items()}
        if j == 1:
            lines.append(f"Step 1: {task.template.format(**fills)}")
            continue
        letter = PLACEHOLDERS[(j - 2) % len(PLACEHOLDERS)]
        reference = f"your final answer from Step {j - 1}"
        if chain.mode == "substitution":
            instruction = f"Let {letter} be {chain.adapters[j - 2].phrase(reference)}."
            fills[task.input_slot] = letter
        else:
            rw = chain.rewrites[j - 2]
            instruction = f"Write {letter} for {reference}."
            fills[rw.name] = rw.render(letter)
        lines.append(f"Step {j}: {instruction} {task.template.format(**fills)}")
    lines.append(
        f"Give only the final numerical answer to Step {chain.h}, with no other text."
    )
    return "\n".join(lines)


def validate_chain(chain: ChainSpec, strict: bool = False) -> ValidationReport:
    """Well-posedness report: never raises on chain content.

    Checks range, exact re-evaluation, task de-duplication, adapter shape,
    and (by perturbing y_1 by +1) that the final answer actually depends on
    the head of the chain; an insensitive chain is a warning, or a violation
    in strict mode.
    """
    report = ValidationReport()
    ids = [t.id for t in chain.tasks]
    if len(set(ids)) != len(ids):
        report.violations.append("duplicate-task-id")
    for y in chain.intermediates:
        if abs(y) > INT_LIMIT:
            report.violations.append(f"range: intermediate {y} outside +/-{INT_LIMIT}")
    for ad in chain.adapters:
        if ad.kind == "modwrap" and ad.m < 1:
            report.violations.append("adapter: nonpositive modulus")
    try:
        if chain.mode == "substitution":
            values = _evaluate_substitution(chain.tasks, chain.adapters)
        else:
            values = _evaluate_transformation(chain.tasks, chain.rewrites)
        if tuple(values) != chain.intermediates or values[-1] != chain.final_answer:
            report.violations.append("arithmetic-mismatch: stored intermediates disagree")
    except ChainError as exc:
        report.violations.append(f"arithmetic: {exc}")
        return report
    if chain.h > 1:
        try:
            if chain.mode == "substitution":
                perturbed = _evaluate_substitution(
                    chain.tasks, chain.adapters, first_value=chain.intermediates[0] + 1
                )
            else:
                perturbed = _evaluate_transformation(
                    chain.tasks, chain.rewrites, first_value=chain.intermediates[0] + 1
                )
            if perturbed[-1] == chain.final_answer:
                message = "weak-dependency: final answer ignores the head answer"
                (report.violations if strict else report.warnings).append(message)
        except ChainError:
            # The perturbed chain broke an exactness constraint, which is
            # itself evidence that downstream steps consume the head value.
            pass
    return report


def chain_record(chain: ChainSpec) -> dict:
    """JSON-serializable record for one chain (see docs/formats.md)."""
    from .graphs import build_graph, graph_stats

    stats = graph_stats(build_graph(chain))
    links = [a.describe() for a in chain.adapters]
    if chain.mode == "transformation":
        links = [rw.describe() for rw in chain.rewrites]
    return {
        "mode": chain.mode,
        "h": chain.h,
        "prompt": render_prompt(chain),
        "final_answer": chain.final_answer,
        "intermediates": list(chain.intermediates),
        "task_ids": [t.id for t in chain.tasks],
        "adapters": links,
        "graph_stats": stats,
    }
