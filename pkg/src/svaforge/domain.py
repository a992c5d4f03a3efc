"""Shared domain types: design models, traces, verdicts and the run ledger.

The design format is a line-oriented text document with sections
``ports:``, ``state:``, ``clock:``, ``reset:``, ``next:`` and ``out:``.
Expressions support ``& | ! ^ == + ?:`` over declared names and integer
literals (see docs/design_format.md for the grammar).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from .errors import BoundViolation, ParseError, UnknownNameError, WidthError

STATE_BIT_BUDGET = 20
MAX_FIX_ATTEMPTS = 5
MAX_RCA_ROUNDS = 3

EVENT_KINDS = (
    "SpecParsed",
    "PropertyGenerated",
    "LintRound",
    "FixAttempt",
    "CriticRound",
    "EngineVerdict",
    "CoverageRound",
    "RcaRound",
    "HilRequested",
    "HilResolved",
    "DatasetRecordEmitted",
)


# ---------------------------------------------------------------------------
# Expressions


@dataclass(frozen=True)
class Expr:
    """Node of a design expression tree."""

    op: str  # 'var', 'const', '!', '&', '|', '^', '==', '+', '?:'
    args: tuple = ()
    name: str | None = None
    value: int | None = None

    def names(self) -> set[str]:
        if self.op == "var":
            return {self.name}
        out: set[str] = set()
        for a in self.args:
            out |= a.names()
        return out


def var(name: str) -> Expr:
    return Expr("var", name=name)


def const(value: int) -> Expr:
    return Expr("const", value=value)


def eval_expr(expr: Expr, env: dict[str, int]) -> int:
    op = expr.op
    if op == "var":
        try:
            return env[expr.name]
        except KeyError:
            raise UnknownNameError(f"undeclared name '{expr.name}'") from None
    if op == "const":
        return expr.value
    if op == "!":
        return 0 if eval_expr(expr.args[0], env) else 1
    a = eval_expr(expr.args[0], env)
    if op == "?:":
        return eval_expr(expr.args[1 if a else 2], env)
    b = eval_expr(expr.args[1], env)
    if op == "&":
        return a & b
    if op == "|":
        return a | b
    if op == "^":
        return a ^ b
    if op == "==":
        return 1 if a == b else 0
    if op == "+":
        return a + b
    raise ValueError(f"bad op {op!r}")


_TOKEN_RE = re.compile(
    r"\s*(?:(?P<id>[A-Za-z_][A-Za-z0-9_]*)|(?P<num>\d+)|(?P<op>==|[&|^!+?:()])|(?P<bad>\S))"
)


def _tokenize_expr(text: str, line: int):
    tokens = []
    for m in _TOKEN_RE.finditer(text):
        if m.group("bad"):
            raise ParseError(f"bad character {m.group('bad')!r} in expression", line, m.start() + 1)
        if m.group("id"):
            tokens.append(("id", m.group("id"), m.start("id")))
        elif m.group("num"):
            tokens.append(("num", int(m.group("num")), m.start("num")))
        else:
            tokens.append(("op", m.group("op"), m.start("op")))
    return tokens


class _ExprParser:
    """Recursive descent: ternary < | < ^ < & < == < + < unary !."""

    def __init__(self, tokens, line):
        self.tokens = tokens
        self.pos = 0
        self.line = line

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self, want=None):
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of expression", self.line)
        if want is not None and (tok[0] != "op" or tok[1] != want):
            raise ParseError(f"expected {want!r}, found {tok[1]!r}", self.line, tok[2] + 1)
        self.pos += 1
        return tok

    def parse(self) -> Expr:
        e = self.ternary()
        if self.peek() is not None:
            tok = self.peek()
            raise ParseError(f"trailing token {tok[1]!r}", self.line, tok[2] + 1)
        return e

    def ternary(self) -> Expr:
        cond = self.bit_or()
        tok = self.peek()
        if tok and tok[:2] == ("op", "?"):
            self.take("?")
            then = self.ternary()
            self.take(":")
            other = self.ternary()
            return Expr("?:", (cond, then, other))
        return cond

    def _binary(self, sub, ops):
        e = sub()
        while True:
            tok = self.peek()
            if tok and tok[0] == "op" and tok[1] in ops:
                self.take(tok[1])
                e = Expr(tok[1], (e, sub()))
            else:
                return e

    def bit_or(self):
        return self._binary(self.bit_xor, ("|",))

    def bit_xor(self):
        return self._binary(self.bit_and, ("^",))

    def bit_and(self):
        return self._binary(self.equality, ("&",))

    def equality(self):
        return self._binary(self.additive, ("==",))

    def additive(self):
        return self._binary(self.unary, ("+",))

    def unary(self) -> Expr:
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of expression", self.line)
        if tok[:2] == ("op", "!"):
            self.take("!")
            return Expr("!", (self.unary(),))
        if tok[:2] == ("op", "("):
            self.take("(")
            e = self.ternary()
            self.take(")")
            return e
        if tok[0] == "id":
            self.take()
            return var(tok[1])
        if tok[0] == "num":
            self.take()
            return const(tok[1])
        raise ParseError(f"unexpected token {tok[1]!r}", self.line, tok[2] + 1)


def parse_expr(text: str, line: int = 0) -> Expr:
    tokens = _tokenize_expr(text, line)
    if not tokens:
        raise ParseError("empty expression", line)
    return _ExprParser(tokens, line).parse()


def render_expr(expr: Expr) -> str:
    if expr.op == "var":
        return expr.name
    if expr.op == "const":
        return str(expr.value)
    if expr.op == "!":
        return "!" + _paren(expr.args[0])
    if expr.op == "?:":
        return f"{_paren(expr.args[0])} ? {_paren(expr.args[1])} : {_paren(expr.args[2])}"
    return f"{_paren(expr.args[0])} {expr.op} {_paren(expr.args[1])}"


def _paren(expr: Expr) -> str:
    if expr.op in ("var", "const", "!"):
        return render_expr(expr)
    return "(" + render_expr(expr) + ")"


# ---------------------------------------------------------------------------
# Design model


@dataclass(frozen=True)
class Port:
    name: str
    direction: str  # 'input' | 'output'
    width: int


@dataclass(frozen=True)
class StateVar:
    name: str
    width: int
    reset_value: int


@dataclass(frozen=True)
class Reset:
    port: str
    active_level: str  # 'high' | 'low'
    kind: str  # 'sync' | 'async'

    def is_active(self, value: int) -> bool:
        return bool(value) if self.active_level == "high" else not value


@dataclass(frozen=True)
class DesignModel:
    name: str
    ports: tuple[Port, ...]
    state_vars: tuple[StateVar, ...]
    clock: str
    reset: Reset
    next_state: dict[str, Expr]  # state var -> expression
    outputs: dict[str, Expr]  # output port -> expression

    def signal_names(self) -> list[str]:
        """All declared signals, in declaration order: ports then state vars."""
        return [p.name for p in self.ports] + [s.name for s in self.state_vars]

    def input_ports(self) -> list[Port]:
        return [p for p in self.ports if p.direction == "input"]

    def free_inputs(self) -> list[Port]:
        """Input ports the engine enumerates (everything but clock and reset)."""
        return [
            p
            for p in self.input_ports()
            if p.name not in (self.clock, self.reset.port)
        ]

    def width_of(self, name: str) -> int:
        for p in self.ports:
            if p.name == name:
                return p.width
        for s in self.state_vars:
            if s.name == name:
                return s.width
        raise UnknownNameError(f"undeclared name '{name}'")

    def state_width(self) -> int:
        return sum(s.width for s in self.state_vars)


@dataclass(frozen=True)
class Trace:
    """Per-signal sampled values, one entry per cycle for every declared signal."""

    design: DesignModel
    length: int
    values: dict[str, tuple[int, ...]]

    def at(self, signal: str, cycle: int) -> int:
        return self.values[signal][cycle]

    def validate(self) -> None:
        declared = self.design.signal_names()
        for name in declared:
            samples = self.values.get(name)
            if samples is None or len(samples) != self.length:
                raise WidthError(f"signal '{name}' must have exactly {self.length} samples")
            mask = (1 << self.design.width_of(name)) - 1
            for v in samples:
                if v & ~mask:
                    raise WidthError(f"value {v} exceeds width of '{name}'")


@dataclass(frozen=True)
class Verdict:
    property_id: str
    status: str  # Proven | Failed | Vacuous | Inconclusive
    depth: int
    antecedent_ever_true: bool
    cex: Trace | None = None
    violated_at: int | None = None

    def __post_init__(self):
        if (self.status == "Failed") != (self.cex is not None):
            raise ValueError("cex present iff status is Failed")
        if self.status == "Vacuous" and self.antecedent_ever_true:
            raise ValueError("vacuous verdict with a true antecedent")


# ---------------------------------------------------------------------------
# Run ledger


@dataclass(frozen=True)
class Event:
    ts: int
    kind: str
    payload: dict

    def to_json(self) -> str:
        return json.dumps(
            {"ts": self.ts, "kind": self.kind, "payload": self.payload},
            separators=(",", ":"),
            sort_keys=True,
        )

    @staticmethod
    def from_json(line: str) -> "Event":
        obj = json.loads(line)
        return Event(obj["ts"], obj["kind"], obj["payload"])


@dataclass
class RunLedger:
    run_id: str
    design: str
    events: list[Event] = field(default_factory=list)

    def fix_attempts(self, property_id: str) -> int:
        return sum(
            1
            for e in self.events
            if e.kind == "FixAttempt" and e.payload.get("property_id") == property_id
        )

    def rca_rounds(self, cex_id: str) -> int:
        return sum(
            1
            for e in self.events
            if e.kind == "RcaRound" and e.payload.get("cex_id") == cex_id
        )


def append_event(ledger: RunLedger, event: Event) -> RunLedger:
    """Append one event, enforcing the per-property / per-CEX iteration caps."""
    if event.kind not in EVENT_KINDS:
        raise ValueError(f"unknown event kind {event.kind!r}")
    if ledger.events and event.ts < ledger.events[-1].ts:
        raise ValueError("event timestamps must be non-decreasing")
    if event.kind == "FixAttempt":
        pid = event.payload.get("property_id")
        if ledger.fix_attempts(pid) >= MAX_FIX_ATTEMPTS:
            raise BoundViolation(
                f"fix attempt cap ({MAX_FIX_ATTEMPTS}) reached for property '{pid}'"
            )
    if event.kind == "RcaRound":
        cid = event.payload.get("cex_id")
        if ledger.rca_rounds(cid) >= MAX_RCA_ROUNDS:
            raise BoundViolation(f"RCA round cap ({MAX_RCA_ROUNDS}) reached for CEX '{cid}'")
    ledger.events.append(event)
    return ledger


def save_ledger(ledger: RunLedger, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(ledger_to_jsonl(ledger))


def ledger_to_jsonl(ledger: RunLedger) -> str:
    head = json.dumps(
        {"design": ledger.design, "run_id": ledger.run_id},
        separators=(",", ":"),
        sort_keys=True,
    )
    lines = [head] + [e.to_json() for e in ledger.events]
    return "\n".join(lines) + "\n"


def load_ledger(path) -> RunLedger:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    head = json.loads(lines[0])
    ledger = RunLedger(head["run_id"], head["design"])
    for line in lines[1:]:
        ledger.events.append(Event.from_json(line))
    return ledger


# ---------------------------------------------------------------------------
# Design format parser

_SECTIONS = ("ports", "state", "clock", "reset", "next", "out")


def load_design(text: str) -> DesignModel:
    """Parse a design-description document into a validated DesignModel."""
    name = None
    section = None
    ports: list[Port] = []
    state_vars: list[StateVar] = []
    clock = None
    reset = None
    next_state: dict[str, Expr] = {}
    outputs: dict[str, Expr] = {}
    seen_sections: set[str] = set()

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("design "):
            if name is not None:
                raise ParseError("duplicate design header", lineno)
            name = line.split(None, 1)[1].strip()
            continue
        head, sep, rest = line.partition(":")
        if sep and head.strip() in _SECTIONS:
            section = head.strip()
            if section in ("clock", "reset"):
                if section in seen_sections:
                    raise ParseError(f"duplicate {section} declaration", lineno)
                rest = rest.strip()
                if section == "clock":
                    if not rest:
                        raise ParseError("clock declaration needs a port name", lineno)
                    clock = rest
                else:
                    parts = rest.split()
                    if len(parts) != 3 or parts[1] not in ("high", "low") or parts[2] not in (
                        "sync",
                        "async",
                    ):
                        raise ParseError(
                            "reset declaration must be '<port> high|low sync|async'", lineno
                        )
                    reset = Reset(parts[0], parts[1], parts[2])
            seen_sections.add(section)
            continue
        if section is None:
            raise ParseError(f"line outside any section: {line!r}", lineno)
        if section == "ports":
            parts = line.split()
            if len(parts) != 3 or parts[1] not in ("input", "output"):
                raise ParseError("port line must be '<name> input|output <width>'", lineno)
            try:
                width = int(parts[2])
            except ValueError:
                raise ParseError(f"bad port width {parts[2]!r}", lineno) from None
            ports.append(Port(parts[0], parts[1], width))
        elif section == "state":
            parts = line.split()
            if len(parts) != 3:
                raise ParseError("state line must be '<name> <width> <reset_value>'", lineno)
            try:
                width, rv = int(parts[1]), int(parts[2])
            except ValueError:
                raise ParseError("state width and reset value must be integers", lineno) from None
            state_vars.append(StateVar(parts[0], width, rv))
        elif section in ("next", "out"):
            lhs, sep, rhs = line.partition("=")
            if not sep:
                raise ParseError("assignment line must be '<name> = <expr>'", lineno)
            target = next_state if section == "next" else outputs
            key = lhs.strip()
            if key in target:
                raise ParseError(f"duplicate assignment to '{key}'", lineno)
            target[key] = parse_expr(rhs.strip(), lineno)
        else:
            raise ParseError(f"unexpected line in {section} section: {line!r}", lineno)

    if name is None:
        raise ParseError("missing 'design <name>' header")
    if clock is None:
        raise ParseError("missing clock declaration")
    if reset is None:
        raise ParseError("missing reset declaration")
    model = DesignModel(
        name, tuple(ports), tuple(state_vars), clock, reset, next_state, outputs
    )
    _validate_design(model)
    return model


def _validate_design(m: DesignModel) -> None:
    declared = m.signal_names()
    if len(set(declared)) != len(declared):
        dup = sorted({n for n in declared if declared.count(n) > 1})
        raise ParseError(f"duplicate signal name(s): {', '.join(dup)}")
    if m.state_width() > STATE_BIT_BUDGET:
        raise WidthError("state budget exceeded")
    names = set(declared)
    if m.clock not in names:
        raise UnknownNameError(f"clock port '{m.clock}' not declared")
    if m.reset.port not in names:
        raise UnknownNameError(f"reset port '{m.reset.port}' not declared")
    if m.reset.port == m.clock:
        raise ParseError("reset port must be distinct from the clock")
    readable = names
    for sv in m.state_vars:
        if sv.name not in m.next_state:
            raise ParseError(f"state var '{sv.name}' has no next-state assignment")
        if sv.reset_value & ~((1 << sv.width) - 1):
            raise WidthError(f"reset value of '{sv.name}' exceeds its width")
    for key, expr in m.next_state.items():
        if key not in {s.name for s in m.state_vars}:
            raise UnknownNameError(f"next-state assignment to undeclared state var '{key}'")
        missing = expr.names() - readable
        if missing:
            raise UnknownNameError(f"undeclared name '{sorted(missing)[0]}'")
    out_ports = {p.name for p in m.ports if p.direction == "output"}
    for key, expr in m.outputs.items():
        if key not in out_ports:
            raise UnknownNameError(f"output assignment to undeclared output '{key}'")
        missing = expr.names() - readable
        if missing:
            raise UnknownNameError(f"undeclared name '{sorted(missing)[0]}'")
    for p in out_ports:
        if p not in m.outputs:
            raise ParseError(f"output port '{p}' has no assignment")


def simulate(design: DesignModel, inputs: list[dict[str, int]]) -> Trace:
    """Run the synchronous semantics over a sequence of free-input assignments.

    The reset port is engine-driven: active at cycle 0, inactive afterwards.
    The clock is sampled as 1 at every cycle (samples are taken at the active
    edge). State vars hold their reset value during active-reset cycles.
    """
    length = len(inputs)
    cols: dict[str, list[int]] = {n: [] for n in design.signal_names()}
    state = {s.name: s.reset_value for s in design.state_vars}
    reset_active_value = 1 if design.reset.active_level == "high" else 0
    reset_idle_value = 1 - reset_active_value
    for cycle in range(length):
        env = dict(state)
        env[design.clock] = 1
        env[design.reset.port] = reset_active_value if cycle == 0 else reset_idle_value
        for p in design.free_inputs():
            env[p.name] = inputs[cycle].get(p.name, 0) & ((1 << p.width) - 1)
        for p in design.ports:
            if p.direction == "output":
                env[p.name] = eval_expr(design.outputs[p.name], env) & ((1 << p.width) - 1)
        for name in cols:
            cols[name].append(env[name])
        new_state = {}
        for sv in design.state_vars:
            new_state[sv.name] = eval_expr(design.next_state[sv.name], env) & (
                (1 << sv.width) - 1
            )
        state = new_state
    return Trace(design, length, {k: tuple(v) for k, v in cols.items()})


def render_design(m: DesignModel) -> str:
    """Serialize a DesignModel back to the text format (round-trip aid)."""
    lines = [f"design {m.name}", "ports:"]
    lines += [f"  {p.name} {p.direction} {p.width}" for p in m.ports]
    lines.append("state:")
    lines += [f"  {s.name} {s.width} {s.reset_value}" for s in m.state_vars]
    lines.append(f"clock: {m.clock}")
    lines.append(f"reset: {m.reset.port} {m.reset.active_level} {m.reset.kind}")
    lines.append("next:")
    lines += [f"  {k} = {render_expr(v)}" for k, v in m.next_state.items()]
    lines.append("out:")
    lines += [f"  {k} = {render_expr(v)}" for k, v in m.outputs.items()]
    return "\n".join(lines) + "\n"
