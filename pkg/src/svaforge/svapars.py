"""Lexer, parser, linter and canonical fixer for the SVA subset.

Supported property shape::

    property <name>;
    @(posedge <clk>) [disable iff (<bool>)] <seq> |->/|=> <seq>;
    endproperty
    assert property (<name>) [else $error("...")];

Sequences are boolean atoms (&& || ! == parentheses, $stable/$rose/$fell/
$past) chained with ``##n`` / ``##[m:n]`` delays and combined with ``or``.
``unless``, ``until``, ``throughout`` and other out-of-subset constructs are
rejected as UnsupportedConstruct.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

from .domain import DesignModel, Trace
from .errors import ParseFailure, UnfixableDiagnostic, UnsupportedConstruct

UNSUPPORTED_KEYWORDS = {
    "unless",
    "until",
    "until_with",
    "throughout",
    "within",
    "intersect",
    "first_match",
    "s_until",
    "s_eventually",
    "nexttime",
    "eventually",
    "always",
}

BUILTINS = ("$stable", "$rose", "$fell", "$past")


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class BExpr:
    """Boolean expression over trace signals."""

    op: str  # 'var' | 'const' | '!' | '&&' | '||' | '==' | 'call'
    args: tuple = ()
    name: str | None = None  # variable name, or builtin name for 'call'
    value: int | None = None
    depth: int = 1  # history depth for $past

    def names(self) -> set[str]:
        out = {self.name} if self.op == "var" else set()
        for a in self.args:
            out |= a.names()
        return out


@dataclass(frozen=True)
class SBool:
    expr: BExpr

    def names(self) -> set[str]:
        return self.expr.names()


@dataclass(frozen=True)
class SConcat:
    # (delay_lo, delay_hi, node); the first delay is relative to the start
    # cycle, later delays are relative to the previous element's match end.
    items: tuple

    def names(self) -> set[str]:
        out: set[str] = set()
        for _, _, node in self.items:
            out |= node.names()
        return out


@dataclass(frozen=True)
class SOr:
    items: tuple

    def names(self) -> set[str]:
        out: set[str] = set()
        for node in self.items:
            out |= node.names()
        return out


@dataclass(frozen=True)
class PropertyAst:
    name: str | None
    edge: str  # 'posedge' | 'negedge'
    clock: str
    antecedent: object
    implication: str  # '|->' | '|=>'
    consequent: object
    disable_expr: BExpr | None = None
    post_reset: bool = False
    action_note: str | None = None  # discarded $error(...) action block, if any

    def names(self) -> set[str]:
        out = {self.clock} | self.antecedent.names() | self.consequent.names()
        if self.disable_expr is not None:
            out |= self.disable_expr.names()
        return out


def max_span(node) -> int:
    """Largest number of cycles a sequence can cover past its start."""
    if isinstance(node, SBool):
        return 0
    if isinstance(node, SOr):
        return max(max_span(n) for n in node.items)
    total = 0
    for _, hi, sub in node.items:
        total += hi + max_span(sub)
    return total


def horizon(ast: PropertyAst) -> int:
    """Cycles needed past an antecedent start to decide one obligation."""
    return (
        max_span(ast.antecedent)
        + (1 if ast.implication == "|=>" else 0)
        + max_span(ast.consequent)
    )


# ---------------------------------------------------------------------------
# Lexer

_PROP_TOKEN_RE = re.compile(
    r"""\s*(?:
        (?P<comment>//[^\n]*|/\*.*?\*/)
      | (?P<str>"(?:[^"\\]|\\.)*")
      | (?P<impl>\|->|\|=>)
      | (?P<dd>\#\#)
      | (?P<andand>&&)|(?P<oror>\|\|)|(?P<eqeq>==)
      | (?P<sys>\$[A-Za-z_][A-Za-z0-9_]*)
      | (?P<id>[A-Za-z_][A-Za-z0-9_]*)
      | (?P<num>\d+)
      | (?P<punct>[@()\[\]:;,!])
      | (?P<bad>\S)
    )""",
    re.VERBOSE | re.DOTALL,
)


def _lex(text: str):
    tokens = []
    post_reset = "post-reset" in text or "post_reset" in text
    for m in _PROP_TOKEN_RE.finditer(text):
        if m.group("comment"):
            continue
        if m.group("bad"):
            line = text.count("\n", 0, m.start()) + 1
            raise ParseFailure(f"unexpected character {m.group('bad')!r}", line)
        line = text.count("\n", 0, m.start()) + 1
        if m.group("str"):
            tokens.append(("str", m.group("str"), line))
        elif m.group("impl"):
            tokens.append(("impl", m.group("impl"), line))
        elif m.group("dd"):
            tokens.append(("dd", "##", line))
        elif m.group("andand"):
            tokens.append(("op", "&&", line))
        elif m.group("oror"):
            tokens.append(("op", "||", line))
        elif m.group("eqeq"):
            tokens.append(("op", "==", line))
        elif m.group("sys"):
            tokens.append(("sys", m.group("sys"), line))
        elif m.group("id"):
            tokens.append(("id", m.group("id"), line))
        elif m.group("num"):
            tokens.append(("num", int(m.group("num")), line))
        else:
            tokens.append(("op", m.group("punct"), line))
    return tokens, post_reset


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.pos = 0

    def peek(self, ahead=0):
        i = self.pos + ahead
        return self.tokens[i] if i < len(self.tokens) else None

    def at(self, kind, value=None, ahead=0):
        tok = self.peek(ahead)
        return tok is not None and tok[0] == kind and (value is None or tok[1] == value)

    def take(self, kind=None, value=None):
        tok = self.peek()
        if tok is None:
            raise ParseFailure("unexpected end of property text")
        if kind is not None and (tok[0] != kind or (value is not None and tok[1] != value)):
            want = value if value is not None else kind
            raise ParseFailure(f"expected {want!r}, found {tok[1]!r}", tok[2])
        self.pos += 1
        return tok

    def reject_unsupported(self, tok):
        if tok[0] == "id" and tok[1] in UNSUPPORTED_KEYWORDS:
            raise UnsupportedConstruct(tok[1], tok[2])
        if tok[0] == "sys" and tok[1] not in BUILTINS and tok[1] != "$error":
            raise UnsupportedConstruct(tok[1], tok[2])

    # -- boolean expressions ------------------------------------------------

    def parse_bool(self) -> BExpr:
        return self._bool_or()

    def _bool_or(self) -> BExpr:
        e = self._bool_and()
        while self.at("op", "||"):
            self.take()
            e = BExpr("||", (e, self._bool_and()))
        return e

    def _bool_and(self) -> BExpr:
        e = self._bool_eq()
        while self.at("op", "&&"):
            self.take()
            e = BExpr("&&", (e, self._bool_eq()))
        return e

    def _bool_eq(self) -> BExpr:
        e = self._bool_unary()
        while self.at("op", "=="):
            self.take()
            e = BExpr("==", (e, self._bool_unary()))
        return e

    def _bool_unary(self) -> BExpr:
        if self.at("op", "!"):
            self.take()
            return BExpr("!", (self._bool_unary(),))
        return self._bool_primary()

    def _bool_primary(self) -> BExpr:
        tok = self.peek()
        if tok is None:
            raise ParseFailure("unexpected end of expression")
        self.reject_unsupported(tok)
        if tok[0] == "id":
            if tok[1] == "or":
                raise ParseFailure("'or' is a sequence operator, not a boolean one", tok[2])
            self.take()
            return BExpr("var", name=tok[1])
        if tok[0] == "num":
            self.take()
            return BExpr("const", value=tok[1])
        if tok[0] == "sys":
            name = self.take()[1]
            self.take("op", "(")
            arg = self.parse_bool()
            depth = 1
            if name == "$past" and self.at("op", ","):
                self.take()
                depth = self.take("num")[1]
            self.take("op", ")")
            return BExpr("call", (arg,), name=name, depth=depth)
        if tok[0] == "op" and tok[1] == "(":
            self.take()
            e = self.parse_bool()
            self.take("op", ")")
            return e
        raise ParseFailure(f"unexpected token {tok[1]!r}", tok[2])

    # -- sequences -----------------------------------------------------------

    def parse_delay(self):
        self.take("dd")
        if self.at("op", "["):
            self.take()
            lo = self.take("num")[1]
            self.take("op", ":")
            hi = self.take("num")[1]
            self.take("op", "]")
            if lo > hi:
                raise ParseFailure("m ≤ n violated in delay window")
            return lo, hi
        n = self.take("num")[1]
        return n, n

    def parse_seq(self):
        items = [self._parse_cat()]
        while self.at("id", "or"):
            self.take()
            items.append(self._parse_cat())
        if len(items) > 1:
            return SOr(tuple(items))
        return items[0]

    def _parse_cat(self):
        parts = []
        if self.at("dd"):
            lo, hi = self.parse_delay()
            parts.append((lo, hi, self._parse_unit()))
        else:
            parts.append((0, 0, self._parse_unit()))
        while self.at("dd"):
            lo, hi = self.parse_delay()
            parts.append((lo, hi, self._parse_unit()))
        if len(parts) == 1 and parts[0][:2] == (0, 0):
            return parts[0][2]
        return SConcat(tuple(parts))

    def _parse_unit(self):
        tok = self.peek()
        if tok is not None:
            self.reject_unsupported(tok)
        if self.at("op", "("):
            # A parenthesised group is a boolean when that parse consumes the
            # whole group, otherwise it is a nested sequence.
            saved = self.pos
            try:
                return SBool(self.parse_bool())
            except ParseFailure:
                self.pos = saved
            self.take("op", "(")
            inner = self.parse_seq()
            self.take("op", ")")
            return inner
        return SBool(self.parse_bool())


def parse_property(text: str) -> PropertyAst:
    """Parse property-block (or bare clocked implication) text."""
    tokens, post_reset = _lex(text)
    if not tokens:
        raise ParseFailure("empty property text")
    p = _Parser(tokens)

    name = None
    if p.at("id", "property"):
        p.take()
        name = p.take("id")[1]
        p.take("op", ";")

    p.take("op", "@")
    p.take("op", "(")
    edge_tok = p.take("id")
    if edge_tok[1] not in ("posedge", "negedge"):
        raise ParseFailure(f"expected clock edge, found {edge_tok[1]!r}", edge_tok[2])
    clock = p.take("id")[1]
    p.take("op", ")")

    disable_expr = None
    if p.at("id", "disable"):
        p.take()
        p.take("id", "iff")
        p.take("op", "(")
        disable_expr = p.parse_bool()
        p.take("op", ")")

    antecedent = p.parse_seq()
    impl = p.take("impl")[1]
    consequent = p.parse_seq()
    if p.peek() is not None:
        p.reject_unsupported(p.peek())
    p.take("op", ";")

    action_note = None
    if p.at("id", "endproperty"):
        p.take()
        if p.at("id", "assert"):
            p.take()
            p.take("id", "property")
            p.take("op", "(")
            assert_name = p.take("id")[1]
            p.take("op", ")")
            if name is not None and assert_name != name:
                raise ParseFailure(
                    f"assert names {assert_name!r} but the property is {name!r}"
                )
            if p.at("id", "else"):
                p.take()
                sys_tok = p.take("sys")
                if sys_tok[1] != "$error":
                    raise UnsupportedConstruct(sys_tok[1], sys_tok[2])
                p.take("op", "(")
                msg = p.take("str")[1]
                p.take("op", ")")
                action_note = f"discarded action block $error({msg})"
            p.take("op", ";")
    if p.peek() is not None:
        tok = p.peek()
        p.reject_unsupported(tok)
        raise ParseFailure(f"trailing token {tok[1]!r}", tok[2])

    return PropertyAst(
        name=name,
        edge=edge_tok[1],
        clock=clock,
        antecedent=antecedent,
        implication=impl,
        consequent=consequent,
        disable_expr=disable_expr,
        post_reset=post_reset,
        action_note=action_note,
    )


# ---------------------------------------------------------------------------
# Pretty printer

_ATOMIC_BOOL_OPS = ("var", "const", "call", "!")


def render_bool(e: BExpr, top: bool = False) -> str:
    if e.op == "var":
        return e.name
    if e.op == "const":
        return str(e.value)
    if e.op == "call":
        inner = render_bool(e.args[0], top=True)
        if e.name == "$past" and e.depth != 1:
            return f"{e.name}({inner}, {e.depth})"
        return f"{e.name}({inner})"
    if e.op == "!":
        return "!" + render_bool(e.args[0])
    text = f"{render_bool(e.args[0])} {e.op} {render_bool(e.args[1])}"
    return text if top else f"({text})"


def _render_atom(e: BExpr) -> str:
    # Atoms in sequence position: bare identifiers and negations stay bare,
    # compound booleans keep their parentheses.
    if e.op in _ATOMIC_BOOL_OPS:
        return render_bool(e, top=True)
    return "(" + render_bool(e, top=True) + ")"


def render_seq(node) -> str:
    if isinstance(node, SBool):
        return _render_atom(node.expr)
    if isinstance(node, SOr):
        return "(" + " or ".join(render_seq(n) for n in node.items) + ")"
    parts = []
    for i, (lo, hi, sub) in enumerate(node.items):
        delay = "" if (i == 0 and (lo, hi) == (0, 0)) else (
            f"##{lo} " if lo == hi else f"##[{lo}:{hi}] "
        )
        parts.append(delay + render_seq(sub))
    return " ".join(parts)


def render_property(ast: PropertyAst) -> str:
    """Stable normal-form rendering; golden files are produced by this."""
    disable = (
        f"disable iff ({render_bool(ast.disable_expr, top=True)}) "
        if ast.disable_expr is not None
        else ""
    )
    body = (
        f"@({ast.edge} {ast.clock}) {disable}"
        f"{render_seq(ast.antecedent)} {ast.implication} {render_seq(ast.consequent)};"
    )
    if ast.name is None:
        return body + "\n"
    return (
        f"property {ast.name};\n"
        f"{body}\n"
        f"endproperty\n"
        f"assert property ({ast.name});\n"
    )


# ---------------------------------------------------------------------------
# Lint


@dataclass(frozen=True)
class LintDiagnostic:
    code: str
    message: str
    span: tuple | None = None
    suggested_rewrite: str | None = None

    def to_json_obj(self) -> dict:
        line, col = (self.span or (None, None))
        return {
            "code": self.code,
            "message": self.message,
            "line": line,
            "col": col,
            "rewrite": self.suggested_rewrite,
        }


def _effective_window(ast: PropertyAst):
    """The (lo, hi) cycle offset of the consequent relative to the antecedent end."""
    base = 1 if ast.implication == "|=>" else 0
    node = ast.consequent
    if isinstance(node, SOr):
        spans = [_node_window(n) for n in node.items]
        concat = [s for s in spans if s != (0, 0)]
        if len(concat) == 1:
            lo, hi = concat[0]
            return base + lo, base + hi
    lo, hi = _node_window(node)
    return base + lo, base + hi


def _node_window(node):
    if isinstance(node, SBool):
        return 0, 0
    if isinstance(node, SConcat):
        lo = sum(x[0] for x in node.items)
        hi = sum(x[1] for x in node.items)
        return lo, hi
    los, his = zip(*(_node_window(n) for n in node.items))
    return min(los), max(his)


def _seq_atoms(node):
    if isinstance(node, SBool):
        return [node.expr]
    if isinstance(node, SConcat):
        out = []
        for _, _, sub in node.items:
            out += _seq_atoms(sub)
        return out
    out = []
    for sub in node.items:
        out += _seq_atoms(sub)
    return out


def lint(ast: PropertyAst, design: DesignModel, spec=None, rules=(), extra=()):
    """Structural checks against the design and, when given, the parsed spec.

    `extra` carries diagnostics recovered during parsing (e.g. a stripped
    unsupported construct) so spec-aware analysis can fold them in.
    """
    diags: list[LintDiagnostic] = []
    implicated: set[str] = set()
    expectation = spec.expectation() if spec is not None else None

    if expectation is not None:
        if (ast.edge, ast.clock) != (expectation.edge, expectation.clock):
            diags.append(
                LintDiagnostic(
                    "ClockEdgeMismatch",
                    f"uses {ast.edge} {ast.clock} instead of "
                    f"{expectation.edge} {expectation.clock}",
                )
            )
        want = expectation.window
        got = _effective_window(ast)
        if want is not None and got != want:
            diags.append(
                LintDiagnostic(
                    "DelayWindowMismatch",
                    f"{got[1] - got[0] + (1 if got[0] != got[1] else 0)}-cycle window "
                    f"##[{got[0]}:{got[1]}] instead of ##[{want[0]}:{want[1]}]",
                )
            )
        sem = _semantic_mismatch(ast, expectation, extra)
        if sem is not None:
            diags.append(sem)
            implicated = ast.names() - {ast.clock}
    for d in extra:
        if not (implicated and d.code == "UnsupportedConstruct"):
            diags.append(d)

    declared = set(design.signal_names())
    for name in sorted(ast.names()):
        if name not in declared and name not in implicated:
            diags.append(LintDiagnostic("UnknownSignal", f"unknown signal '{name}'"))

    # Reset hygiene is moot while the property misreads the condition; hold
    # the disable-iff advice until the semantics are right.
    semantic_broken = any(d.code == "SemanticMismatch" for d in diags)
    if ast.disable_expr is None and not ast.post_reset and not semantic_broken:
        reset_diag = _reset_rule(ast, design)
        if reset_diag is not None:
            diags.append(reset_diag)

    for rule in rules:
        diags.extend(rule.apply(ast, design))

    seen = set()
    unique = []
    for d in diags:
        if (d.code, d.message) not in seen:
            seen.add((d.code, d.message))
            unique.append(d)
    return unique


def _reset_rule(ast: PropertyAst, design: DesignModel):
    guard = (
        f"!{design.reset.port}"
        if design.reset.active_level == "low"
        else design.reset.port
    )
    fixed = add_disable(ast, design)
    return LintDiagnostic(
        "MissingResetDisable",
        f"missing disable iff; add 'disable iff ({guard})' to prevent "
        f"assertion failures during reset",
        suggested_rewrite=render_property(fixed),
    )


def _semantic_mismatch(ast: PropertyAst, exp, extra):
    ante_names = ast.antecedent.names()
    conseq_names = ast.consequent.names()
    problems = []
    want_ante = {s for s, _ in exp.ante}
    if not want_ante <= ante_names:
        problems.append("antecedent")
    expected_conseq = {exp.conseq[0]}
    if exp.unless is not None:
        expected_conseq.add(exp.unless[0])
    if not expected_conseq <= conseq_names:
        problems.append("consequent")
    has_unsupported = any(d.code == "UnsupportedConstruct" for d in extra)
    if not problems and not has_unsupported:
        return None
    if not problems:
        return None
    detail = exp.describe()
    return LintDiagnostic(
        "SemanticMismatch",
        f"misinterprets the condition; the property should check {detail}",
    )


def add_disable(ast: PropertyAst, design: DesignModel) -> PropertyAst:
    guard_name = design.reset.port
    guard = BExpr("var", name=guard_name)
    if design.reset.active_level == "low":
        guard = BExpr("!", (guard,))
    return replace(ast, disable_expr=guard)


_SNAKE_RE = re.compile(r"(?<=[a-z0-9])(?=[A-Z])")


def to_lower_snake(name: str) -> str:
    return _SNAKE_RE.sub("_", name).lower()


def apply_canonical_rewrites(ast: PropertyAst, diagnostics, design=None, spec=None):
    """Mechanically repair diagnostics that have a registered rewrite."""
    out = ast
    for d in diagnostics:
        if d.code in ("SemanticMismatch", "ParseFailure", "UnsupportedConstruct"):
            raise UnfixableDiagnostic(f"{d.code} has no mechanical rewrite: {d.message}")
        if d.suggested_rewrite is not None:
            out = parse_property(d.suggested_rewrite)
            continue
        if d.code == "MissingResetDisable" and design is not None:
            out = add_disable(out, design)
        elif d.code == "ClockEdgeMismatch" and spec is not None:
            exp = spec.expectation()
            out = replace(out, edge=exp.edge, clock=exp.clock)
        elif d.code == "DelayWindowMismatch" and spec is not None:
            exp = spec.expectation()
            out = _rewrite_window(out, exp.window)
        else:
            raise UnfixableDiagnostic(f"no registered rewrite for {d.code}: {d.message}")
    if out.name is not None:
        out = replace(out, name=to_lower_snake(out.name))
    return out


def _rewrite_window(ast: PropertyAst, want):
    base = 1 if ast.implication == "|=>" else 0
    lo, hi = want[0] - base, want[1] - base

    def fix(node):
        if isinstance(node, SConcat):
            items = []
            for i, (a, b, sub) in enumerate(node.items):
                if (a, b) != (0, 0):
                    items.append((lo, hi, fix(sub)))
                else:
                    items.append((a, b, fix(sub)))
            return SConcat(tuple(items))
        if isinstance(node, SOr):
            return SOr(tuple(fix(n) for n in node.items))
        return node

    return replace(ast, consequent=fix(ast.consequent))


# ---------------------------------------------------------------------------
# Validation pipeline (analyzer -> fixer -> validator composition lives in
# orchestr; this is the parse+bind+lint step)


@dataclass
class ValidationResult:
    ok: PropertyAst | None
    diagnostics: list[LintDiagnostic] = field(default_factory=list)

    @property
    def is_ok(self) -> bool:
        return self.ok is not None and not self.diagnostics


def diagnose_property_text(text: str, design: DesignModel, spec=None, rules=()):
    """Parse with recovery, then lint. Returns (ast_or_None, diagnostics)."""
    extra: list[LintDiagnostic] = []
    try:
        ast = parse_property(text)
    except UnsupportedConstruct as exc:
        recovered = _strip_token_clause(text, exc.token)
        if recovered is None:
            return None, [LintDiagnostic("UnsupportedConstruct", str(exc))]
        try:
            ast = parse_property(recovered)
        except (ParseFailure, UnsupportedConstruct) as exc2:
            return None, [LintDiagnostic("ParseFailure", str(exc2))]
        extra.append(LintDiagnostic("UnsupportedConstruct", str(exc)))
    except ParseFailure as exc:
        return None, [LintDiagnostic("ParseFailure", str(exc))]
    return ast, lint(ast, design, spec=spec, rules=rules, extra=extra)


def _strip_token_clause(text: str, token: str):
    # Drop "<token> <trailing operands>" up to the statement end so analysis
    # can continue on the rest of the property.
    pattern = re.compile(r"\b" + re.escape(token) + r"\b[^;]*")
    stripped, n = pattern.subn("", text)
    return stripped if n else None


def validate(text: str, design: DesignModel, spec=None, rules=()) -> ValidationResult:
    ast, diags = diagnose_property_text(text, design, spec=spec, rules=rules)
    if diags:
        return ValidationResult(None, diags)
    return ValidationResult(ast, [])


# ---------------------------------------------------------------------------
# Trace-level boolean evaluation (shared with the engine and RCA)


def eval_bool(e: BExpr, trace: Trace, cycle: int) -> int:
    """Evaluate a boolean atom at a cycle; $past before cycle 0 reads as 0."""
    if e.op == "var":
        return trace.at(e.name, cycle)
    if e.op == "const":
        return e.value
    if e.op == "!":
        return 0 if eval_bool(e.args[0], trace, cycle) else 1
    if e.op == "&&":
        return 1 if eval_bool(e.args[0], trace, cycle) and eval_bool(e.args[1], trace, cycle) else 0
    if e.op == "||":
        return 1 if eval_bool(e.args[0], trace, cycle) or eval_bool(e.args[1], trace, cycle) else 0
    if e.op == "==":
        return 1 if eval_bool(e.args[0], trace, cycle) == eval_bool(e.args[1], trace, cycle) else 0
    if e.op == "call":
        arg = e.args[0]
        if e.name == "$past":
            past = cycle - e.depth
            return eval_bool(arg, trace, past) if past >= 0 else 0
        cur = eval_bool(arg, trace, cycle)
        prev = eval_bool(arg, trace, cycle - 1) if cycle >= 1 else 0
        if e.name == "$rose":
            return 1 if (cur & 1) and not (prev & 1) else 0
        if e.name == "$fell":
            return 1 if (prev & 1) and not (cur & 1) else 0
        if e.name == "$stable":
            return 1 if cur == prev else 0
    raise ValueError(f"bad boolean op {e.op!r}")
