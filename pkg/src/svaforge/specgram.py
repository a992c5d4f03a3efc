"""Structured specification grammar, learning cache and prompt-context rendering.

Rulebook spec format (one section per line, case-insensitive names)::

    Signals: [clk, req, ack, error]
    Property: [assert, concurrent, positive edge of clk]
    Condition: [if req is high, then ack must be high within 2 cycles unless error is high]
"""

from __future__ import annotations

import datetime as _dt
import json
import re
from dataclasses import dataclass, field

from . import svapars
from .domain import DesignModel
from .errors import (
    DuplicateSection,
    EmptySignalList,
    InvalidCorrection,
    MissingSection,
    ParseFailure,
    UnsupportedConstruct,
)

# ---------------------------------------------------------------------------
# SpecGrammar


@dataclass(frozen=True)
class Expectation:
    """Formal reading of a condition clause, used by the spec-aware linter."""

    edge: str
    clock: str
    ante: tuple  # ((signal, is_high), ...)
    conseq: tuple  # (signal, is_high)
    window: tuple  # (lo, hi) cycle offset of the consequent
    unless: tuple | None  # (signal, is_high) escape branch, or None
    text: str

    def describe(self) -> str:
        return self.text


@dataclass(frozen=True)
class SpecGrammar:
    signals: tuple[str, ...]
    property_kind: tuple[str, ...]
    condition: str
    source_span: tuple = field(default=(0, 0), compare=False)

    def edge(self) -> tuple[str, str]:
        for kw in self.property_kind:
            m = re.fullmatch(r"(positive|negative) edge of (\w+)", kw.strip())
            if m:
                return ("posedge" if m.group(1) == "positive" else "negedge", m.group(2))
        raise ValueError("property keywords carry no clock-edge phrase")

    def expectation(self) -> Expectation | None:
        edge, clock = self.edge()
        parsed = _parse_condition(self.condition)
        if parsed is None:
            return None
        ante, conseq, window, unless = parsed
        return Expectation(edge, clock, ante, conseq, window, unless, self.condition)


_ANTE_TERM_RE = re.compile(r"^(\w+) is (high|low)$")
_WITHIN_RE = re.compile(
    r"^(?:then )?(\w+) must be (high|low) within (\d+) cycles?"
    r"(?: unless (\w+) is (high|low))?$"
)
_NEXT_RE = re.compile(r"^(?:then )?(\w+) must be (high|low) in (?:the )?next cycle$")


def _parse_condition(text: str):
    m = re.match(r"^if (.+?),\s*(.+)$", text.strip())
    if not m:
        return None
    ante = []
    for term in m.group(1).split(" and "):
        tm = _ANTE_TERM_RE.match(term.strip())
        if not tm:
            return None
        ante.append((tm.group(1), tm.group(2) == "high"))
    rest = m.group(2).strip()
    wm = _WITHIN_RE.match(rest)
    if wm:
        unless = (wm.group(4), wm.group(5) == "high") if wm.group(4) else None
        return tuple(ante), (wm.group(1), wm.group(2) == "high"), (1, int(wm.group(3))), unless
    nm = _NEXT_RE.match(rest)
    if nm:
        return tuple(ante), (nm.group(1), nm.group(2) == "high"), (1, 1), None
    return None


_SECTION_RE = re.compile(r"^(signals|property|condition)\s*:\s*\[(.*)\]\s*$", re.IGNORECASE)


def parse_structured_spec(text: str) -> SpecGrammar:
    sections: dict[str, tuple[str, int]] = {}
    first_line = last_line = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        m = _SECTION_RE.match(line)
        if not m:
            continue
        key = m.group(1).lower()
        if key in sections:
            raise DuplicateSection(f"duplicate section '{key}'")
        sections[key] = (m.group(2).strip(), lineno)
        first_line = first_line or lineno
        last_line = lineno
    for key in ("signals", "property", "condition"):
        if key not in sections:
            raise MissingSection(f"missing section '{key}'")
    signals = tuple(s.strip() for s in sections["signals"][0].split(",") if s.strip())
    if not signals:
        raise EmptySignalList("signal list is empty")
    if len(set(signals)) != len(signals):
        raise EmptySignalList("signal list contains duplicates")
    kinds = tuple(k.strip() for k in sections["property"][0].split(",") if k.strip())
    spec = SpecGrammar(
        signals=signals,
        property_kind=kinds,
        condition=sections["condition"][0],
        source_span=(first_line, last_line),
    )
    spec.edge()  # enforces the exactly-one-edge-phrase invariant
    if not spec.condition:
        raise MissingSection("condition clause is empty")
    return spec


def render_spec(spec: SpecGrammar) -> str:
    return (
        f"Signals: [{', '.join(spec.signals)}]\n"
        f"Property: [{', '.join(spec.property_kind)}]\n"
        f"Condition: [{spec.condition}]\n"
    )


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str


def validate_against_design(spec: SpecGrammar, design: DesignModel) -> list[Diagnostic]:
    declared = set(design.signal_names())
    return [
        Diagnostic("UnknownSignal", f"spec signal '{s}' is not declared by the design")
        for s in spec.signals
        if s not in declared
    ]


# ---------------------------------------------------------------------------
# Error-signature normalization

_KEEP_QUOTED = UNSUPPORTED = set(svapars.UNSUPPORTED_KEYWORDS) | {
    "or",
    "and",
    "disable",
    "iff",
    "posedge",
    "negedge",
    "property",
    "endproperty",
    "assert",
}

_AT_LINE_RE = re.compile(r"\s+at line \d+(?:,? col(?:umn)? \d+)?")
_POS_WORD_RE = re.compile(r"\b(line|col|column|cycle) \d+\b")
_QUOTED_ID_RE = re.compile(r"'([a-z_][a-z0-9_]*)'")
_PAREN_RE = re.compile(r"\([^()]*\)")


def normalize_error_signature(raw: str) -> str:
    """Lowercase, strip positions, replace identifiers; idempotent."""
    sig = raw.lower()
    sig = _AT_LINE_RE.sub("", sig)
    sig = _POS_WORD_RE.sub(lambda m: f"{m.group(1)} <n>", sig)

    def _quoted(m):
        word = m.group(1)
        if word in _KEEP_QUOTED or word.startswith("$"):
            return m.group(0)
        return "'<id>'"

    sig = _QUOTED_ID_RE.sub(_quoted, sig)
    sig = _PAREN_RE.sub("(<expr>)", sig)
    return " ".join(sig.split())


# ---------------------------------------------------------------------------
# Learning cache


@dataclass(frozen=True)
class CacheEntry:
    id: str
    error_signature: str
    incorrect_snippet: str
    explanation: tuple[str, ...]
    corrected_snippet: str
    tags: tuple[str, ...]
    origin: str  # 'seeded' | 'hil'
    created_at: str  # RFC 3339

    def to_json(self) -> str:
        return json.dumps(
            {
                "id": self.id,
                "error_signature": self.error_signature,
                "incorrect_snippet": self.incorrect_snippet,
                "explanation": list(self.explanation),
                "corrected_snippet": self.corrected_snippet,
                "tags": list(self.tags),
                "origin": self.origin,
                "created_at": self.created_at,
            },
            separators=(",", ":"),
            sort_keys=True,
        )

    @staticmethod
    def from_json(line: str) -> "CacheEntry":
        obj = json.loads(line)
        return CacheEntry(
            id=obj["id"],
            error_signature=obj["error_signature"],
            incorrect_snippet=obj["incorrect_snippet"],
            explanation=tuple(obj["explanation"]),
            corrected_snippet=obj["corrected_snippet"],
            tags=tuple(obj["tags"]),
            origin=obj["origin"],
            created_at=obj["created_at"],
        )


def _now_rfc3339() -> str:
    return _dt.datetime.now(_dt.timezone.utc).replace(microsecond=0).isoformat()


class LearningCache:
    """Append-only JSONL store of documented mistakes and their corrections."""

    def __init__(self, path=None):
        self.path = path
        self.entries: list[CacheEntry] = []
        if path is not None:
            try:
                with open(path, encoding="utf-8") as fh:
                    for line in fh:
                        if line.strip():
                            self.entries.append(CacheEntry.from_json(line))
            except FileNotFoundError:
                pass

    def record(self, entry: CacheEntry) -> str:
        try:
            svapars.parse_property(entry.corrected_snippet)
        except (ParseFailure, UnsupportedConstruct) as exc:
            raise InvalidCorrection(f"corrected snippet does not parse: {exc}") from exc
        entry = CacheEntry(
            id=entry.id,
            error_signature=normalize_error_signature(entry.error_signature),
            incorrect_snippet=entry.incorrect_snippet,
            explanation=entry.explanation,
            corrected_snippet=entry.corrected_snippet,
            tags=entry.tags,
            origin=entry.origin,
            created_at=entry.created_at or _now_rfc3339(),
        )
        self.entries.append(entry)
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(entry.to_json() + "\n")
        return entry.id

    def lookup(self, signature: str, tags=()) -> list[CacheEntry]:
        """Rank by exact signature match, then tag overlap, then recency."""
        signature = normalize_error_signature(signature)
        tagset = set(tags)
        scored = []
        for idx, entry in enumerate(self.entries):
            exact = 1 if entry.error_signature == signature else 0
            overlap = len(tagset & set(entry.tags))
            if exact == 0 and overlap == 0:
                continue
            scored.append((-exact, -overlap, -idx, entry.id, entry))
        scored.sort(key=lambda t: t[:4])
        return [t[4] for t in scored]


# ---------------------------------------------------------------------------
# Rules


@dataclass(frozen=True)
class Rule:
    id: str
    description: str
    scope: str  # 'design-agnostic' | 'design-specific'
    trigger: object = None  # callable (ast, design) -> bool
    diagnostic_code: str | None = None

    def apply(self, ast, design) -> list[svapars.LintDiagnostic]:
        if self.trigger is None or not self.trigger(ast, design):
            return []
        if self.diagnostic_code == "MissingResetDisable":
            return [svapars._reset_rule(ast, design)]
        return [svapars.LintDiagnostic(self.diagnostic_code or "SemanticMismatch", self.description)]


def _reset_trigger(ast, design) -> bool:
    return ast.disable_expr is None and not ast.post_reset


RESET_DISABLE_RULE = Rule(
    id="reset-disable",
    description=(
        "assertions on designs with a declared reset need a disable iff guard "
        "on the reset condition, unless the property checks post-reset state"
    ),
    scope="design-agnostic",
    trigger=_reset_trigger,
    diagnostic_code="MissingResetDisable",
)

SEEDED_RULES = (RESET_DISABLE_RULE,)

_SEED_INCORRECT_REQ_ACK = (
    "property start_done_within_3_cycles_unless_reset;\n"
    "@(negedge clk) start |-> ##[1:3] done unless reset;\n"
    "endproperty\n"
    "assert property (start_done_within_3_cycles_unless_reset);\n"
)

_SEED_CORRECTED_REQ_ACK = (
    "property req_ack_unless_error;\n"
    "@(posedge clk) req |-> (error or ##[1:2] ack);\n"
    "endproperty\n"
    "assert property (req_ack_unless_error);\n"
)

_SEED_MISSING_DISABLE = (
    "property done_signal_validity;\n"
    "@(posedge clk) (i_start && !enc_done) |=> !o_done;\n"
    "endproperty\n"
    "assert property (done_signal_validity);\n"
)

_SEED_CORRECTED_DISABLE = (
    "property done_signal_validity;\n"
    "@(posedge clk) disable iff (!rst_async_n) (i_start && !enc_done) |=> !o_done;\n"
    "endproperty\n"
    "assert property (done_signal_validity);\n"
)


def seeded_entries() -> list[CacheEntry]:
    """The two seeded learning-cache entries shipped with the repo."""
    return [
        CacheEntry(
            id="seed-001-negedge-window-unless",
            error_signature=normalize_error_signature("unsupported construct: 'unless'"),
            incorrect_snippet=_SEED_INCORRECT_REQ_ACK,
            explanation=(
                "1. Uses negedge clk instead of posedge clk",
                "2. Specifies 3-cycle window ##[1:3] instead of 2-cycle ##[1:2]",
                "3. Misinterprets logic; done unless reset should be ack within "
                "2 cycles unless error",
            ),
            corrected_snippet=_SEED_CORRECTED_REQ_ACK,
            tags=("clock-edge", "delay-window", "semantic"),
            origin="seeded",
            created_at="2026-01-01T00:00:00+00:00",
        ),
        CacheEntry(
            id="seed-002-missing-reset-disable",
            error_signature=normalize_error_signature(
                "missing disable iff; add 'disable iff (!rst_async_n)' to prevent "
                "assertion failures during reset"
            ),
            incorrect_snippet=_SEED_MISSING_DISABLE,
            explanation=(
                "1. Add 'disable iff (!rst_async_n)' to prevent assertion "
                "failures during reset",
            ),
            corrected_snippet=_SEED_CORRECTED_DISABLE,
            tags=("reset-handling",),
            origin="seeded",
            created_at="2026-01-01T00:00:00+00:00",
        ),
    ]


def seeded_cache(path=None) -> LearningCache:
    cache = LearningCache(path)
    if not cache.entries:
        for entry in seeded_entries():
            cache.record(entry)
    return cache


# ---------------------------------------------------------------------------
# Prompt context rendering


def render_prompt_context(spec: SpecGrammar, entries, rules, top_k: int = 3) -> str:
    """Deterministic grounded context: spec keywords, rules, then cache entries."""
    lines = ["Specification in keywords:", render_spec(spec).rstrip("\n")]
    if rules:
        lines.append("")
        lines.append("Rules:")
        for rule in rules:
            lines.append(f"- [{rule.id}] {rule.description}")
    shown = list(entries)[:top_k]
    if shown:
        lines.append("")
        lines.append("Learned corrections:")
        for i, entry in enumerate(shown, start=1):
            lines.append(f"{i}. error: {entry.error_signature}")
            lines.append(f"   incorrect: {_one_line(entry.incorrect_snippet)}")
            for note in entry.explanation:
                lines.append(f"   explanation: {note}")
            lines.append(f"   corrected: {_one_line(entry.corrected_snippet)}")
    return "\n".join(lines) + "\n"


def _one_line(snippet: str) -> str:
    return " ".join(snippet.split())
