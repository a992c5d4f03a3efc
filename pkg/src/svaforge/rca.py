"""Counterexample triage: VCD parsing, evidence windows and root-cause analysis.

``analyze`` runs the fixed analyst pipeline: VCD parse, spec-assertion
analyst, design analyst (cone of influence), then the verification analyst
which re-proves any proposed patch. A round "resolves" iff the verification
analyst confirms the patch (consistency=True); after three unresolved rounds
the caller escalates to HIL.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from . import engine, specgram, svapars
from .domain import DesignModel, Trace, Verdict
from .errors import (
    BoundViolation,
    DepthTooSmall,
    MalformedHeader,
    NonMonotonicTime,
    UnboundName,
    UnknownIdCode,
    UnknownSignal,
)

MAX_RCA_ROUNDS = 3

CLASS_PRECEDENCE = ("BindingDefect", "AssertionDefect", "SpecMisread", "DesignDefect")

_DIAG_TAGS = {
    "ClockEdgeMismatch": "clock-edge",
    "DelayWindowMismatch": "delay-window",
    "SemanticMismatch": "semantic",
    "MissingResetDisable": "reset-handling",
    "UnsupportedConstruct": "semantic",
}


# ---------------------------------------------------------------------------
# VCD parsing


@dataclass(frozen=True)
class VcdSignal:
    code: str
    name: str
    width: int


@dataclass(frozen=True)
class VcdDocument:
    timescale: str
    scope: str
    signals: tuple[VcdSignal, ...]
    changes: tuple  # ((time, code, value), ...) in document order
    end_time: int

    def by_name(self, name: str) -> VcdSignal:
        for s in self.signals:
            if s.name == name:
                return s
        raise UnknownSignal(f"no signal '{name}' in VCD document")


_VAR_RE = re.compile(r"\$var\s+wire\s+(\d+)\s+(\S+)\s+(\S+)\s+\$end")


def parse_vcd(text: str) -> VcdDocument:
    """Extract signal declarations and (time, id, value) change records."""
    if "$enddefinitions" not in text:
        raise MalformedHeader("missing $enddefinitions")
    header, _, body = text.partition("$enddefinitions")
    body = body.split("$end", 1)[1] if body.lstrip().startswith("$end") else body

    timescale = "1ns"
    m = re.search(r"\$timescale\s+(\S+)\s+\$end", header)
    if m:
        timescale = m.group(1)
    scope = ""
    m = re.search(r"\$scope\s+module\s+(\S+)\s+\$end", header)
    if m:
        scope = m.group(1)
    signals = tuple(
        VcdSignal(code, name, int(width)) for width, code, name in _VAR_RE.findall(header)
    )
    if not signals:
        raise MalformedHeader("no $var declarations")
    known = {s.code for s in signals}

    changes = []
    last_change_per_code: dict[str, int] = {}
    time = 0
    end_time = 0
    seen_time = False
    for raw in body.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            new_time = int(line[1:])
            if seen_time and new_time < time:
                raise NonMonotonicTime(f"time #{new_time} after #{time}")
            time = new_time
            end_time = max(end_time, time)
            seen_time = True
            continue
        if line.startswith("b"):
            value_text, _, code = line[1:].partition(" ")
            value = int(value_text, 2)
        else:
            value = int(line[0], 2) if line[0] in "01" else None
            code = line[1:]
            if value is None:
                raise MalformedHeader(f"bad change record {line!r}")
        if code not in known:
            raise UnknownIdCode(f"unknown id code {code!r}")
        if code in last_change_per_code and last_change_per_code[code] >= time and changes:
            raise NonMonotonicTime(f"two changes for {code!r} at time {time}")
        last_change_per_code[code] = time
        changes.append((time, code, value))
    return VcdDocument(timescale, scope, signals, tuple(changes), end_time)


def trace_from_vcd(doc: VcdDocument, design: DesignModel) -> Trace:
    """Rebuild a per-cycle trace by sampling changes (hold-last semantics)."""
    length = doc.end_time
    cols = {s.name: [] for s in doc.signals}
    per_signal = {s.code: s.name for s in doc.signals}
    timeline: dict[str, dict[int, int]] = {s.name: {} for s in doc.signals}
    for time, code, value in doc.changes:
        timeline[per_signal[code]][time] = value
    for name, points in timeline.items():
        cur = 0
        for cycle in range(length):
            cur = points.get(cycle, cur)
            cols[name].append(cur)
    return Trace(design, length, {k: tuple(v) for k, v in cols.items()})


# ---------------------------------------------------------------------------
# Evidence windows


@dataclass(frozen=True)
class EvidenceTable:
    signals: tuple[str, ...]
    t0: int
    t1: int
    values: dict  # signal -> tuple of sampled values, one per cycle in [t0, t1]

    def to_json_obj(self) -> dict:
        return {
            "signals": list(self.signals),
            "t0": self.t0,
            "t1": self.t1,
            "values": {s: list(self.values[s]) for s in self.signals},
        }


def extract_window(doc: VcdDocument, signals, t0: int, t1: int) -> EvidenceTable:
    if t0 > t1:
        raise ValueError("t0 must be <= t1")
    sampled = {}
    for name in signals:
        sig = doc.by_name(name)
        points = {t: v for t, c, v in doc.changes if c == sig.code}
        cur = 0
        row = []
        for cycle in range(t1 + 1):
            cur = points.get(cycle, cur)
            if cycle >= t0:
                row.append(cur)
        sampled[name] = tuple(row)
    return EvidenceTable(tuple(signals), t0, t1, sampled)


# ---------------------------------------------------------------------------
# Cone of influence


def cone_of_influence(design: DesignModel, signals, depth: int) -> list[str]:
    """Transitive fan-in over design expressions, depth-limited."""
    implicated: list[str] = []
    seen: set[str] = set()
    frontier = [s for s in signals if s in design.outputs or s in design.next_state]
    for _ in range(max(depth, 1)):
        nxt = []
        for s in frontier:
            if s in seen:
                continue
            seen.add(s)
            expr = design.outputs.get(s) or design.next_state.get(s)
            if expr is None:
                continue
            implicated.append(engine.insertion_locus(design, s))
            for name in sorted(expr.names()):
                if name not in seen and (name in design.outputs or name in design.next_state):
                    nxt.append(name)
        frontier = nxt
        if not frontier:
            break
    return implicated


# ---------------------------------------------------------------------------
# RCA report and the analyst pipeline


@dataclass(frozen=True)
class RcaReport:
    cex_id: str
    evidence: EvidenceTable
    spec_assert_finding: str  # 'assertion_wrong' | 'assertion_ok'
    spec_assert_rationale: str
    rtl_finding: tuple[str, ...]
    root_cause_class: str
    proposed_patch: str | None
    consistency: bool
    round: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "cex_id": self.cex_id,
                "evidence": self.evidence.to_json_obj(),
                "spec_assert_finding": self.spec_assert_finding,
                "spec_assert_rationale": self.spec_assert_rationale,
                "rtl_finding": list(self.rtl_finding),
                "root_cause_class": self.root_cause_class,
                "proposed_patch": self.proposed_patch,
                "consistency": self.consistency,
                "round": self.round,
            },
            separators=(",", ":"),
            sort_keys=True,
        )


def _classify(diagnostics, spec_diags) -> str | None:
    codes = {d.code for d in diagnostics}
    if "UnknownSignal" in codes:
        return "BindingDefect"
    if codes & {"ClockEdgeMismatch", "DelayWindowMismatch", "SemanticMismatch",
                "UnsupportedConstruct", "MissingResetDisable"}:
        return "AssertionDefect"
    if spec_diags:
        return "SpecMisread"
    return None


def _candidate_patches(ast, diagnostics, design, spec, cache):
    candidates = []
    try:
        fixed = svapars.apply_canonical_rewrites(ast, diagnostics, design=design, spec=spec)
        candidates.append(svapars.render_property(fixed))
    except svapars.UnfixableDiagnostic:
        pass
    if cache is not None and diagnostics:
        tags = tuple(sorted({_DIAG_TAGS[d.code] for d in diagnostics if d.code in _DIAG_TAGS}))
        sig = specgram.normalize_error_signature(diagnostics[0].message)
        for entry in cache.lookup(sig, tags):
            candidates.append(entry.corrected_snippet)
    return candidates


def _patch_proves(patch_text, design, spec, depth) -> bool:
    # The bar here is "removes the violation": parse, bind and re-prove.
    # Style lints are the syntax loop's business, not the verification
    # analyst's, so a patch is not rejected for them.
    try:
        ast = svapars.parse_property(patch_text)
        bp = engine.bind(ast, design)
        verdict = engine.check(bp, max(depth, svapars.horizon(ast)))
    except (svapars.ParseFailure, svapars.UnsupportedConstruct, UnboundName, DepthTooSmall):
        return False
    return verdict.status == "Proven"


def analyze(
    cex: Verdict,
    ast: svapars.PropertyAst,
    spec,
    design: DesignModel,
    round: int,
    cache=None,
    cex_id: str | None = None,
) -> RcaReport:
    """One RCA round over a Failed verdict; see module docstring for the order."""
    if round > MAX_RCA_ROUNDS:
        raise BoundViolation(f"RCA round {round} exceeds the cap of {MAX_RCA_ROUNDS}")
    if cex.status != "Failed" or cex.cex is None:
        raise ValueError("analyze needs a Failed verdict with a counterexample")
    cex_id = cex_id or f"cex-{cex.property_id}"
    if cache is None:
        cache = specgram.seeded_cache()

    # VCD parse: round-trip the counterexample through the wire format so the
    # evidence table is grounded in exactly what the engine emitted.
    doc = parse_vcd(engine.emit_vcd(cex.cex))
    watched = sorted(ast.names() & set(design.signal_names())) or design.signal_names()
    evidence = extract_window(doc, watched, 0, cex.cex.length - 1)

    # Spec-assertion analyst.
    diagnostics = svapars.lint(ast, design, spec=spec)
    spec_diags = specgram.validate_against_design(spec, design) if spec is not None else []
    assertion_wrong = bool(diagnostics)
    rationale = (
        "; ".join(f"{d.code}: {d.message}" for d in diagnostics)
        if diagnostics
        else "assertion is consistent with the specification"
    )

    # Design analyst: only consulted when the assertion checks out.
    rtl_finding: tuple[str, ...] = ()
    if not assertion_wrong:
        window = svapars.max_span(ast.consequent) + (1 if ast.implication == "|=>" else 0)
        conseq_signals = sorted(ast.consequent.names() & set(design.signal_names()))
        rtl_finding = tuple(cone_of_influence(design, conseq_signals, max(window, 1)))

    root_cause = _classify(diagnostics, spec_diags) or "DesignDefect"

    # Verification analyst: a round resolves iff a patch re-proves.
    proposed_patch = None
    consistency = False
    if root_cause in ("AssertionDefect", "BindingDefect"):
        for patch in _candidate_patches(ast, diagnostics, design, spec, cache):
            if _patch_proves(patch, design, spec, cex.depth):
                proposed_patch = patch
                consistency = True
                break
        if proposed_patch is None:
            # keep the invariant: these classes always carry a patch proposal
            candidates = _candidate_patches(ast, diagnostics, design, spec, cache)
            proposed_patch = candidates[0] if candidates else svapars.render_property(ast)

    return RcaReport(
        cex_id=cex_id,
        evidence=evidence,
        spec_assert_finding="assertion_wrong" if assertion_wrong else "assertion_ok",
        spec_assert_rationale=rationale,
        rtl_finding=rtl_finding,
        root_cause_class=root_cause,
        proposed_patch=proposed_patch,
        consistency=consistency,
        round=round,
    )
