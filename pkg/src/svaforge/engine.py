"""Bounded exhaustive trace engine: proof, falsification, vacuity, VCD, coverage.

``check`` enumerates every free-input sequence up to the requested depth (the
reset port is driven active at cycle 0 only) and evaluates the property with a
compiled chain monitor. ``evaluate_on_trace`` is the independent naive
evaluator used as the test oracle and by RCA.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .domain import DesignModel, Trace, Verdict, render_expr, simulate
from .errors import DepthTooSmall, UnboundName
from .svapars import (
    PropertyAst,
    SBool,
    SConcat,
    SOr,
    eval_bool,
    horizon,
    max_span,
)

DEFAULT_TRACE_BUDGET = 1 << 17


@dataclass(frozen=True)
class BoundProperty:
    ast: PropertyAst
    design: DesignModel
    binding: dict  # AST name -> design signal


def bind(ast: PropertyAst, design: DesignModel) -> BoundProperty:
    declared = set(design.signal_names())
    binding = {}
    for name in sorted(ast.names()):
        if name not in declared:
            raise UnboundName(f"property name '{name}' is not a design signal")
        binding[name] = name
    return BoundProperty(ast, design, binding)


# ---------------------------------------------------------------------------
# Chain monitor (the engine-side evaluator)
#
# A sequence compiles to a disjunction of linear chains; each chain is a list
# of (lo, hi, atom) hops relative to the previous atom's cycle.


def compile_chains(node):
    if isinstance(node, SBool):
        return [((0, 0, node.expr),)]
    if isinstance(node, SOr):
        out = []
        for sub in node.items:
            out += compile_chains(sub)
        return out
    chains = [()]
    for lo, hi, sub in node.items:
        grown = []
        for subchain in compile_chains(sub):
            first = (subchain[0][0] + lo, subchain[0][1] + hi, subchain[0][2])
            shifted = (first,) + subchain[1:]
            for prefix in chains:
                grown.append(prefix + shifted)
        chains = grown
    return chains


def _chain_ends(chain, trace: Trace, start: int):
    """End cycles of chain matches beginning at `start`, plus overflow flag."""
    frontier = {start}
    overflow = False
    for lo, hi, atom in chain:
        nxt = set()
        for f in frontier:
            for d in range(lo, hi + 1):
                p = f + d
                if p >= trace.length:
                    overflow = True
                elif eval_bool(atom, trace, p):
                    nxt.add(p)
        frontier = nxt
        if not frontier:
            break
    return frontier, overflow


class _Monitor:
    def __init__(self, ast: PropertyAst):
        self.ast = ast
        self.ante_chains = compile_chains(ast.antecedent)
        self.conseq_chains = compile_chains(ast.consequent)
        self.impl_gap = 1 if ast.implication == "|=>" else 0
        self.conseq_span = max_span(ast.consequent)

    def _ante_ends(self, trace, c):
        ends = set()
        for chain in self.ante_chains:
            # Antecedent offsets are relative to c - the leading hop already
            # carries the start delay, so shift the first hop window down by
            # nothing: chains start at c.
            got, _ = _chain_ends(chain, trace, c)
            ends |= got
        return ends

    def _conseq_ok(self, trace, s):
        any_overflow = False
        for chain in self.conseq_chains:
            ends, overflow = _chain_ends(chain, trace, s)
            if ends:
                return True, False
            any_overflow = any_overflow or overflow
        return False, any_overflow

    def scan(self, trace: Trace):
        """Returns (violated_at or None, antecedent_hits)."""
        hits = 0
        violated_at = None
        disable = self.ast.disable_expr
        for c in range(trace.length):
            ends = self._ante_ends(trace, c)
            if not ends:
                continue
            hits += len(ends)
            for e in sorted(ends):
                s = e + self.impl_gap
                ok, undetermined = self._conseq_ok(trace, s)
                if ok or undetermined:
                    continue
                # every consequent opportunity fell inside the trace, so the
                # violation is decided no later than the final cycle
                decided = min(s + self.conseq_span, trace.length - 1)
                if disable is not None and any(
                    eval_bool(disable, trace, t) for t in range(c, decided + 1)
                ):
                    continue
                if violated_at is None or decided < violated_at:
                    violated_at = decided
        return violated_at, hits


# ---------------------------------------------------------------------------
# Naive trace evaluator (the independent oracle)


def _matches(node, trace: Trace, start: int):
    """Recursive sequence-match semantics. Returns (end cycles, overflow)."""
    if isinstance(node, SBool):
        if start >= trace.length:
            return set(), True
        if eval_bool(node.expr, trace, start):
            return {start}, False
        return set(), False
    if isinstance(node, SOr):
        ends, overflow = set(), False
        for sub in node.items:
            e, o = _matches(sub, trace, start)
            ends |= e
            overflow = overflow or o
        return ends, overflow
    prev = {start}
    overflow = False
    for lo, hi, sub in node.items:
        nxt = set()
        for e in prev:
            for d in range(lo, hi + 1):
                got, o = _matches(sub, trace, e + d)
                nxt |= got
                overflow = overflow or o
        prev = nxt
        if not prev:
            break
    return prev, overflow


@dataclass(frozen=True)
class TraceEval:
    holds: bool
    violated_at: int | None
    antecedent_hits: int


def evaluate_on_trace(ast: PropertyAst, trace: Trace) -> TraceEval:
    """Pure per-cycle semantics of the SVA subset over one concrete trace."""
    gap = 1 if ast.implication == "|=>" else 0
    span = max_span(ast.consequent)
    hits = 0
    violated_at = None
    for c in range(trace.length):
        ends, _ = _matches(ast.antecedent, trace, c)
        if not ends:
            continue
        hits += len(ends)
        for e in sorted(ends):
            s = e + gap
            got, overflow = _matches(ast.consequent, trace, s)
            if got or overflow:
                continue
            decided = min(s + span, trace.length - 1)
            if ast.disable_expr is not None and any(
                eval_bool(ast.disable_expr, trace, t) for t in range(c, decided + 1)
            ):
                continue
            if violated_at is None or decided < violated_at:
                violated_at = decided
    return TraceEval(violated_at is None, violated_at, hits)


# ---------------------------------------------------------------------------
# Bounded check


def _truncate(trace: Trace, length: int) -> Trace:
    return Trace(
        trace.design, length, {k: v[:length] for k, v in trace.values.items()}
    )


def check(
    p: BoundProperty,
    depth: int,
    budget: int = DEFAULT_TRACE_BUDGET,
    property_id: str | None = None,
) -> Verdict:
    """Exhaustive bounded proof over all free-input sequences from reset."""
    design = p.design
    pid = property_id or (p.ast.name or "property")
    if depth < horizon(p.ast):
        raise DepthTooSmall(
            f"depth {depth} is below the property horizon {horizon(p.ast)}"
        )
    free = design.free_inputs()
    combos = list(
        itertools.product(*[range(1 << port.width) for port in free])
    )  # ascending, port-declaration order => lexicographic enumeration
    total = len(combos) ** depth if combos else 1
    if total > budget:
        return Verdict(pid, "Inconclusive", depth, antecedent_ever_true=False)

    monitor = _Monitor(p.ast)
    ever_hit = False
    for seq in itertools.product(combos, repeat=depth):
        inputs = [
            {port.name: combo[i] for i, port in enumerate(free)} for combo in seq
        ]
        trace = simulate(design, inputs)
        violated_at, hits = monitor.scan(trace)
        ever_hit = ever_hit or hits > 0
        if violated_at is not None:
            cex = _truncate(trace, violated_at + 1)
            return Verdict(
                pid,
                "Failed",
                depth,
                antecedent_ever_true=True,
                cex=cex,
                violated_at=violated_at,
            )
    if not ever_hit:
        return Verdict(pid, "Vacuous", depth, antecedent_ever_true=False)
    return Verdict(pid, "Proven", depth, antecedent_ever_true=True)


# ---------------------------------------------------------------------------
# VCD emission


def vcd_id(index: int) -> str:
    return chr(33 + index)


def emit_vcd(trace: Trace) -> str:
    """IEEE-1364-style dump; id codes assigned in declaration order from '!'."""
    design = trace.design
    names = design.signal_names()
    lines = [
        "$timescale 1ns $end",
        f"$scope module {design.name} $end",
    ]
    ids = {}
    for i, name in enumerate(names):
        code = vcd_id(i)
        ids[name] = code
        lines.append(f"$var wire {design.width_of(name)} {code} {name} $end")
    lines.append("$upscope $end")
    lines.append("$enddefinitions $end")
    last: dict[str, int] = {}
    for cycle in range(trace.length):
        changes = []
        for name in names:
            value = trace.at(name, cycle)
            if cycle == 0 or last[name] != value:
                changes.append(_change_record(value, design.width_of(name), ids[name]))
            last[name] = value
        if changes:
            lines.append(f"#{cycle}")
            lines.extend(changes)
    lines.append(f"#{trace.length}")
    return "\n".join(lines) + "\n"


def _change_record(value: int, width: int, code: str) -> str:
    if width == 1:
        return f"{value}{code}"
    return f"b{value:b} {code}"


# ---------------------------------------------------------------------------
# Coverage


@dataclass(frozen=True)
class CoverageReport:
    design: str
    covered_signals: frozenset
    total_signals: int
    percent: float  # truncated to 2 decimals
    holes: tuple  # ((signal, insertion locus), ...)

    def to_json_obj(self) -> dict:
        return {
            "design": self.design,
            "covered": sorted(self.covered_signals),
            "total": self.total_signals,
            "percent": self.percent,
            "holes": [{"signal": s, "locus": l} for s, l in self.holes],
        }


def truncate_pct(numerator: int, denominator: int) -> float:
    """100 * numerator / denominator truncated (not rounded) to 2 decimals."""
    if denominator == 0:
        return 0.0
    return (numerator * 10000 // denominator) / 100


def insertion_locus(design: DesignModel, signal: str) -> str:
    """The design expression driving a signal (coverage-hole insertion point)."""
    if signal in design.next_state:
        return f"{signal} = {render_expr(design.next_state[signal])}"
    if signal in design.outputs:
        return f"{signal} = {render_expr(design.outputs[signal])}"
    return f"input port {signal}"


def compute_coverage(design: DesignModel, results) -> CoverageReport:
    """`results` is an iterable of (BoundProperty, Verdict) pairs."""
    covered: set[str] = set()
    for prop, verdict in results:
        if prop.design.name != design.name:
            raise ValueError("verdict does not belong to this design")
        if verdict.status == "Proven" and verdict.antecedent_ever_true:
            covered |= set(prop.binding.values())
    all_signals = design.signal_names()
    holes = tuple(
        (s, insertion_locus(design, s)) for s in all_signals if s not in covered
    )
    return CoverageReport(
        design=design.name,
        covered_signals=frozenset(covered),
        total_signals=len(all_signals),
        percent=truncate_pct(len(covered), len(all_signals)),
        holes=holes,
    )
