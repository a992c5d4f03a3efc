import itertools

import pytest

from svaforge import domain, engine, svapars
from svaforge.errors import DepthTooSmall, UnboundName

from conftest import read_golden


def _prop(text, design):
    return engine.bind(svapars.parse_property(text), design)


# ---------------------------------------------------------------------------
# Binding


def test_bind_unknown_name(handshake):
    with pytest.raises(UnboundName):
        _prop("@(posedge clk) reqq |-> ack;", handshake)


# ---------------------------------------------------------------------------
# Verdicts


def test_corrected_property_proven(handshake):
    bp = _prop(
        "@(posedge clk) disable iff (!rst_n) req |-> (error or ##[1:2] ack);",
        handshake,
    )
    v = engine.check(bp, 8, property_id="p")
    assert v.status == "Proven"
    assert v.cex is None


def test_failed_with_lex_min_cex(handshake_slow_ack):
    bp = _prop(
        "@(posedge clk) disable iff (!rst_n) req |-> (error or ##[1:2] ack);",
        handshake_slow_ack,
    )
    v = engine.check(bp, 8, property_id="p")
    assert v.status == "Failed"
    assert v.violated_at == 7
    # lexicographically smallest: all-zero inputs until the latest possible
    # single req pulse that still gets decided within the bound
    assert v.cex.values["req"] == (0, 0, 0, 0, 0, 1, 0, 0)
    assert v.cex.values["error"] == (0,) * 8
    # independent oracle agrees
    ev = engine.evaluate_on_trace(bp.ast, v.cex)
    assert not ev.holds and ev.violated_at == 7


def test_vacuous(handshake):
    bp = _prop("@(posedge clk) disable iff (!rst_n) (req && !req) |-> ack;", handshake)
    v = engine.check(bp, 6, property_id="p")
    assert v.status == "Vacuous"
    assert not v.antecedent_ever_true


def test_inconclusive_on_budget(handshake):
    bp = _prop("@(posedge clk) disable iff (!rst_n) req |-> ##[1:2] ack;", handshake)
    v = engine.check(bp, 6, budget=16, property_id="p")
    assert v.status == "Inconclusive"


def test_depth_too_small(handshake):
    bp = _prop("@(posedge clk) disable iff (!rst_n) req |-> ##[1:2] ack;", handshake)
    with pytest.raises(DepthTooSmall):
        engine.check(bp, 1, property_id="p")


def test_overlapped_vs_non_overlapped(handshake):
    # |=> shifts the obligation one cycle: ack (= registered pend) satisfies it
    bp = _prop("@(posedge clk) disable iff (!rst_n) (req && !error) |=> ack;", handshake)
    assert engine.check(bp, 7, property_id="p").status == "Proven"
    bp2 = _prop("@(posedge clk) disable iff (!rst_n) (req && !error) |-> ack;", handshake)
    assert engine.check(bp2, 7, property_id="p").status == "Failed"


def test_disable_iff_suppresses_obligation(encoder):
    # without the guard, the cycle-0 reset phase would violate this property
    guarded = _prop(
        "@(posedge clk) disable iff (!rst_async_n) (i_start && !enc_done) |=> !o_done;",
        encoder,
    )
    assert engine.check(guarded, 8, property_id="p").status == "Proven"


# ---------------------------------------------------------------------------
# check() vs the naive recursive oracle on exhaustive traces


def _all_traces(design, depth):
    free = [p.name for p in design.free_inputs()]
    for combo in itertools.product([0, 1], repeat=len(free) * depth):
        inputs = [
            {name: combo[c * len(free) + i] for i, name in enumerate(free)}
            for c in range(depth)
        ]
        yield domain.simulate(design, inputs)


@pytest.mark.parametrize(
    "text",
    [
        "@(posedge clk) disable iff (!rst_n) req |-> (error or ##[1:2] ack);",
        "@(posedge clk) req |=> err_q == error;",
        "@(posedge clk) $rose(req) |-> ##[1:3] (ack || error);",
        "@(negedge clk) (req && error) |-> !pend;",
    ],
)
def test_monitor_matches_oracle_exhaustively(handshake, text):
    bp = _prop(text, handshake)
    depth = 4
    verdict = engine.check(bp, depth, property_id="p")
    holds_all = all(engine.evaluate_on_trace(bp.ast, t).holds for t in _all_traces(handshake, depth))
    assert (verdict.status != "Failed") == holds_all


# ---------------------------------------------------------------------------
# VCD


def test_vcd_id_codes():
    assert engine.vcd_id(0) == "!"
    assert engine.vcd_id(1) == '"'


def test_emit_vcd_golden(handshake_slow_ack):
    bp = _prop(
        "@(posedge clk) disable iff (!rst_n) req |-> (error or ##[1:2] ack);",
        handshake_slow_ack,
    )
    v = engine.check(bp, 8, property_id="p0")
    assert engine.emit_vcd(v.cex) == read_golden("handshake_cex.vcd")


def test_emit_vcd_multibit():
    text = (
        "design ctr\nports:\n  clk input 1\n  rst input 1\nstate:\n  c 3 0\n"
        "clock: clk\nreset: rst high sync\nnext:\n  c = c + 1\nout:\n"
    )
    design = domain.load_design(text)
    trace = domain.simulate(design, [{}] * 4)
    vcd = engine.emit_vcd(trace)
    assert "$var wire 3 # c $end" in vcd
    assert "b10 #" in vcd  # value 2 as binary change record


# ---------------------------------------------------------------------------
# Coverage


def test_truncate_pct_table_cells():
    assert engine.truncate_pct(25, 28) == 89.28
    assert engine.truncate_pct(49, 58) == 84.48
    assert engine.truncate_pct(10, 16) == 62.50
    assert engine.truncate_pct(0, 0) == 0.0


def test_insertion_locus(handshake):
    assert engine.insertion_locus(handshake, "pend") == "pend = req & !error"
    assert engine.insertion_locus(handshake, "ack") == "ack = pend"
    assert engine.insertion_locus(handshake, "req") == "input port req"


def test_compute_coverage(handshake):
    bp = _prop(
        "@(posedge clk) disable iff (!rst_n) req |-> (error or ##[1:2] ack);",
        handshake,
    )
    v = engine.check(bp, 8, property_id="p")
    report = engine.compute_coverage(handshake, [(bp, v)])
    assert report.covered_signals == frozenset({"clk", "rst_n", "req", "error", "ack"})
    assert report.percent == engine.truncate_pct(5, 7)
    assert [s for s, _ in report.holes] == ["pend", "err_q"]


def test_vacuous_does_not_cover(handshake):
    bp = _prop("@(posedge clk) disable iff (!rst_n) (req && !req) |-> ack;", handshake)
    v = engine.check(bp, 6, property_id="p")
    report = engine.compute_coverage(handshake, [(bp, v)])
    assert report.covered_signals == frozenset()
