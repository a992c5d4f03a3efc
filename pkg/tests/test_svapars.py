import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from svaforge import domain, specgram, svapars
from svaforge.errors import ParseFailure, UnfixableDiagnostic, UnsupportedConstruct

from conftest import read_golden

# ---------------------------------------------------------------------------
# Parsing basics


def test_parse_bare_property():
    ast = svapars.parse_property("@(posedge clk) req |-> ##[1:2] ack;")
    assert ast.edge == "posedge" and ast.clock == "clk"
    assert ast.implication == "|->"
    assert ast.names() == {"clk", "req", "ack"}


def test_parse_property_block_with_assert():
    ast = svapars.parse_property(specgram._SEED_CORRECTED_REQ_ACK)
    assert ast.name == "req_ack_unless_error"
    assert isinstance(ast.consequent, svapars.SOr)


def test_parse_disable_iff():
    ast = svapars.parse_property(
        "@(posedge clk) disable iff (!rst_n) req |-> ##[1:2] ack;"
    )
    assert ast.disable_expr is not None
    assert ast.disable_expr.names() == {"rst_n"}


def test_action_block_discarded():
    ast = svapars.parse_property(
        'property p; @(posedge clk) a |-> b; endproperty\n'
        'assert property (p) else $error("late");\n'
    )
    assert "late" in ast.action_note


@pytest.mark.parametrize("kw", ["unless", "until", "throughout"])
def test_unsupported_keywords(kw):
    with pytest.raises(UnsupportedConstruct) as err:
        svapars.parse_property(f"@(posedge clk) a |-> b {kw} c;")
    assert err.value.token == kw


def test_unsupported_system_task():
    with pytest.raises(UnsupportedConstruct):
        svapars.parse_property("@(posedge clk) a |-> $onehot(b);")


def test_window_order_enforced():
    with pytest.raises(ParseFailure):
        svapars.parse_property("@(posedge clk) a |-> ##[3:1] b;")


def test_empty_text_is_parse_failure():
    with pytest.raises(ParseFailure):
        svapars.parse_property(";")


# ---------------------------------------------------------------------------
# Render round-trip (random grammar-driven properties)

_names = st.sampled_from(["a", "b", "c", "req", "ack", "err"])


@st.composite
def _bool_text(draw, depth=2):
    choices = ["var", "const", "call"]
    if depth > 0:
        choices += ["not", "and", "or", "eq", "paren"]
    kind = draw(st.sampled_from(choices))
    if kind == "var":
        return draw(_names)
    if kind == "const":
        return str(draw(st.integers(0, 1)))
    if kind == "call":
        fn = draw(st.sampled_from(["$rose", "$fell", "$stable", "$past"]))
        return f"{fn}({draw(_names)})"
    if kind == "not":
        return "!" + draw(_bool_text(depth - 1))
    if kind == "paren":
        return "(" + draw(_bool_text(depth - 1)) + ")"
    op = {"and": "&&", "or": "||", "eq": "=="}[kind]
    return draw(_bool_text(depth - 1)) + f" {op} " + draw(_bool_text(depth - 1))


@st.composite
def _seq_text(draw, depth=1):
    parts = [draw(_bool_text(1))]
    for _ in range(draw(st.integers(0, 2))):
        lo = draw(st.integers(1, 3))
        hi = lo + draw(st.integers(0, 2))
        delay = f"##{lo}" if hi == lo and draw(st.booleans()) else f"##[{lo}:{hi}]"
        parts.append(f"{delay} {draw(_bool_text(1))}")
    seq = " ".join(parts)
    if depth > 0 and draw(st.booleans()):
        seq = f"({seq} or {draw(_seq_text(depth - 1))})"
    return seq


@st.composite
def _property_text(draw):
    edge = draw(st.sampled_from(["posedge", "negedge"]))
    impl = draw(st.sampled_from(["|->", "|=>"]))
    disable = draw(st.sampled_from(["", "disable iff (!rst) "]))
    ante = draw(_bool_text(1))
    conseq = draw(_seq_text(1))
    return f"@({edge} clk) {disable}{ante} {impl} {conseq};"


@settings(max_examples=150, deadline=None)
@given(_property_text())
def test_parse_render_normal_form(text):
    ast = svapars.parse_property(text)
    rendered = svapars.render_property(ast)
    again = svapars.parse_property(rendered)
    # rendering is a normal form: stable under a second parse/render pass
    assert svapars.render_property(again) == rendered
    assert again.edge == ast.edge
    assert again.implication == ast.implication
    assert again.names() == ast.names()
    assert svapars.horizon(again) == svapars.horizon(ast)


def test_render_matches_golden_bytes():
    ast = svapars.parse_property(read_golden("corrected_req_ack.sva"))
    assert svapars.render_property(ast) == read_golden("corrected_req_ack.sva")
    ast2 = svapars.parse_property(read_golden("corrected_disable.sva"))
    assert svapars.render_property(ast2) == read_golden("corrected_disable.sva")


# ---------------------------------------------------------------------------
# Lint


def test_lint_clock_edge_and_window(handshake, handshake_spec):
    ast = svapars.parse_property(
        "@(negedge clk) disable iff (!rst_n) req |-> (error or ##[1:3] ack);"
    )
    codes = [d.code for d in svapars.lint(ast, handshake, spec=handshake_spec)]
    assert codes == ["ClockEdgeMismatch", "DelayWindowMismatch"]


def test_lint_unknown_signal(handshake):
    ast = svapars.parse_property("@(posedge clk) disable iff (!rst_n) reqq |-> ack;")
    diags = svapars.lint(ast, handshake)
    assert [d.code for d in diags] == ["UnknownSignal"]
    assert "reqq" in diags[0].message


def test_lint_missing_reset_disable(handshake):
    ast = svapars.parse_property("@(posedge clk) req |-> ##[1:2] ack;")
    diags = svapars.lint(ast, handshake)
    assert [d.code for d in diags] == ["MissingResetDisable"]
    assert diags[0].suggested_rewrite is not None


def test_post_reset_tag_suppresses_reset_rule(handshake):
    ast = svapars.parse_property(
        "// post-reset behaviour only\n@(posedge clk) req |-> ##[1:2] ack;"
    )
    assert svapars.lint(ast, handshake) == []


def test_lint_clean_on_corrected_golden(handshake, handshake_spec):
    text = read_golden("corrected_req_ack.sva").replace(
        "@(posedge clk)", "@(posedge clk) disable iff (!rst_n)"
    )
    assert svapars.validate(text, handshake, spec=handshake_spec).is_ok


# ---------------------------------------------------------------------------
# Fixer


def test_rewrite_adds_disable(handshake):
    ast = svapars.parse_property("@(posedge clk) req |-> ##[1:2] ack;")
    diags = svapars.lint(ast, handshake)
    fixed = svapars.apply_canonical_rewrites(ast, diags, design=handshake)
    assert fixed.disable_expr is not None
    assert svapars.lint(fixed, handshake) == []


def test_rewrite_fixes_edge_and_window(handshake, handshake_spec):
    ast = svapars.parse_property(
        "@(negedge clk) disable iff (!rst_n) req |-> (error or ##[1:3] ack);"
    )
    diags = svapars.lint(ast, handshake, spec=handshake_spec)
    fixed = svapars.apply_canonical_rewrites(
        ast, diags, design=handshake, spec=handshake_spec
    )
    assert fixed.edge == "posedge"
    assert svapars.lint(fixed, handshake, spec=handshake_spec) == []


def test_semantic_mismatch_is_unfixable(handshake, handshake_spec):
    ast, diags = svapars.diagnose_property_text(
        specgram._SEED_INCORRECT_REQ_ACK, handshake, spec=handshake_spec
    )
    assert any(d.code == "SemanticMismatch" for d in diags)
    with pytest.raises(UnfixableDiagnostic):
        svapars.apply_canonical_rewrites(ast, diags, design=handshake, spec=handshake_spec)


@settings(max_examples=60, deadline=None)
@given(text=_property_text())
def test_fixer_soundness_reset_rule(text):
    """Whenever the reset rewrite applies, the fixed property lints clean of it."""
    from svaforge.domain import load_design

    from conftest import read_fixture

    handshake = load_design(read_fixture("handshake.dsn"))
    try:
        ast = svapars.parse_property(text)
    except (ParseFailure, UnsupportedConstruct):
        return
    diags = [d for d in svapars.lint(ast, handshake) if d.code == "MissingResetDisable"]
    if not diags:
        return
    fixed = svapars.apply_canonical_rewrites(ast, diags, design=handshake)
    assert all(d.code != "MissingResetDisable" for d in svapars.lint(fixed, handshake))


# ---------------------------------------------------------------------------
# Recovery + eval_bool


def test_diagnose_recovers_from_unless(handshake, handshake_spec):
    ast, diags = svapars.diagnose_property_text(
        specgram._SEED_INCORRECT_REQ_ACK, handshake, spec=handshake_spec
    )
    assert ast is not None
    assert [d.code for d in diags] == [
        "ClockEdgeMismatch",
        "DelayWindowMismatch",
        "SemanticMismatch",
    ]


def test_eval_bool_builtins(handshake):
    trace = domain.simulate(
        handshake,
        [{"req": 0, "error": 0}, {"req": 1, "error": 0}, {"req": 1, "error": 0},
         {"req": 0, "error": 0}],
    )
    rose = svapars.parse_property("@(posedge clk) $rose(req) |-> req;").antecedent.expr
    fell = svapars.parse_property("@(posedge clk) $fell(req) |-> req;").antecedent.expr
    stable = svapars.parse_property("@(posedge clk) $stable(req) |-> req;").antecedent.expr
    past = svapars.parse_property("@(posedge clk) $past(req) |-> req;").antecedent.expr
    assert [svapars.eval_bool(rose, trace, c) for c in range(4)] == [0, 1, 0, 0]
    assert [svapars.eval_bool(fell, trace, c) for c in range(4)] == [0, 0, 0, 1]
    assert [svapars.eval_bool(stable, trace, c) for c in range(4)] == [1, 0, 1, 0]
    assert [svapars.eval_bool(past, trace, c) for c in range(4)] == [0, 0, 1, 1]
