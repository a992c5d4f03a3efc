import json

import pytest
from fastapi.testclient import TestClient

from svaforge import domain, hilserve, orchestr, specgram
from svaforge.errors import (
    IllegalTransition,
    IncompleteRun,
    InvalidCorrection,
    UnknownItem,
)
from svaforge.hilserve import (
    DatasetRecord,
    HilItem,
    HilQueue,
    KpiRow,
    ServiceState,
    bench_report,
    compute_kpis,
    create_app,
    synthesize_ledger,
)
from svaforge.orchestr import RunConfig, ScriptedBackend

from conftest import fixture_path, read_fixture

CORRECTED = (
    "@(posedge clk) disable iff (!rst_n) req |-> (error or ##[1:2] ack);"
)


def _item(item_id="hil-1", kind="UnfixableProperty", text="@(negedge clk) req |-> ack;",
          diags=()):
    return HilItem(
        item_id=item_id,
        run_id="run-001",
        kind=kind,
        payload={
            "text": text,
            "diagnostics": [dict(d) for d in diags],
            "reason": "fix attempt cap reached",
        },
    )


# ---------------------------------------------------------------------------
# Queue lifecycle


def test_enqueue_rejects_unknown_kind():
    with pytest.raises(ValueError):
        HilQueue().enqueue(_item(kind="CoffeeBreak"))


def test_pending_sorted_and_resolution_removes():
    q = HilQueue()
    q.enqueue(_item("hil-2"))
    q.enqueue(_item("hil-1"))
    assert [i.item_id for i in q.pending()] == ["hil-1", "hil-2"]
    q.resolve("hil-1", "accepted")
    assert [i.item_id for i in q.pending()] == ["hil-2"]


def test_resolve_unknown_item():
    with pytest.raises(UnknownItem):
        HilQueue().resolve("ghost", "accepted")


def test_double_resolve_is_illegal():
    q = HilQueue()
    q.enqueue(_item())
    q.resolve("hil-1", "accepted")
    with pytest.raises(IllegalTransition):
        q.resolve("hil-1", "declined")
    with pytest.raises(IllegalTransition):
        q.enqueue(_item())  # re-enqueueing a resolved id is also barred


def test_bad_decision():
    q = HilQueue()
    q.enqueue(_item())
    with pytest.raises(ValueError):
        q.resolve("hil-1", "maybe")


def test_correction_required_iff_corrected():
    q = HilQueue()
    q.enqueue(_item("a"))
    q.enqueue(_item("b"))
    with pytest.raises(InvalidCorrection):
        q.resolve("a", "corrected")  # missing correction
    with pytest.raises(InvalidCorrection):
        q.resolve("b", "accepted", correction=CORRECTED)  # spurious correction


def test_correction_must_parse():
    q = HilQueue()
    q.enqueue(_item())
    with pytest.raises(InvalidCorrection):
        q.resolve("hil-1", "corrected", correction="this is not a property")


def test_correction_validated_against_design(handshake):
    q = HilQueue()
    q.enqueue(_item())
    with pytest.raises(InvalidCorrection):
        q.resolve(
            "hil-1",
            "corrected",
            correction="@(posedge clk) disable iff (!rst_n) reqq |-> ack;",
            design=handshake,
        )


# ---------------------------------------------------------------------------
# Resolution patterns


@pytest.mark.parametrize(
    "original,correction,want",
    [
        ("@(posedge clk) req |-> ack;", CORRECTED, "reset-disable-added"),
        ("@(negedge clk) disable iff (!rst_n) req |-> ack;", CORRECTED,
         "clock-edge-fixed"),
        ("@(posedge clk) disable iff (!rst_n) req |-> ##[1:3] ack;",
         "@(posedge clk) disable iff (!rst_n) req |-> ##[1:2] ack;", "window-fixed"),
        ("@(posedge clk) disable iff (!rst_n) ack |-> req;",
         "@(posedge clk) disable iff (!rst_n) req |-> ack;", "rewrite-manual"),
    ],
)
def test_pattern_inference(original, correction, want):
    q = HilQueue()
    q.enqueue(_item(text=original))
    _, record = q.resolve("hil-1", "corrected", correction=correction)
    assert record.resolution_pattern == want


def test_pattern_for_non_corrections():
    q = HilQueue()
    q.enqueue(_item("a"))
    q.enqueue(_item("b"))
    assert q.resolve("a", "declined")[1].resolution_pattern == "declined"
    assert q.resolve("b", "accepted")[1].resolution_pattern == "manual"


# ---------------------------------------------------------------------------
# Dataset capture


def test_dataset_record_round_trip(tmp_path):
    path = tmp_path / "dataset.jsonl"
    q = HilQueue(dataset_path=path)
    q.enqueue(_item(diags=[{"code": "ClockEdgeMismatch",
                            "message": "uses negedge clk instead of posedge clk"}]))
    _, record = q.resolve("hil-1", "corrected", correction=CORRECTED,
                          now="2026-03-01T00:00:00+00:00")
    assert record.error_signatures == ("uses negedge clk instead of posedge clk",)
    reloaded = HilQueue(dataset_path=path)
    assert reloaded.records == [record]
    assert DatasetRecord.from_json(record.to_json()) == record


def test_corrected_item_feeds_learning_cache(tmp_path):
    cache = specgram.seeded_cache(tmp_path / "cache.jsonl")
    q = HilQueue(cache=cache)
    q.enqueue(_item(diags=[{"code": "UnsupportedConstruct",
                            "message": "unsupported construct: 'until' at line 2"}]))
    q.resolve("hil-1", "corrected", correction=CORRECTED)
    hits = cache.lookup("unsupported construct: 'until'")
    assert hits and hits[0].id == "hil-run-001-hil-1"
    assert hits[0].origin == "hil"
    assert hits[0].corrected_snippet == CORRECTED


def test_declined_item_does_not_feed_cache(tmp_path):
    cache = specgram.LearningCache(tmp_path / "cache.jsonl")
    q = HilQueue(cache=cache)
    q.enqueue(_item())
    q.resolve("hil-1", "declined")
    assert cache.entries == []


# ---------------------------------------------------------------------------
# KPI recomputation


@pytest.fixture(scope="module")
def scripted_run():
    design = domain.load_design(read_fixture("handshake.dsn"))
    backend = ScriptedBackend.from_file(fixture_path("handshake_scenario.json"))
    cfg = RunConfig(proof_depth=8, hil_mode="interactive")
    return orchestr.run(design, read_fixture("handshake.rb"), cfg, backend)


def test_kpis_match_run_artifacts(scripted_run):
    ledger, artifacts = scripted_run
    row = compute_kpis(ledger, model_label="scripted", pass_index=1)
    assert row.design == "handshake"
    assert row.n_assertions == artifacts.kpi["n_assertions"]
    assert row.fix_attempts == artifacts.kpi["fix_attempts"]
    assert row.first_generation is False
    assert row.pct_proven == 100.0
    assert row.pct_coverage == 100.0


def test_incomplete_run_raises():
    ledger = domain.RunLedger("r", "handshake")
    domain.append_event(ledger, domain.Event(0, "SpecParsed", {"design": "handshake"}))
    with pytest.raises(IncompleteRun):
        compute_kpis(ledger)


def test_truncation_vs_rounding():
    ledger = synthesize_ledger("bus", 28, 25)
    assert compute_kpis(ledger).pct_proven == 89.28
    assert compute_kpis(ledger, rounding=True).pct_proven == 89.29
    assert compute_kpis(synthesize_ledger("bus", 58, 49)).pct_proven == 84.48
    assert compute_kpis(synthesize_ledger("bus", 16, 10)).pct_proven == 62.50


# ---------------------------------------------------------------------------
# Benchmark tables


def _row(design="fifo", model="scripted", k=1, proven=89.28, cov=62.50):
    return KpiRow(design, model, k, 10, False, 2, proven, cov)


def test_bench_rejects_empty():
    with pytest.raises(ValueError):
        bench_report([])


def test_bench_pass_grouping():
    rows = [_row(k=1, proven=62.50), _row(k=2, proven=89.28)]
    out = bench_report(rows, grouping="pass")
    assert "Pass@1" in out["table"] and "Pass@2" in out["table"]
    assert "62.50" in out["table"] and "89.28" in out["table"]
    assert out["csv"].splitlines()[0] == ",".join(hilserve.KPI_FIELDS)
    assert len(out["csv"].splitlines()) == 3


def test_bench_hil_grouping_delta():
    rows = [_row(model="scripted", cov=62.50), _row(model="scripted+hil", cov=84.48)]
    table = bench_report(rows, grouping="hil")["table"]
    assert "+21.98" in table


def test_bench_iteration_grouping():
    rows = [_row(k=1, cov=62.50), _row(k=2, cov=84.48), _row(k=3, cov=100.0)]
    table = bench_report(rows, grouping="iteration")["table"]
    assert "iter 3" in table and "assertions" in table and "100.00" in table


def test_bench_aggregate():
    rows = [_row(proven=80.0), _row(k=2, proven=90.0)]
    table = bench_report(rows, grouping="")["table"]
    assert "85.00" in table  # mean %proven


# ---------------------------------------------------------------------------
# HTTP service


@pytest.fixture()
def client(scripted_run):
    ledger, artifacts = scripted_run
    state = ServiceState()
    state.register_run(ledger, artifacts)
    state.queue.enqueue(_item())
    return TestClient(create_app(state))


def test_http_runs_and_ledger(client):
    assert client.get("/runs").json() == ["run-001"]
    body = client.get("/runs/run-001/ledger").json()
    assert body["design"] == "handshake"
    assert body["events"][0]["kind"] == "SpecParsed"
    assert client.get("/runs/nope/ledger").status_code == 404


def test_http_coverage(client):
    body = client.get("/runs/run-001/coverage").json()
    assert body["percent"] == 100.0
    assert client.get("/runs/nope/coverage").status_code == 404


def test_http_pending_and_resolve(client):
    pending = client.get("/hil/pending").json()
    assert [i["item_id"] for i in pending] == ["hil-1"]
    r = client.post("/hil/hil-1/resolve",
                    json={"decision": "corrected", "correction": CORRECTED})
    assert r.status_code == 200
    assert r.json()["item"]["status"] == "corrected"
    assert r.json()["record"]["resolution_pattern"] == "reset-disable-added"
    # resolution lands in the run ledger
    events = client.get("/runs/run-001/ledger").json()["events"]
    assert events[-1]["kind"] == "HilResolved"
    # replays of the same resolution conflict
    assert client.post("/hil/hil-1/resolve", json={"decision": "accepted"}).status_code == 409
    assert client.post("/hil/ghost/resolve", json={"decision": "accepted"}).status_code == 404


def test_http_sse_stream(client):
    resp = client.get("/events/run-001")
    assert resp.headers["content-type"].startswith("text/event-stream")
    lines = [l for l in resp.text.split("\n\n") if l]
    assert all(l.startswith("data: ") for l in lines)
    first = json.loads(lines[0][len("data: "):])
    assert first["kind"] == "SpecParsed" and first["ts"] == 0


def test_http_bearer_auth(scripted_run, monkeypatch):
    monkeypatch.setenv("SVAFORGE_TOKEN", "sesame")
    ledger, artifacts = scripted_run
    state = ServiceState()
    state.register_run(ledger, artifacts)
    client = TestClient(create_app(state))
    assert client.get("/runs").status_code == 401
    ok = client.get("/runs", headers={"Authorization": "Bearer sesame"})
    assert ok.status_code == 200
