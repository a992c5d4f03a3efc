"""HIL review queue, dataset capture, KPI recomputation and the HTTP service.

Every human decision is appended to a JSONL dataset; corrections additionally
become learning-cache entries (origin=hil) so later runs hitting the same
error signature fix themselves without escalating again.
"""

from __future__ import annotations

import datetime as _dt
import json
import os
from dataclasses import dataclass, replace

from . import engine, specgram, svapars
from .domain import Event, RunLedger, append_event
from .errors import (
    IllegalTransition,
    IncompleteRun,
    InvalidCorrection,
    UnknownItem,
)

HIL_KINDS = ("UnfixableProperty", "UnconvergedCritic", "UnresolvedRca")
DECISIONS = ("accepted", "corrected", "declined")
RESOLUTION_PATTERNS = (
    "reset-disable-added",
    "clock-edge-fixed",
    "window-fixed",
    "rewrite-manual",
    "declined",
    "manual",
)


def _now_rfc3339() -> str:
    return _dt.datetime.now(_dt.timezone.utc).replace(microsecond=0).isoformat()


# ---------------------------------------------------------------------------
# HIL items and the dataset


@dataclass(frozen=True)
class HilItem:
    item_id: str
    run_id: str
    kind: str
    payload: dict  # property text + diagnostics, or RCA report + evidence
    status: str = "pending"
    correction: str | None = None

    def to_json_obj(self) -> dict:
        return {
            "item_id": self.item_id,
            "run_id": self.run_id,
            "kind": self.kind,
            "payload": self.payload,
            "status": self.status,
            "correction": self.correction,
        }


@dataclass(frozen=True)
class DatasetRecord:
    refined_response: str
    originating_prompt: str
    context: str
    error_signatures: tuple
    resolution_pattern: str
    run_id: str
    item_id: str
    created_at: str

    def to_json(self) -> str:
        return json.dumps(
            {
                "refined_response": self.refined_response,
                "originating_prompt": self.originating_prompt,
                "context": self.context,
                "error_signatures": list(self.error_signatures),
                "resolution_pattern": self.resolution_pattern,
                "run_id": self.run_id,
                "item_id": self.item_id,
                "created_at": self.created_at,
            },
            separators=(",", ":"),
            sort_keys=True,
        )

    @staticmethod
    def from_json(line: str) -> "DatasetRecord":
        obj = json.loads(line)
        return DatasetRecord(
            refined_response=obj["refined_response"],
            originating_prompt=obj["originating_prompt"],
            context=obj["context"],
            error_signatures=tuple(obj["error_signatures"]),
            resolution_pattern=obj["resolution_pattern"],
            run_id=obj["run_id"],
            item_id=obj["item_id"],
            created_at=obj["created_at"],
        )


def _infer_pattern(item: HilItem, correction: str) -> str:
    """Classify what the human fix changed, for the dataset tag."""
    original = item.payload.get("text", "")
    had_disable = "disable iff" in original
    if "disable iff" in correction and not had_disable:
        return "reset-disable-added"
    if "@(posedge" in correction and "@(negedge" in original:
        return "clock-edge-fixed"
    try:
        before = svapars.parse_property(original)
        after = svapars.parse_property(correction)
        if svapars.max_span(before.consequent) != svapars.max_span(after.consequent):
            return "window-fixed"
    except (svapars.ParseFailure, svapars.UnsupportedConstruct):
        pass
    return "rewrite-manual"


_HIL_TAG_BY_PATTERN = {
    "reset-disable-added": ("reset-handling",),
    "clock-edge-fixed": ("clock-edge",),
    "window-fixed": ("delay-window",),
    "rewrite-manual": ("semantic",),
}


class HilQueue:
    """Per-service review queue plus the append-only dataset JSONL."""

    def __init__(self, dataset_path=None, cache: specgram.LearningCache | None = None):
        self.items: dict[str, HilItem] = {}
        self.dataset_path = dataset_path
        self.records: list[DatasetRecord] = []
        self.cache = cache
        if dataset_path is not None and os.path.exists(dataset_path):
            with open(dataset_path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        self.records.append(DatasetRecord.from_json(line))

    def enqueue(self, item: HilItem) -> HilItem:
        if item.kind not in HIL_KINDS:
            raise ValueError(f"unknown HIL kind {item.kind!r}")
        if item.item_id in self.items and self.items[item.item_id].status != "pending":
            raise IllegalTransition(f"item '{item.item_id}' already resolved")
        stored = replace(item, status="pending", correction=None)
        self.items[item.item_id] = stored
        return stored

    def pending(self) -> list[HilItem]:
        return sorted(
            (i for i in self.items.values() if i.status == "pending"),
            key=lambda i: i.item_id,
        )

    def resolve(
        self,
        item_id: str,
        decision: str,
        correction: str | None = None,
        design=None,
        now: str | None = None,
    ) -> tuple[HilItem, DatasetRecord]:
        item = self.items.get(item_id)
        if item is None:
            raise UnknownItem(f"no HIL item '{item_id}'")
        if item.status != "pending":
            raise IllegalTransition(f"item '{item_id}' is already {item.status}")
        if decision not in DECISIONS:
            raise ValueError(f"decision must be one of {DECISIONS}")
        if (decision == "corrected") != (correction is not None):
            raise InvalidCorrection("correction required iff decision is 'corrected'")

        pattern = "manual"
        if decision == "declined":
            pattern = "declined"
        elif decision == "corrected":
            try:
                svapars.parse_property(correction)
            except (svapars.ParseFailure, svapars.UnsupportedConstruct) as exc:
                raise InvalidCorrection(f"correction does not parse: {exc}") from exc
            if design is not None:
                result = svapars.validate(correction, design, spec=None)
                if not result.is_ok:
                    raise InvalidCorrection(
                        "correction fails validation: "
                        + "; ".join(d.message for d in result.diagnostics)
                    )
            pattern = _infer_pattern(item, correction)

        resolved = replace(item, status=decision, correction=correction)
        self.items[item_id] = resolved

        signatures = tuple(
            specgram.normalize_error_signature(d["message"])
            for d in item.payload.get("diagnostics", [])
        )
        record = DatasetRecord(
            refined_response=correction or item.payload.get("text", ""),
            originating_prompt=item.payload.get("reason", item.kind),
            context=json.dumps(item.payload, sort_keys=True),
            error_signatures=signatures,
            resolution_pattern=pattern,
            run_id=item.run_id,
            item_id=item.item_id,
            created_at=now or _now_rfc3339(),
        )
        self.records.append(record)
        if self.dataset_path is not None:
            with open(self.dataset_path, "a", encoding="utf-8") as fh:
                fh.write(record.to_json() + "\n")

        if decision == "corrected" and self.cache is not None:
            self.cache.record(
                specgram.CacheEntry(
                    id=f"hil-{item.run_id}-{item.item_id}",
                    error_signature=signatures[0] if signatures else item.kind,
                    incorrect_snippet=item.payload.get("text", ""),
                    explanation=(f"human correction ({pattern})",),
                    corrected_snippet=correction,
                    tags=_HIL_TAG_BY_PATTERN.get(pattern, ("semantic",)),
                    origin="hil",
                    created_at=record.created_at,
                )
            )
        return resolved, record


def hil_enqueue(queue: HilQueue, item: HilItem) -> HilItem:
    return queue.enqueue(item)


def hil_resolve(queue: HilQueue, item_id: str, decision: str, correction=None, **kw):
    return queue.resolve(item_id, decision, correction, **kw)


# ---------------------------------------------------------------------------
# KPIs


KPI_FIELDS = (
    "design",
    "model_label",
    "pass_index",
    "n_assertions",
    "first_generation",
    "fix_attempts",
    "pct_proven",
    "pct_coverage",
)


@dataclass(frozen=True)
class KpiRow:
    design: str
    model_label: str
    pass_index: int
    n_assertions: int
    first_generation: bool
    fix_attempts: int
    pct_proven: float
    pct_coverage: float

    def to_csv_row(self) -> str:
        return ",".join(
            str(getattr(self, f)) for f in KPI_FIELDS
        )


def _last_by_pid(ledger: RunLedger, kind: str) -> dict:
    out = {}
    for e in ledger.events:
        if e.kind == kind:
            out[e.payload.get("property_id")] = e.payload
    return out


def compute_kpis(
    ledger: RunLedger,
    model_label: str = "scripted",
    pass_index: int = 1,
    rounding: bool = False,
) -> KpiRow:
    final = None
    for e in ledger.events:
        if e.kind == "CoverageRound" and e.payload.get("final"):
            final = e.payload
    if final is None:
        raise IncompleteRun(f"run '{ledger.run_id}' never reached Done")

    last_lint = _last_by_pid(ledger, "LintRound")
    validated = sorted(
        pid for pid, payload in last_lint.items() if not payload.get("diagnostics")
    )
    last_verdict = _last_by_pid(ledger, "EngineVerdict")
    proven = [p for p in validated if last_verdict.get(p, {}).get("status") == "Proven"]

    attempts: dict[str, int] = {}
    for e in ledger.events:
        if e.kind == "FixAttempt":
            pid = e.payload.get("property_id")
            attempts[pid] = attempts.get(pid, 0) + 1

    if rounding:
        pct_proven = round(100 * len(proven) / len(validated), 2) if validated else 0.0
    else:
        pct_proven = engine.truncate_pct(len(proven), len(validated))
    return KpiRow(
        design=ledger.design,
        model_label=model_label,
        pass_index=pass_index,
        n_assertions=len(validated),
        first_generation=not attempts,
        fix_attempts=max(attempts.values(), default=0),
        pct_proven=pct_proven,
        pct_coverage=float(final.get("percent", 0.0)),
    )


def synthesize_ledger(
    design: str,
    n_assertions: int,
    proven: int,
    coverage_pct: float | None = None,
    run_id: str = "synth",
) -> RunLedger:
    """Build a minimal Done ledger with the given verdict tallies (benchmarks)."""
    ledger = RunLedger(run_id, design)
    ts = 0
    for i in range(n_assertions):
        pid = f"p{i + 1}"
        for kind, payload in (
            ("PropertyGenerated", {"property_id": pid, "text": ""}),
            ("LintRound", {"property_id": pid, "diagnostics": []}),
            (
                "EngineVerdict",
                {
                    "property_id": pid,
                    "status": "Proven" if i < proven else "Failed",
                    "violated_at": None,
                    "depth": 0,
                },
            ),
        ):
            append_event(ledger, Event(ts, kind, payload))
            ts += 1
    pct = coverage_pct if coverage_pct is not None else engine.truncate_pct(proven, n_assertions)
    append_event(
        ledger,
        Event(ts, "CoverageRound", {"round": -1, "final": True, "percent": pct, "holes": []}),
    )
    return ledger


# ---------------------------------------------------------------------------
# Benchmark tables


def _csv(rows) -> str:
    out = [",".join(KPI_FIELDS)]
    out.extend(r.to_csv_row() for r in rows)
    return "\n".join(out) + "\n"


def _text_table(header, body_rows) -> str:
    widths = [
        max(len(str(h)), *(len(str(r[i])) for r in body_rows)) if body_rows else len(str(h))
        for i, h in enumerate(header)
    ]
    def fmt(row):
        return " | ".join(str(v).ljust(w) for v, w in zip(row, widths))
    rule = "-+-".join("-" * w for w in widths)
    return "\n".join([fmt(header), rule] + [fmt(r) for r in body_rows]) + "\n"


def bench_report(rows, grouping: str = "pass") -> dict:
    """Deterministic CSV plus a text table; grouping selects the layout.

    grouping: 'pass'   -> %proven per run index (Pass@1..k columns)
              'hil'     -> with/without-HIL coverage pairs with delta columns
              'iteration' -> assertion/coverage progression per iteration
              ''        -> single aggregate table
    """
    rows = sorted(rows, key=lambda r: (r.design, r.model_label, r.pass_index))
    if not rows:
        raise ValueError("rows must be non-empty")
    csv_text = _csv(rows)

    if grouping == "pass":
        ks = sorted({r.pass_index for r in rows})
        header = ["design", "model"] + [f"Pass@{k}" for k in ks]
        groups: dict[tuple, dict[int, KpiRow]] = {}
        for r in rows:
            groups.setdefault((r.design, r.model_label), {})[r.pass_index] = r
        body = [
            [d, m] + [f"{g[k].pct_proven:.2f}" if k in g else "-" for k in ks]
            for (d, m), g in sorted(groups.items())
        ]
    elif grouping == "hil":
        header = ["design", "model", "coverage", "coverage+HIL", "delta"]
        base: dict[tuple, KpiRow] = {}
        with_hil: dict[tuple, KpiRow] = {}
        for r in rows:
            key = (r.design, r.model_label.removesuffix("+hil"), r.pass_index)
            (with_hil if r.model_label.endswith("+hil") else base)[key] = r
        body = []
        for key in sorted(base):
            b = base[key]
            h = with_hil.get(key)
            body.append(
                [
                    key[0],
                    key[1],
                    f"{b.pct_coverage:.2f}",
                    f"{h.pct_coverage:.2f}" if h else "-",
                    f"{h.pct_coverage - b.pct_coverage:+.2f}" if h else "-",
                ]
            )
    elif grouping == "iteration":
        ks = sorted({r.pass_index for r in rows})
        header = ["design", "model", "metric"] + [f"iter {k}" for k in ks]
        groups = {}
        for r in rows:
            groups.setdefault((r.design, r.model_label), {})[r.pass_index] = r
        body = []
        for (d, m), g in sorted(groups.items()):
            body.append([d, m, "assertions"] + [str(g[k].n_assertions) if k in g else "-" for k in ks])
            body.append([d, m, "coverage"] + [f"{g[k].pct_coverage:.2f}" if k in g else "-" for k in ks])
    else:
        header = ["design", "model", "runs", "mean %proven", "mean %coverage"]
        groups = {}
        for r in rows:
            groups.setdefault((r.design, r.model_label), []).append(r)
        body = [
            [
                d,
                m,
                str(len(g)),
                f"{sum(x.pct_proven for x in g) / len(g):.2f}",
                f"{sum(x.pct_coverage for x in g) / len(g):.2f}",
            ]
            for (d, m), g in sorted(groups.items())
        ]
    return {"csv": csv_text, "table": _text_table(header, body)}


# ---------------------------------------------------------------------------
# HTTP service


class ServiceState:
    """Everything one service instance exposes: runs, coverage, HIL queue."""

    def __init__(self, dataset_path=None, cache=None):
        self.ledgers: dict[str, RunLedger] = {}
        self.coverage: dict[str, dict] = {}
        self.queue = HilQueue(dataset_path, cache)

    def register_run(self, ledger: RunLedger, artifacts=None) -> None:
        self.ledgers[ledger.run_id] = ledger
        if artifacts is not None and getattr(artifacts, "coverage", None) is not None:
            self.coverage[ledger.run_id] = artifacts.coverage.to_json_obj()
        if artifacts is not None:
            for raw in getattr(artifacts, "pending_hil", ()):  # orchestrator dicts
                self.queue.enqueue(
                    HilItem(
                        item_id=raw["item_id"],
                        run_id=raw["run_id"],
                        kind=raw["kind"],
                        payload={
                            k: v
                            for k, v in raw.items()
                            if k not in ("item_id", "run_id", "kind", "status")
                        },
                    )
                )


def create_app(state: ServiceState):
    from fastapi import FastAPI, HTTPException
    from fastapi.responses import JSONResponse, StreamingResponse

    app = FastAPI(title="svaforge HIL service")
    token = os.environ.get("SVAFORGE_TOKEN")

    @app.middleware("http")
    async def bearer_auth(request, call_next):
        if token and request.headers.get("Authorization") != f"Bearer {token}":
            return JSONResponse(
                {"detail": "missing or invalid bearer token"}, status_code=401
            )
        return await call_next(request)

    @app.get("/runs")
    def runs():
        return sorted(state.ledgers)

    @app.get("/runs/{run_id}/ledger")
    def ledger(run_id: str):
        led = state.ledgers.get(run_id)
        if led is None:
            raise HTTPException(status_code=404, detail=f"no run '{run_id}'")
        return {
            "run_id": led.run_id,
            "design": led.design,
            "events": [
                {"ts": e.ts, "kind": e.kind, "payload": e.payload} for e in led.events
            ],
        }

    @app.get("/runs/{run_id}/coverage")
    def coverage(run_id: str):
        cov = state.coverage.get(run_id)
        if cov is None:
            raise HTTPException(status_code=404, detail=f"no coverage for '{run_id}'")
        return cov

    @app.get("/hil/pending")
    def pending():
        return [i.to_json_obj() for i in state.queue.pending()]

    @app.post("/hil/{item_id}/resolve")
    def resolve(item_id: str, body: dict):
        decision = body.get("decision")
        correction = body.get("correction")
        try:
            item, record = state.queue.resolve(item_id, decision, correction)
        except UnknownItem as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except (IllegalTransition, InvalidCorrection, ValueError) as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        led = state.ledgers.get(item.run_id)
        if led is not None:
            ts = led.events[-1].ts + 1 if led.events else 0
            append_event(
                led,
                Event(ts, "HilResolved", {"item_id": item_id, "decision": decision}),
            )
        return {"item": item.to_json_obj(), "record": json.loads(record.to_json())}

    @app.get("/events/{run_id}")
    def events(run_id: str):
        led = state.ledgers.get(run_id)
        if led is None:
            raise HTTPException(status_code=404, detail=f"no run '{run_id}'")

        def stream():
            for e in led.events:
                yield f"data: {e.to_json()}\n\n"

        return StreamingResponse(stream(), media_type="text/event-stream")

    return app


def serve(host: str = "127.0.0.1", port: int = 8080, state: ServiceState | None = None):
    import uvicorn

    app = create_app(state or ServiceState())
    uvicorn.run(app, host=host, port=port)
