"""Sequential multi-agent workflow engine.

One run walks SpecIntake -> Generation -> SyntaxLoop -> CriticLoop -> Proving
(-> Rca per counterexample) -> CoverageLoop -> Done over a pluggable agent
backend. Every step appends ledger events with logical (integer) timestamps so
a rerun with the same inputs replays byte-identically. Iteration caps never
crash a run: hitting one emits HilRequested and the run either auto-resolves
(auto_accept / auto_decline) or parks the item for a human (interactive).
"""

from __future__ import annotations

import json
import urllib.request
from dataclasses import dataclass, field

from . import engine, rca, specgram, svapars
from .domain import DesignModel, Event, RunLedger, append_event
from .errors import (
    BackendProtocolError,
    BoundViolation,
    ConfigError,
    IllegalTransition,
    UnboundName,
    WorkspaceConflict,
)

PHASES = (
    "SpecIntake",
    "Generation",
    "SyntaxLoop",
    "CriticLoop",
    "Proving",
    "CoverageLoop",
    "Rca",
    "Hil",
    "Done",
)

_TRANSITIONS = {
    "SpecIntake": {"Generation"},
    "Generation": {"SyntaxLoop"},
    "SyntaxLoop": {"CriticLoop", "Hil"},
    "CriticLoop": {"Proving", "Hil"},
    "Proving": {"Rca", "CoverageLoop", "Done"},
    "Rca": {"Proving", "CoverageLoop", "Hil"},
    "CoverageLoop": {"CoverageLoop", "Done", "Hil"},
    "Hil": {"SyntaxLoop", "CriticLoop", "Proving", "CoverageLoop", "Done"},
    "Done": set(),
}

HIL_MODES = ("interactive", "auto_decline", "auto_accept")

_DIAG_TAGS = {
    "ClockEdgeMismatch": "clock-edge",
    "DelayWindowMismatch": "delay-window",
    "SemanticMismatch": "semantic",
    "MissingResetDisable": "reset-handling",
    "UnsupportedConstruct": "semantic",
}


# ---------------------------------------------------------------------------
# Backends


def _check_reply(role: str, reply) -> dict:
    """Validate a backend reply against the wire schema; see docs/README."""
    if not isinstance(reply, dict):
        raise BackendProtocolError(f"{role}: reply is not a JSON object")
    if role == "critique":
        critique = reply.get("critique")
        if not isinstance(critique, dict) or critique.get("verdict") not in ("approve", "revise"):
            raise BackendProtocolError(f"{role}: missing critique verdict approve/revise")
        if not isinstance(critique.get("notes", ""), str):
            raise BackendProtocolError(f"{role}: critique notes must be a string")
        props = reply.get("properties", [])
    else:
        props = reply.get("properties")
    if not isinstance(props, list) or not all(isinstance(p, str) for p in props):
        raise BackendProtocolError(f"{role}: 'properties' must be a list of strings")
    return reply


class AgentBackend:
    """Interface: one call per agent role, returning the reply-schema dict."""

    capabilities = (
        "generate_properties",
        "refine_property",
        "critique",
        "propose_coverage_property",
    )

    def call(self, role: str, context: dict) -> dict:  # pragma: no cover - interface
        raise NotImplementedError


class ScriptedBackend(AgentBackend):
    """Deterministic backend replaying a scenario file.

    Scenario schema: one key per role mapping to a reply queue (list). The
    coverage role may instead map signal name -> queue, with "*" as fallback.
    Queues repeat their last reply once exhausted.
    """

    def __init__(self, scenario: dict):
        self.scenario = scenario
        self._cursor: dict = {}

    @staticmethod
    def from_file(path) -> "ScriptedBackend":
        with open(path, encoding="utf-8") as fh:
            return ScriptedBackend(json.load(fh))

    def _pop(self, key, queue):
        if not isinstance(queue, list) or not queue:
            raise BackendProtocolError(f"scenario has no replies for {key!r}")
        idx = self._cursor.get(key, 0)
        reply = queue[min(idx, len(queue) - 1)]
        self._cursor[key] = idx + 1
        return reply

    def call(self, role: str, context: dict) -> dict:
        spec = self.scenario.get(role)
        if role == "propose_coverage_property" and isinstance(spec, dict):
            signal = context.get("signal", "*")
            queue = spec.get(signal, spec.get("*"))
            return self._pop((role, signal), queue)
        if spec is None:
            if role == "critique":
                return {"critique": {"verdict": "approve", "notes": ""}, "properties": []}
            return {"properties": []}
        return self._pop(role, spec)


class HttpBackend(AgentBackend):
    """POST {role, context} to <base_url>/agent; reply must follow the schema."""

    def __init__(self, base_url: str, timeout: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def call(self, role: str, context: dict) -> dict:
        payload = json.dumps({"role": role, "context": context}).encode("utf-8")
        req = urllib.request.Request(
            self.base_url + "/agent",
            data=payload,
            headers={"Content-Type": "application/json"},
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return json.loads(resp.read().decode("utf-8"))
        except (OSError, ValueError) as exc:
            raise BackendProtocolError(f"http backend: {exc}") from exc


# ---------------------------------------------------------------------------
# Config, state, artifacts


@dataclass(frozen=True)
class RunConfig:
    max_fix_attempts: int = 5
    max_critic_rounds: int = 4
    max_rca_rounds: int = 3
    max_coverage_rounds: int = 5
    proof_depth: int = 16
    hil_mode: str = "interactive"
    context_budget: int = 4000  # characters of prompt context per call
    convergence_rule: str = "two-consecutive-approvals"

    def __post_init__(self):
        for name in (
            "max_fix_attempts",
            "max_critic_rounds",
            "max_rca_rounds",
            "max_coverage_rounds",
            "proof_depth",
            "context_budget",
        ):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.hil_mode not in HIL_MODES:
            raise ConfigError(f"hil_mode must be one of {HIL_MODES}")


@dataclass
class PropertyRecord:
    property_id: str
    text: str
    ast: object = None
    status: str = "generated"  # generated|validated|proven|failed|vacuous|inconclusive|hil_accepted|declined|pending_hil
    verdict: object = None
    bound: object = None


@dataclass
class RunState:
    run_id: str
    design: DesignModel
    config: RunConfig
    ledger: RunLedger
    phase: str = "SpecIntake"
    properties: dict = field(default_factory=dict)  # pid -> PropertyRecord
    order: list = field(default_factory=list)
    pending_hil: list = field(default_factory=list)
    kpi: dict | None = None
    ts: int = 0
    hil_seq: int = 0

    def advance(self, phase: str) -> None:
        if phase not in _TRANSITIONS.get(self.phase, set()):
            raise IllegalTransition(f"cannot move from {self.phase} to {phase}")
        self.phase = phase


@dataclass(frozen=True)
class RunArtifacts:
    run_id: str
    phase: str
    properties: dict  # pid -> final text
    statuses: dict  # pid -> status
    coverage: object  # CoverageReport | None
    pending_hil: tuple
    kpi: dict | None

    @property
    def done(self) -> bool:
        return self.phase == "Done"


# ---------------------------------------------------------------------------
# The run


class _Runner:
    def __init__(self, design, spec, config, backend, cache, run_id):
        self.design = design
        self.spec = spec
        self.config = config
        self.backend = backend
        self.cache = cache
        self.state = RunState(run_id, design, config, RunLedger(run_id, design.name))

    # -- plumbing ----------------------------------------------------------

    def emit(self, kind: str, payload: dict) -> None:
        append_event(self.state.ledger, Event(self.state.ts, kind, payload))
        self.state.ts += 1

    def prompt(self, text: str) -> tuple[str, bool]:
        budget = self.config.context_budget
        if len(text) > budget:
            return text[:budget], True
        return text, False

    def call_backend(self, role: str, context: dict):
        """One agent call with a single retry on protocol errors.

        Returns (reply, None) or (None, error text) after the retry also fails.
        """
        last = None
        for _ in range(2):
            try:
                return _check_reply(role, self.backend.call(role, context)), None
            except BackendProtocolError as exc:
                last = str(exc)
        return None, last

    # -- HIL ---------------------------------------------------------------

    def hil(self, kind: str, payload: dict) -> str:
        """Raise a HIL item; returns the decision ('pending' in interactive)."""
        self.state.hil_seq += 1
        item_id = f"hil-{self.state.hil_seq}"
        body = {"item_id": item_id, "kind": kind, **payload}
        self.emit("HilRequested", body)
        mode = self.config.hil_mode
        if mode == "auto_accept":
            self.emit("HilResolved", {"item_id": item_id, "decision": "accepted"})
            return "accepted"
        if mode == "auto_decline":
            self.emit("HilResolved", {"item_id": item_id, "decision": "declined"})
            return "declined"
        self.state.pending_hil.append({**body, "run_id": self.state.run_id, "status": "pending"})
        return "pending"

    # -- syntax loop -------------------------------------------------------

    def _next_candidate(self, rec: PropertyRecord, diags, tried: set):
        # Mechanical rewrites come first: they use this design's signal names,
        # while cached corrections were written for whatever design the
        # mistake was originally made on.
        if rec.ast is not None:
            try:
                fixed = svapars.apply_canonical_rewrites(
                    rec.ast, diags, design=self.design, spec=self.spec
                )
                text = svapars.render_property(fixed)
                if text not in tried:
                    return text, "rewrite"
            except svapars.UnfixableDiagnostic:
                pass
        tags = tuple(sorted({_DIAG_TAGS[d.code] for d in diags if d.code in _DIAG_TAGS}))
        signature = specgram.normalize_error_signature(diags[0].message)
        for entry in self.cache.lookup(signature, tags):
            if entry.corrected_snippet not in tried:
                return entry.corrected_snippet, f"cache:{entry.id}"
        context = {
            "property": rec.text,
            "diagnostics": [d.to_json_obj() for d in diags],
            "design": self.design.name,
        }
        reply, err = self.call_backend("refine_property", context)
        if reply is None:
            return None, f"backend-error:{err}"
        props = reply.get("properties", [])
        if not props:
            return None, "backend-empty"
        # A fresh agent call is a fresh attempt even when the text repeats,
        # so backend candidates deliberately skip the `tried` dedupe.
        return props[0], "backend"

    def syntax_loop(self, rec: PropertyRecord, spec_aware: bool = True) -> str:
        """Validate-and-fix until clean, the cap, or HIL. Returns the status."""
        spec = self.spec if spec_aware else None
        tried = {rec.text}
        while True:
            ast, diags = svapars.diagnose_property_text(rec.text, self.design, spec=spec)
            rec.ast = ast
            self.emit(
                "LintRound",
                {
                    "property_id": rec.property_id,
                    "diagnostics": [d.to_json_obj() for d in diags],
                },
            )
            if not diags and ast is not None:
                rec.status = "validated"
                return "validated"
            if self.state.ledger.fix_attempts(rec.property_id) >= self.config.max_fix_attempts:
                return self._hil_property(rec, diags, "fix attempt cap reached")
            candidate, source = self._next_candidate(rec, diags, tried)
            if candidate is None:
                return self._hil_property(rec, diags, source)
            attempt = self.state.ledger.fix_attempts(rec.property_id) + 1
            try:
                self.emit(
                    "FixAttempt",
                    {
                        "property_id": rec.property_id,
                        "attempt": attempt,
                        "source": source,
                        "text": candidate,
                    },
                )
            except BoundViolation:
                return self._hil_property(rec, diags, "fix attempt cap reached")
            tried.add(candidate)
            rec.text = candidate

    def _hil_property(self, rec: PropertyRecord, diags, reason: str) -> str:
        decision = self.hil(
            "UnfixableProperty",
            {
                "property_id": rec.property_id,
                "text": rec.text,
                "diagnostics": [d.to_json_obj() for d in diags],
                "reason": reason,
            },
        )
        rec.status = {"accepted": "hil_accepted", "declined": "declined"}.get(
            decision, "pending_hil"
        )
        return rec.status

    # -- phases ------------------------------------------------------------

    def spec_intake(self):
        spec_issues = specgram.validate_against_design(self.spec, self.design)
        self.emit(
            "SpecParsed",
            {
                "design": self.design.name,
                "signals": list(self.spec.signals),
                "expectations": 1 if self.spec.expectation() else 0,
                "issues": [str(d) for d in spec_issues],
            },
        )
        self.state.advance("Generation")

    def generation(self):
        base = specgram.render_prompt_context(
            self.spec, self.cache.entries, specgram.SEEDED_RULES
        )
        expectation = self.spec.expectation()
        targets = [expectation] if expectation is not None else []
        for idx, exp in enumerate(targets):
            prompt, truncated = self.prompt(base + "\nTarget: " + exp.describe())
            reply, err = self.call_backend(
                "generate_properties",
                {"prompt": prompt, "design": self.design.name, "expectation": idx},
            )
            texts = reply.get("properties", []) if reply else []
            if reply is None:
                self.hil(
                    "UnfixableProperty",
                    {"property_id": f"gen-{idx}", "text": "", "diagnostics": [],
                     "reason": f"backend-error:{err}"},
                )
                continue
            for text in texts:
                pid = f"p{len(self.state.order) + 1}"
                rec = PropertyRecord(pid, text)
                self.state.properties[pid] = rec
                self.state.order.append(pid)
                self.emit(
                    "PropertyGenerated",
                    {"property_id": pid, "text": text, "context_truncated": truncated},
                )
        self.state.advance("SyntaxLoop")

    def run_syntax_phase(self):
        for pid in list(self.state.order):
            self.syntax_loop(self.state.properties[pid])
        self.state.advance("CriticLoop")

    def critic_loop(self):
        streak = 0
        for round_no in range(1, self.config.max_critic_rounds + 1):
            batch = [
                self.state.properties[p]
                for p in self.state.order
                if self.state.properties[p].status == "validated"
            ]
            clean = bool(batch) and all(
                svapars.validate(r.text, self.design, spec=self.spec).is_ok for r in batch
            )
            prompt, _ = self.prompt(
                "Review these properties for the rulebook:\n"
                + "\n".join(r.text for r in batch)
            )
            reply, err = self.call_backend("critique", {"prompt": prompt})
            if reply is None:
                self.hil("UnconvergedCritic", {"round": round_no, "reason": f"backend-error:{err}"})
                break
            verdict = reply["critique"]["verdict"]
            self.emit(
                "CriticRound",
                {
                    "round": round_no,
                    "verdict": verdict,
                    "notes": reply["critique"].get("notes", ""),
                    "clean": clean,
                },
            )
            if verdict == "approve" and clean:
                streak += 1
                if streak >= 2:
                    self.state.advance("Proving")
                    return
            else:
                streak = 0
                for rec, new_text in zip(batch, reply.get("properties", [])):
                    if new_text and new_text != rec.text:
                        rec.text = new_text
                        rec.status = "generated"
                        self.syntax_loop(rec)
        else:
            self.hil("UnconvergedCritic", {"round": self.config.max_critic_rounds,
                                           "reason": "critic cap reached"})
        # Unconverged: proving continues with whatever still validates.
        self.state.advance("Proving")

    def prove(self, rec: PropertyRecord):
        try:
            rec.bound = engine.bind(rec.ast, self.design)
        except UnboundName as exc:
            self._hil_property(rec, [], f"binding failed: {exc}")
            return
        depth = max(self.config.proof_depth, svapars.horizon(rec.ast))
        rec.verdict = engine.check(rec.bound, depth, property_id=rec.property_id)
        rec.status = rec.verdict.status.lower()
        self.emit(
            "EngineVerdict",
            {
                "property_id": rec.property_id,
                "status": rec.verdict.status,
                "violated_at": rec.verdict.violated_at,
                "depth": depth,
            },
        )

    def proving(self):
        for pid in list(self.state.order):
            rec = self.state.properties[pid]
            if rec.status == "validated":
                self.prove(rec)
        failed = [p for p in self.state.order if self.state.properties[p].status == "failed"]
        if failed:
            self.state.advance("Rca")
            for pid in failed:
                self.rca_rounds(self.state.properties[pid])
            self.state.advance("CoverageLoop")
        else:
            self.state.advance("CoverageLoop")

    def rca_rounds(self, rec: PropertyRecord):
        cex_id = f"cex-{rec.property_id}"
        for round_no in range(1, self.config.max_rca_rounds + 1):
            report = rca.analyze(
                rec.verdict, rec.ast, self.spec, self.design, round_no,
                cache=self.cache, cex_id=cex_id,
            )
            try:
                self.emit(
                    "RcaRound",
                    {
                        "cex_id": cex_id,
                        "property_id": rec.property_id,
                        "round": round_no,
                        "root_cause_class": report.root_cause_class,
                        "consistency": report.consistency,
                        "rtl_finding": list(report.rtl_finding),
                    },
                )
            except BoundViolation:
                break
            if report.consistency and report.proposed_patch:
                rec.text = report.proposed_patch
                if self.syntax_loop(rec) == "validated":
                    self.prove(rec)
                    if rec.status == "proven":
                        return
        self.hil(
            "UnresolvedRca",
            {
                "property_id": rec.property_id,
                "cex_id": cex_id,
                "text": rec.text,
                "diagnostics": [],
                "reason": "unresolved after RCA cap",
            },
        )
        if self.config.hil_mode == "auto_accept":
            rec.status = "hil_accepted"
        elif self.config.hil_mode == "auto_decline":
            rec.status = "declined"
        else:
            rec.status = "pending_hil"

    def _coverage_report(self):
        results = [
            (r.bound, r.verdict)
            for r in self.state.properties.values()
            if r.bound is not None and r.verdict is not None
        ]
        return engine.compute_coverage(self.design, results)

    def coverage_loop(self):
        report = self._coverage_report()
        self.emit("CoverageRound", {"round": 0, **report.to_json_obj()})
        for round_no in range(1, self.config.max_coverage_rounds + 1):
            if not report.holes:
                break
            previous = report.percent
            for signal, locus in report.holes:
                reply, err = self.call_backend(
                    "propose_coverage_property",
                    {"signal": signal, "locus": locus, "design": self.design.name},
                )
                texts = reply.get("properties", []) if reply else []
                if not texts:
                    continue
                pid = f"cov-r{round_no}-{signal}"
                rec = PropertyRecord(pid, texts[0])
                self.state.properties[pid] = rec
                self.state.order.append(pid)
                self.emit(
                    "PropertyGenerated",
                    {"property_id": pid, "text": texts[0], "context_truncated": False},
                )
                # Coverage properties target design internals, not rulebook
                # expectations, so they are linted design-only.
                if self.syntax_loop(rec, spec_aware=False) == "validated":
                    self.prove(rec)
            report = self._coverage_report()
            self.state.advance("CoverageLoop")
            self.emit("CoverageRound", {"round": round_no, **report.to_json_obj()})
            if report.percent <= previous:
                break
        if self.state.pending_hil:
            self.state.advance("Hil")
            return
        self.emit("CoverageRound", {"round": -1, "final": True, **report.to_json_obj()})
        self.state.advance("Done")
        self.state.kpi = self._final_kpi(report)

    def _final_kpi(self, report):
        validated = [
            p
            for p in self.state.order
            if self.state.properties[p].status in ("proven", "failed", "vacuous",
                                                   "inconclusive", "validated")
        ]
        proven = [p for p in validated if self.state.properties[p].status == "proven"]
        attempts = [self.state.ledger.fix_attempts(p) for p in self.state.order]
        return {
            "n_assertions": len(validated),
            "first_generation": not any(
                e.kind == "FixAttempt" for e in self.state.ledger.events
            ),
            "fix_attempts": max(attempts, default=0),
            "pct_proven": engine.truncate_pct(len(proven), len(validated))
            if validated
            else 0.0,
            "pct_coverage": report.percent,
        }

    def run(self):
        self.spec_intake()
        self.generation()
        self.run_syntax_phase()
        self.critic_loop()
        self.proving()
        self.coverage_loop()
        return self.state


def run(
    design: DesignModel,
    spec_text: str,
    config: RunConfig,
    backend: AgentBackend,
    cache=None,
    run_id: str = "run-001",
) -> tuple[RunLedger, RunArtifacts]:
    spec = specgram.parse_structured_spec(spec_text)
    if cache is None:
        cache = specgram.seeded_cache()
    runner = _Runner(design, spec, config, backend, cache, run_id)
    state = runner.run()
    coverage = runner._coverage_report() if state.properties else None
    artifacts = RunArtifacts(
        run_id=run_id,
        phase=state.phase,
        properties={p: state.properties[p].text for p in state.order},
        statuses={p: state.properties[p].status for p in state.order},
        coverage=coverage,
        pending_hil=tuple(state.pending_hil),
        kpi=state.kpi,
    )
    return state.ledger, artifacts


# ---------------------------------------------------------------------------
# Code extractor / manager


def materialize(run_id: str, artifacts: RunArtifacts, design: DesignModel, root="out"):
    """Write properties and the bind manifest under out/<run_id>/; idempotent."""
    import os

    base = os.path.join(root, run_id)
    files = {}
    for pid, text in artifacts.properties.items():
        if artifacts.statuses.get(pid) in ("declined", "pending_hil"):
            continue
        files[os.path.join("properties", f"{pid}.sva")] = text
    manifest = {
        pid: {
            "design": design.name,
            "status": artifacts.statuses.get(pid, ""),
        }
        for pid in sorted(artifacts.properties)
    }
    files["bind_manifest.json"] = json.dumps(manifest, indent=2, sort_keys=True) + "\n"

    if os.path.isdir(base):
        for rel, content in files.items():
            path = os.path.join(base, rel)
            if os.path.exists(path):
                with open(path, encoding="utf-8") as fh:
                    if fh.read() != content:
                        raise WorkspaceConflict(f"{path} exists with different content")
    os.makedirs(os.path.join(base, "properties"), exist_ok=True)
    for rel, content in files.items():
        path = os.path.join(base, rel)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(content)
    return base
