"""Typed knowledge graph over verification artifacts with subgraph retrieval.

Retrieval is lexical: query/node token overlap seeds a breadth-first
expansion, with scores decaying by 0.5 per hop. The scorer is pluggable so a
vector backend can replace `token_overlap_scorer` later.
"""

from __future__ import annotations

import json
import re
from collections import deque
from dataclasses import dataclass

from .errors import DanglingEndpoint, RelKindMismatch, UnknownNode

NODE_KINDS = (
    "Requirement",
    "Signal",
    "Property",
    "Proof",
    "Counterexample",
    "DesignModule",
    "Rule",
)

# rel -> allowed (src kind, dst kind) pairs
REL_SCHEMA = {
    "implements": {("Property", "Requirement")},
    "constrains": {("Rule", "Signal"), ("Rule", "Property"), ("Rule", "DesignModule")},
    "proven_by": {("Property", "Proof")},
    "violated_by": {("Property", "Counterexample")},
    "bound_to": {("Property", "Signal"), ("Signal", "DesignModule"), ("Rule", "Signal")},
    "derived_from": None,  # any -> any
}

HOP_DECAY = 0.5
DEFAULT_K_HOPS = 2
DEFAULT_NODE_BUDGET = 24


@dataclass(frozen=True)
class KgNode:
    id: str
    kind: str
    label: str
    body: str = ""
    attrs: tuple = ()


@dataclass(frozen=True)
class KgEdge:
    src: str
    dst: str
    rel: str
    provenance: str = ""


@dataclass(frozen=True)
class Subgraph:
    query: str
    hop_radius: int
    nodes: tuple  # ((KgNode, score), ...) sorted by score desc, id asc
    edges: tuple

    def node_ids(self) -> set[str]:
        return {n.id for n, _ in self.nodes}


_TOKEN_SPLIT = re.compile(r"[^a-z0-9]+")


def tokenize(text: str) -> set[str]:
    return {t for t in _TOKEN_SPLIT.split(text.casefold()) if t}


def token_overlap_scorer(query: str, node: KgNode) -> float:
    """Fraction of query tokens present in the node's label or body."""
    q = tokenize(query)
    if not q:
        return 0.0
    n = tokenize(node.label) | tokenize(node.body)
    return len(q & n) / len(q)


class KnowledgeGraph:
    def __init__(self, scorer=token_overlap_scorer):
        self.nodes: dict[str, KgNode] = {}
        self.edges: list[KgEdge] = []
        self.scorer = scorer

    # -- mutation -----------------------------------------------------------

    def upsert_node(self, node: KgNode) -> str:
        if node.kind not in NODE_KINDS:
            raise ValueError(f"unknown node kind {node.kind!r}")
        old = self.nodes.get(node.id)
        if old is not None and old.kind != node.kind:
            raise RelKindMismatch(f"node '{node.id}' kind is fixed at creation ({old.kind})")
        self.nodes[node.id] = node
        return node.id

    def upsert_edge(self, edge: KgEdge) -> tuple:
        for endpoint in (edge.src, edge.dst):
            if endpoint not in self.nodes:
                raise DanglingEndpoint(f"edge endpoint '{endpoint}' does not exist")
        allowed = REL_SCHEMA.get(edge.rel, ())
        if allowed == ():
            raise RelKindMismatch(f"unknown relation {edge.rel!r}")
        pair = (self.nodes[edge.src].kind, self.nodes[edge.dst].kind)
        if allowed is not None and pair not in allowed:
            raise RelKindMismatch(f"relation '{edge.rel}' cannot link {pair[0]} to {pair[1]}")
        key = (edge.src, edge.dst, edge.rel)
        self.edges = [e for e in self.edges if (e.src, e.dst, e.rel) != key]
        self.edges.append(edge)
        return key

    # -- queries --------------------------------------------------------------

    def neighbors(self, node_id: str) -> set[str]:
        out = set()
        for e in self.edges:
            if e.src == node_id:
                out.add(e.dst)
            elif e.dst == node_id:
                out.add(e.src)
        return out

    def bfs_hops(self, seeds, k_hops: int) -> dict[str, int]:
        """Undirected BFS distance from the nearest seed, capped at k_hops."""
        dist = {s: 0 for s in seeds}
        queue = deque(seeds)
        while queue:
            cur = queue.popleft()
            if dist[cur] >= k_hops:
                continue
            for nxt in self.neighbors(cur):
                if nxt not in dist:
                    dist[nxt] = dist[cur] + 1
                    queue.append(nxt)
        return dist

    def retrieve_subgraph(
        self,
        query: str,
        k_hops: int = DEFAULT_K_HOPS,
        node_budget: int = DEFAULT_NODE_BUDGET,
    ) -> Subgraph:
        seed_scores = {}
        for node in self.nodes.values():
            s = self.scorer(query, node)
            if s > 0:
                seed_scores[node.id] = s
        if not seed_scores:
            return Subgraph(query, k_hops, (), ())
        reach = self.bfs_hops(set(seed_scores), k_hops)
        scores: dict[str, float] = {}
        for seed, sscore in seed_scores.items():
            seed_reach = self.bfs_hops({seed}, k_hops)
            for node_id, d in seed_reach.items():
                val = sscore * (HOP_DECAY**d)
                if val > scores.get(node_id, 0.0):
                    scores[node_id] = val
        scores = {nid: s for nid, s in scores.items() if nid in reach}
        ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))[:node_budget]
        chosen = {nid for nid, _ in ranked}
        nodes = tuple((self.nodes[nid], score) for nid, score in ranked)
        edges = tuple(e for e in self.edges if e.src in chosen and e.dst in chosen)
        return Subgraph(query, k_hops, nodes, edges)

    def trace_chain(self, requirement_id: str):
        """All Requirement -> Property -> Proof/Counterexample paths."""
        node = self.nodes.get(requirement_id)
        if node is None or node.kind != "Requirement":
            raise UnknownNode(f"no requirement '{requirement_id}'")
        paths = []
        for imp in self.edges:
            if imp.rel != "implements" or imp.dst != requirement_id:
                continue
            prop_id = imp.src
            for ev in self.edges:
                if ev.src == prop_id and ev.rel in ("proven_by", "violated_by"):
                    paths.append((requirement_id, prop_id, ev.dst))
        paths.sort()
        return TraceChainResult(requirement_id, tuple(paths), uncovered=not paths)

    # -- persistence ----------------------------------------------------------

    def to_jsonl(self) -> str:
        lines = []
        for node in sorted(self.nodes.values(), key=lambda n: n.id):
            lines.append(
                json.dumps(
                    {
                        "type": "node",
                        "id": node.id,
                        "kind": node.kind,
                        "label": node.label,
                        "body": node.body,
                        "attrs": dict(node.attrs),
                    },
                    separators=(",", ":"),
                    sort_keys=True,
                )
            )
        for e in self.edges:
            lines.append(
                json.dumps(
                    {
                        "type": "edge",
                        "src": e.src,
                        "dst": e.dst,
                        "rel": e.rel,
                        "provenance": e.provenance,
                    },
                    separators=(",", ":"),
                    sort_keys=True,
                )
            )
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_jsonl(text: str) -> "KnowledgeGraph":
        kg = KnowledgeGraph()
        edges = []
        for line in text.splitlines():
            if not line.strip():
                continue
            obj = json.loads(line)
            if obj["type"] == "node":
                kg.upsert_node(
                    KgNode(
                        obj["id"],
                        obj["kind"],
                        obj["label"],
                        obj.get("body", ""),
                        tuple(sorted(obj.get("attrs", {}).items())),
                    )
                )
            else:
                edges.append(obj)
        for obj in edges:
            kg.upsert_edge(KgEdge(obj["src"], obj["dst"], obj["rel"], obj.get("provenance", "")))
        return kg


@dataclass(frozen=True)
class TraceChainResult:
    requirement_id: str
    paths: tuple
    uncovered: bool


def answer_context(sub: Subgraph) -> str:
    """Grounded context text: rules, then signals, then properties; every
    line carries exactly one [node:<id>] citation."""
    lines = []
    by_kind: dict[str, list[KgNode]] = {}
    for node, _score in sub.nodes:
        by_kind.setdefault(node.kind, []).append(node)
    for kind in ("Rule", "Signal", "Property", "Requirement", "Proof", "Counterexample", "DesignModule"):
        for node in sorted(by_kind.get(kind, []), key=lambda n: n.id):
            if kind == "Rule" and node.body:
                for body_line in node.body.splitlines():
                    lines.append(f"{body_line} [node:{node.id}]")
            elif kind == "Signal":
                lines.append(f"signal {node.label} [node:{node.id}]")
            else:
                lines.append(f"{kind.lower()} {node.label} [node:{node.id}]")
    return "\n".join(lines) + ("\n" if lines else "")


def seeded_axi_graph() -> KnowledgeGraph:
    """The AXI write-burst worked example: WLAST vs AWLEN burst length."""
    kg = KnowledgeGraph()
    signals = {
        "sig-awlen": "AWLEN",
        "sig-awready": "AWREADY",
        "sig-awvalid": "AWVALID",
        "sig-wlast": "WLAST",
        "sig-wready": "WREADY",
        "sig-wvalid": "WVALID",
    }
    for nid, label in signals.items():
        kg.upsert_node(KgNode(nid, "Signal", label, body=f"AXI channel signal {label}"))
    kg.upsert_node(
        KgNode(
            "rule-0-burst-length",
            "Rule",
            "burst_length = AWLEN + 1",
            body="burst_length = AWLEN + 1",
        )
    )
    kg.upsert_node(
        KgNode(
            "rule-1-handshake",
            "Rule",
            "each WVALID && WREADY advances the beat count",
            body="After AWVALID && AWREADY handshake\nCount data-beat handshakes",
        )
    )
    kg.upsert_node(
        KgNode(
            "rule-2-wlast-beat",
            "Rule",
            "WLAST asserted on the last data beat",
            body="Check: WLAST = 1 on (AWLEN + 1)-th beat\nWLAST = 0 before that",
        )
    )
    kg.upsert_node(
        KgNode(
            "rule-3-awlen-stable",
            "Rule",
            "AWLEN stable during burst",
            body="Assume: AWLEN stable during burst",
        )
    )
    kg.upsert_node(
        KgNode(
            "req-wlast-burst",
            "Requirement",
            "WLAST must match the AWLEN burst length",
        )
    )
    cite = "AXI write-burst rulebook"
    kg.upsert_edge(KgEdge("rule-0-burst-length", "sig-awlen", "constrains", cite))
    kg.upsert_edge(KgEdge("rule-1-handshake", "sig-wvalid", "constrains", cite))
    kg.upsert_edge(KgEdge("rule-1-handshake", "sig-wready", "constrains", cite))
    kg.upsert_edge(KgEdge("rule-1-handshake", "sig-awvalid", "constrains", cite))
    kg.upsert_edge(KgEdge("rule-1-handshake", "sig-awready", "constrains", cite))
    kg.upsert_edge(KgEdge("rule-2-wlast-beat", "sig-wlast", "constrains", cite))
    kg.upsert_edge(KgEdge("rule-2-wlast-beat", "sig-awlen", "constrains", cite))
    kg.upsert_edge(KgEdge("rule-2-wlast-beat", "rule-1-handshake", "derived_from", cite))
    kg.upsert_edge(KgEdge("rule-3-awlen-stable", "sig-awlen", "constrains", cite))
    return kg
