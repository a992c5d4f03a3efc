"""Command-line entry points: run, kg, bench, serve."""

from __future__ import annotations

import argparse
import glob
import json
import os
import sys

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import domain, hilserve, kgraph, orchestr, specgram
from .errors import ConfigError, SvaForgeError

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_HIL_PENDING = 2


def _load_config(path, hil_mode=None) -> orchestr.RunConfig:
    values = {}
    if path:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
        values = dict(data.get("run", data))
    if hil_mode:
        values["hil_mode"] = hil_mode
    allowed = {
        "max_fix_attempts",
        "max_critic_rounds",
        "max_rca_rounds",
        "max_coverage_rounds",
        "proof_depth",
        "hil_mode",
        "context_budget",
        "convergence_rule",
    }
    unknown = set(values) - allowed
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return orchestr.RunConfig(**values)


def _make_backend(spec: str) -> orchestr.AgentBackend:
    scheme, _, rest = spec.partition(":")
    if scheme == "scripted" and rest:
        return orchestr.ScriptedBackend.from_file(rest)
    if scheme == "http" and rest:
        return orchestr.HttpBackend(f"http:{rest}")
    raise ConfigError(f"backend must be scripted:<scenario.json> or http:<url>, got {spec!r}")


def _cmd_run(args) -> int:
    with open(args.design, encoding="utf-8") as fh:
        design = domain.load_design(fh.read())
    with open(args.spec, encoding="utf-8") as fh:
        spec_text = fh.read()
    config = _load_config(args.config, args.hil)
    backend = _make_backend(args.backend)
    cache = specgram.seeded_cache(args.cache) if args.cache else None

    ledger, artifacts = orchestr.run(
        design, spec_text, config, backend, cache=cache, run_id=args.run_id
    )
    out_dir = orchestr.materialize(args.run_id, artifacts, design, root=args.out)
    domain.save_ledger(ledger, os.path.join(out_dir, "ledger.jsonl"))

    print(f"run {args.run_id}: phase={artifacts.phase}")
    for pid, status in artifacts.statuses.items():
        print(f"  {pid}: {status}")
    if artifacts.coverage is not None:
        print(f"  coverage: {artifacts.coverage.percent}%")
    if artifacts.kpi:
        print(f"  kpi: {json.dumps(artifacts.kpi, sort_keys=True)}")
    if artifacts.pending_hil:
        print(f"  pending HIL items: {[i['item_id'] for i in artifacts.pending_hil]}")
        return EXIT_HIL_PENDING
    return EXIT_OK if artifacts.done else EXIT_ERROR


def _cmd_kg(args) -> int:
    if args.graph:
        with open(args.graph, encoding="utf-8") as fh:
            kg = kgraph.KnowledgeGraph.from_jsonl(fh.read())
    else:
        kg = kgraph.seeded_axi_graph()
    sub = kg.retrieve_subgraph(args.query, k_hops=args.hops, node_budget=args.budget)
    print(kgraph.answer_context(sub), end="")
    return EXIT_OK


def _cmd_bench(args) -> int:
    paths = []
    for pattern in args.ledgers:
        matched = sorted(glob.glob(pattern))
        paths.extend(matched if matched else [pattern])
    rows = []
    for idx, path in enumerate(paths, start=1):
        ledger = domain.load_ledger(path)
        rows.append(hilserve.compute_kpis(ledger, model_label=args.model, pass_index=idx))
    report = hilserve.bench_report(rows, args.grouping)
    print(report["table"], end="")
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(report["csv"])
        print(f"csv written to {args.csv}")
    return EXIT_OK


def _cmd_serve(args) -> int:
    cache = specgram.seeded_cache(args.cache) if args.cache else None
    state = hilserve.ServiceState(dataset_path=args.dataset, cache=cache)
    for path in args.ledger or ():
        state.ledgers[domain.load_ledger(path).run_id] = domain.load_ledger(path)
    hilserve.serve(host=args.host, port=args.port, state=state)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="forge", description="rulebook-to-assertion verification pipeline"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one verification run")
    p_run.add_argument("--design", required=True)
    p_run.add_argument("--spec", required=True)
    p_run.add_argument("--backend", required=True, help="scripted:<file.json> or http:<url>")
    p_run.add_argument("--config", default=None, help="TOML file with a [run] table")
    p_run.add_argument("--hil", choices=orchestr.HIL_MODES, default=None)
    p_run.add_argument("--run-id", default="run-001")
    p_run.add_argument("--cache", default=None, help="learning-cache JSONL path")
    p_run.add_argument("--out", default="out")
    p_run.set_defaults(func=_cmd_run)

    p_kg = sub.add_parser("kg", help="knowledge-graph retrieval")
    kg_sub = p_kg.add_subparsers(dest="kg_command", required=True)
    p_query = kg_sub.add_parser("query", help="retrieve a scored subgraph")
    p_query.add_argument("query")
    p_query.add_argument("--hops", type=int, default=kgraph.DEFAULT_K_HOPS)
    p_query.add_argument("--budget", type=int, default=kgraph.DEFAULT_NODE_BUDGET)
    p_query.add_argument("--graph", default=None, help="graph snapshot JSONL (default: seeded AXI)")
    p_query.set_defaults(func=_cmd_kg)

    p_bench = sub.add_parser("bench", help="recompute KPIs from run ledgers")
    p_bench.add_argument("ledgers", nargs="+", help="ledger JSONL paths or globs")
    p_bench.add_argument("--grouping", choices=("pass", "hil", "iteration", ""), default="pass")
    p_bench.add_argument("--model", default="scripted")
    p_bench.add_argument("--csv", default=None, help="also write the CSV here")
    p_bench.set_defaults(func=_cmd_bench)

    p_serve = sub.add_parser("serve", help="start the HIL review HTTP service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8080)
    p_serve.add_argument("--dataset", default=None)
    p_serve.add_argument("--cache", default=None)
    p_serve.add_argument("--ledger", action="append", default=None, help="preload a ledger file")
    p_serve.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SvaForgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
