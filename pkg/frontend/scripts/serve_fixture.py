"""Start the review service preloaded with the recorded run fixtures.

Usage: python3 scripts/serve_fixture.py <port>
Prints "READY" once the app is constructed so test harnesses can wait for it.
"""

import json
import os
import sys

import uvicorn

from svaforge import domain, hilserve

FIXTURES = os.path.join(os.path.dirname(__file__), "..", "tests", "fixtures")


def build_state() -> hilserve.ServiceState:
    state = hilserve.ServiceState()
    ledger = domain.load_ledger(os.path.join(FIXTURES, "run1_ledger.jsonl"))
    state.ledgers[ledger.run_id] = ledger
    with open(os.path.join(FIXTURES, "pending_items.json"), encoding="utf-8") as fh:
        for raw in json.load(fh):
            state.queue.enqueue(
                hilserve.HilItem(
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
    return state


def main() -> None:
    port = int(sys.argv[1]) if len(sys.argv) > 1 else 8080
    app = hilserve.create_app(build_state())
    print("READY", flush=True)
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="warning")


if __name__ == "__main__":
    main()
