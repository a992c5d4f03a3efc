import { describe, expect, it } from "vitest";

import type { HilItem } from "../src/api.js";
import {
  type EvidenceTable,
  evidenceGridView,
  pendingQueueView,
  resolutionView,
} from "../src/views.js";
import { fixtureJson } from "./helpers.js";

function pendingItems(): HilItem[] {
  return fixtureJson<Record<string, unknown>[]>("pending_items.json").map((raw) => {
    const { item_id, run_id, kind, status, ...payload } = raw;
    return {
      item_id: item_id as string,
      run_id: run_id as string,
      kind: kind as HilItem["kind"],
      status: status as HilItem["status"],
      payload,
      correction: null,
    };
  });
}

describe("pending queue", () => {
  it("sorts by item id and summarizes the escalation reason", () => {
    const rows = pendingQueueView(pendingItems().reverse());
    expect(rows.map((r) => r.itemId)).toEqual(["hil-1", "hil-2"]);
    expect(rows[0]?.kind).toBe("UnfixableProperty");
    expect(rows[0]?.summary).toBe("fix attempt cap reached");
  });
});

describe("evidence grid", () => {
  const { table, violated_at } = fixtureJson<{
    table: EvidenceTable;
    violated_at: number;
  }>("evidence_table.json");

  it("matches the evidence table cell-for-cell", () => {
    const grid = evidenceGridView(table, violated_at);
    expect(grid.signals).toEqual(table.signals);
    expect(grid.cycles).toEqual(
      Array.from({ length: table.t1 - table.t0 + 1 }, (_, i) => table.t0 + i),
    );
    table.signals.forEach((signal, row) => {
      grid.cycles.forEach((cycle, col) => {
        expect(grid.cells[row]?.[col]).toBe(table.values[signal]?.[cycle - table.t0]);
      });
    });
  });

  it("highlights the violation cycle's column", () => {
    const grid = evidenceGridView(table, violated_at);
    expect(grid.violationCycle).toBe(violated_at);
    expect(grid.violationColumn).toBe(violated_at - table.t0);
  });

  it("leaves the highlight off when the violation is outside the window", () => {
    const grid = evidenceGridView(table, table.t1 + 5);
    expect(grid.violationColumn).toBeNull();
  });

  it("rejects tables with missing signal rows", () => {
    const broken = { ...table, values: { ...table.values } };
    delete broken.values[table.signals[0] ?? ""];
    expect(() => evidenceGridView(broken, null)).toThrow(/missing values/);
  });
});

describe("resolution pane", () => {
  it("shows the defective property and its diagnostics", () => {
    const view = resolutionView(pendingItems()[0] as HilItem);
    expect(view.kind).toBe("UnfixableProperty");
    expect(view.propertyText).toContain("@(posedge clk)");
    expect(view.diagnostics.map((d) => d.code)).toEqual(["UnsupportedConstruct"]);
    expect(view.prefill).toBe(view.propertyText);
  });
});
