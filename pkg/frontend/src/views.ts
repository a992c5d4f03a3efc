/**
 * Pure view models. Every value shown in the console derives solely from API
 * responses; nothing here mutates domain data.
 */

import type { ApiClient, HilItem, Ledger, ResolveRequest } from "./api.js";

// ---------------------------------------------------------------------------
// Pending queue

export interface QueueRow {
  itemId: string;
  runId: string;
  kind: string;
  summary: string;
}

export function pendingQueueView(items: HilItem[]): QueueRow[] {
  return [...items]
    .sort((a, b) => a.item_id.localeCompare(b.item_id))
    .map((i) => ({
      itemId: i.item_id,
      runId: i.run_id,
      kind: i.kind,
      summary: String(i.payload["reason"] ?? i.kind),
    }));
}

// ---------------------------------------------------------------------------
// Evidence grid: one column per cycle, one row per signal

export interface EvidenceTable {
  signals: string[];
  t0: number;
  t1: number;
  values: Record<string, number[]>;
}

export interface EvidenceGrid {
  signals: string[];
  cycles: number[];
  /** cells[rowIndex][columnIndex] — same order as signals x cycles */
  cells: number[][];
  violationCycle: number | null;
  /** column index of the violation within `cycles`, or null if outside */
  violationColumn: number | null;
}

export function evidenceGridView(
  table: EvidenceTable,
  violatedAt: number | null,
): EvidenceGrid {
  const cycles = Array.from({ length: table.t1 - table.t0 + 1 }, (_, i) => table.t0 + i);
  const cells = table.signals.map((signal) => {
    const row = table.values[signal];
    if (row === undefined || row.length !== cycles.length) {
      throw new Error(`evidence table is missing values for '${signal}'`);
    }
    return [...row];
  });
  const inWindow =
    violatedAt !== null && violatedAt >= table.t0 && violatedAt <= table.t1;
  return {
    signals: [...table.signals],
    cycles,
    cells,
    violationCycle: violatedAt,
    violationColumn: inWindow ? violatedAt - table.t0 : null,
  };
}

// ---------------------------------------------------------------------------
// Resolution detail pane

export interface ResolutionView {
  itemId: string;
  kind: string;
  propertyText: string;
  diagnostics: { code: string; message: string }[];
  /** server-suggested correction prefill, when the payload carries one */
  prefill: string;
}

export function resolutionView(item: HilItem): ResolutionView {
  const diags = (item.payload["diagnostics"] ?? []) as {
    code: string;
    message: string;
  }[];
  return {
    itemId: item.item_id,
    kind: item.kind,
    propertyText: String(item.payload["text"] ?? ""),
    diagnostics: diags.map((d) => ({ code: d.code, message: d.message })),
    prefill: String(item.payload["suggested_correction"] ?? item.payload["text"] ?? ""),
  };
}

// ---------------------------------------------------------------------------
// Session replay: each recorded user action maps to exactly one API call

export interface RecordedAction {
  action: "resolve";
  item_id: string;
  body: ResolveRequest;
}

export interface ReplayResult {
  ledger: Ledger;
  callCount: number;
}

export async function replaySession(
  client: ApiClient,
  runId: string,
  actions: RecordedAction[],
): Promise<ReplayResult> {
  let callCount = 0;
  for (const step of actions) {
    if (step.action !== "resolve") {
      throw new Error(`unknown recorded action: ${String(step.action)}`);
    }
    await client.resolve(step.item_id, step.body);
    callCount += 1;
  }
  const ledger = await client.getLedger(runId);
  callCount += 1;
  return { ledger, callCount };
}
