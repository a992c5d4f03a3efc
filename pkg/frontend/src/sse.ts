import type { LedgerEvent } from "./api.js";

/** Parse a complete `data: {...}\n\n` server-sent-event stream into events. */
export function parseSseStream(text: string): LedgerEvent[] {
  const events: LedgerEvent[] = [];
  for (const block of text.split("\n\n")) {
    const trimmed = block.trim();
    if (!trimmed) continue;
    if (!trimmed.startsWith("data: ")) {
      throw new Error(`malformed SSE block: ${trimmed.slice(0, 40)}`);
    }
    events.push(JSON.parse(trimmed.slice("data: ".length)) as LedgerEvent);
  }
  return events;
}

/**
 * Incremental variant for live streams: feed chunks, get completed events.
 * Keeps any trailing partial block buffered for the next chunk.
 */
export class SseDecoder {
  private buffer = "";

  push(chunk: string): LedgerEvent[] {
    this.buffer += chunk;
    const blocks = this.buffer.split("\n\n");
    this.buffer = blocks.pop() ?? "";
    return parseSseStream(blocks.join("\n\n") + (blocks.length ? "\n\n" : ""));
  }
}
