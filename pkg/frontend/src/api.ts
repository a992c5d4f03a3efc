/** Typed client for the review service's JSON API. */

export interface LedgerEvent {
  ts: number;
  kind: string;
  payload: Record<string, unknown>;
}

export interface Ledger {
  run_id: string;
  design: string;
  events: LedgerEvent[];
}

export interface CoverageReport {
  percent: number;
  covered: string[];
  holes: [string, string][];
}

export interface HilItem {
  item_id: string;
  run_id: string;
  kind: "UnfixableProperty" | "UnconvergedCritic" | "UnresolvedRca";
  payload: Record<string, unknown>;
  status: "pending" | "accepted" | "corrected" | "declined";
  correction: string | null;
}

export interface ResolveRequest {
  decision: "accepted" | "corrected" | "declined";
  correction?: string;
}

export interface DatasetRecord {
  refined_response: string;
  originating_prompt: string;
  context: string;
  error_signatures: string[];
  resolution_pattern: string;
  run_id: string;
  item_id: string;
  created_at: string;
}

export interface ResolveResponse {
  item: HilItem;
  record: DatasetRecord;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

export type FetchLike = (
  url: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string },
) => Promise<{ status: number; text(): Promise<string> }>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike,
    private readonly token?: string,
  ) {}

  private headers(withBody: boolean): Record<string, string> {
    const h: Record<string, string> = {};
    if (withBody) h["Content-Type"] = "application/json";
    if (this.token) h["Authorization"] = `Bearer ${this.token}`;
    return h;
  }

  private async request<T>(path: string, method = "GET", body?: unknown): Promise<T> {
    const resp = await this.fetchImpl(this.baseUrl + path, {
      method,
      headers: this.headers(body !== undefined),
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const text = await resp.text();
    if (resp.status < 200 || resp.status >= 300) {
      let detail = text;
      try {
        detail = (JSON.parse(text) as { detail?: string }).detail ?? text;
      } catch {
        /* non-JSON error body: keep raw text */
      }
      throw new ApiError(resp.status, detail);
    }
    return JSON.parse(text) as T;
  }

  listRuns(): Promise<string[]> {
    return this.request<string[]>("/runs");
  }

  getLedger(runId: string): Promise<Ledger> {
    return this.request<Ledger>(`/runs/${runId}/ledger`);
  }

  getCoverage(runId: string): Promise<CoverageReport> {
    return this.request<CoverageReport>(`/runs/${runId}/coverage`);
  }

  getPending(): Promise<HilItem[]> {
    return this.request<HilItem[]>("/hil/pending");
  }

  resolve(itemId: string, body: ResolveRequest): Promise<ResolveResponse> {
    return this.request<ResolveResponse>(`/hil/${itemId}/resolve`, "POST", body);
  }

  /** Raw text of the run's server-sent-event stream. */
  async eventStream(runId: string): Promise<string> {
    const resp = await this.fetchImpl(`${this.baseUrl}/events/${runId}`, {
      headers: this.headers(false),
    });
    const text = await resp.text();
    if (resp.status !== 200) throw new ApiError(resp.status, text);
    return text;
  }
}
