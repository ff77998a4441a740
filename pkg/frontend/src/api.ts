/**
 * Typed client for the viewer service HTTP API.
 *
 * Every request is checked against the documented endpoint set before it
 * is issued; anything else is a programming error and throws locally
 * instead of reaching the network.
 */

export interface SourceInfo {
  name: string;
  page_count: number;
}

export interface ViewerState {
  source: string | null;
  page_id: number | null;
  updated_at: string;
  attachment?: string[][];
}

export interface CostEstimate {
  n_pages: number;
  tokens_in_per_page: number;
  tokens_out_per_page: number;
  price_in_per_1k: number;
  price_out_per_1k: number;
  total_cost: number;
}

export interface ApprovalSummary {
  source: string;
  pages: string;
  prompt_digest: string;
  route: string;
  justification: string;
  estimate: CostEstimate;
}

export type Decision = "pending" | "granted" | "denied";

export interface Approval {
  id: string;
  job_id: string;
  summary: ApprovalSummary;
  digest: string;
  decision: Decision;
  note: string;
  requested_at: string;
  decided_at: string | null;
}

export interface JobProgress {
  job_id: string;
  status: string;
  done_pages: number;
  total_pages: number;
  failures: Record<string, string>;
}

export interface RangeRecord {
  section: string;
  start_page_id: number;
  end_page_id: number;
  printed_page_offset: number;
  method: string;
  supplements: { start: number; end: number; label: string }[];
  verified_by_user: boolean;
}

interface Endpoint {
  method: "GET" | "POST";
  pattern: RegExp;
}

/** The complete set of server endpoints this client may touch. */
export const ENDPOINTS: readonly Endpoint[] = [
  { method: "GET", pattern: /^\/api\/sources$/ },
  { method: "GET", pattern: /^\/api\/sources\/[^/]+\/pages\/\d+\/image$/ },
  { method: "GET", pattern: /^\/api\/state$/ },
  { method: "GET", pattern: /^\/api\/approvals$/ },
  { method: "GET", pattern: /^\/api\/jobs\/[A-Za-z0-9]+$/ },
  { method: "GET", pattern: /^\/api\/sources\/[^/]+\/range$/ },
  { method: "GET", pattern: /^\/api\/events$/ },
  { method: "POST", pattern: /^\/api\/approvals\/[A-Za-z0-9]+\/decision$/ },
  { method: "POST", pattern: /^\/api\/sources\/[^/]+\/range\/confirm$/ },
];

export function isAllowed(method: string, path: string): boolean {
  return ENDPOINTS.some((e) => e.method === method && e.pattern.test(path));
}

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private base: string = "",
    private fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(method: "GET" | "POST", path: string, body?: unknown): Promise<T> {
    if (!isAllowed(method, path)) {
      throw new Error(`endpoint not in the documented set: ${method} ${path}`);
    }
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { "Content-Type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const resp = await this.fetchImpl(this.base + path, init);
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const payload = await resp.json();
        if (payload && payload.error) detail = payload.error;
      } catch {
        /* non-JSON error body; keep the status text */
      }
      throw new ApiError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  sources(): Promise<SourceInfo[]> {
    return this.request("GET", "/api/sources");
  }

  state(): Promise<ViewerState> {
    return this.request("GET", "/api/state");
  }

  approvals(): Promise<Approval[]> {
    return this.request("GET", "/api/approvals");
  }

  job(jobId: string): Promise<JobProgress> {
    return this.request("GET", `/api/jobs/${jobId}`);
  }

  range(source: string): Promise<RangeRecord> {
    return this.request("GET", `/api/sources/${source}/range`);
  }

  decide(approvalId: string, decision: "granted" | "denied", note = ""): Promise<Approval> {
    return this.request("POST", `/api/approvals/${approvalId}/decision`, { decision, note });
  }

  confirmRange(source: string): Promise<RangeRecord> {
    return this.request("POST", `/api/sources/${source}/range/confirm`, {});
  }

  /** URL for an <img> tag; images load through the browser, not fetch. */
  imageUrl(source: string, pageId: number): string {
    const path = `/api/sources/${source}/pages/${pageId}/image`;
    if (!isAllowed("GET", path)) {
      throw new Error(`bad image path: ${path}`);
    }
    return this.base + path;
  }

  eventsUrl(): string {
    return this.base + "/api/events";
  }
}
