/**
 * Typed client for the audit service HTTP API.
 *
 * The annotator name travels in the X-Annotator header on every call.
 * Responses are shape-checked before use so a drifting backend fails
 * loudly instead of rendering garbage.  No runtime dependencies: the
 * module runs as-is in the browser and under node.
 */

export interface AuditItem {
  id: string;
  dataset: string;
  modality: string;
  width: number;
  height: number;
  query: string;
  boxes: [number, number, number, number][];
  image_url: string;
  overlay_url: string;
}

export interface NextResponse {
  done: boolean;
  item: AuditItem | null;
  total: number;
}

export interface VoteDecision {
  triplet_id: string;
  good_votes: number;
  total_votes: number;
  accepted: boolean;
  pending: boolean;
}

export interface ReportRow {
  dataset: string;
  total: number;
  good3: number;
  good2: number;
  good1: number;
  good0: number;
  good_ratio_pct: string;
}

export interface Report {
  partial: boolean;
  rows: ReportRow[];
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`${status}: ${detail}`);
  }
}

export class AuthError extends ApiError {
  constructor(detail: string) {
    super(401, detail);
  }
}

function isRecord(value: unknown): value is Record<string, unknown> {
  return typeof value === "object" && value !== null && !Array.isArray(value);
}

function isBox(value: unknown): value is [number, number, number, number] {
  return (
    Array.isArray(value) &&
    value.length === 4 &&
    value.every((v) => typeof v === "number" && Number.isFinite(v))
  );
}

function parseItem(value: unknown): AuditItem {
  if (
    !isRecord(value) ||
    typeof value.id !== "string" ||
    typeof value.dataset !== "string" ||
    typeof value.modality !== "string" ||
    typeof value.width !== "number" ||
    typeof value.height !== "number" ||
    typeof value.query !== "string" ||
    !Array.isArray(value.boxes) ||
    !value.boxes.every(isBox) ||
    typeof value.image_url !== "string" ||
    typeof value.overlay_url !== "string"
  ) {
    throw new Error("malformed audit item in response");
  }
  return value as unknown as AuditItem;
}

function parseNext(value: unknown): NextResponse {
  if (
    !isRecord(value) ||
    typeof value.done !== "boolean" ||
    typeof value.total !== "number"
  ) {
    throw new Error("malformed next-item response");
  }
  const item = value.item === null ? null : parseItem(value.item);
  if (value.done !== (item === null)) {
    throw new Error("malformed next-item response");
  }
  return { done: value.done, item, total: value.total };
}

function parseDecision(value: unknown): VoteDecision {
  if (
    !isRecord(value) ||
    typeof value.triplet_id !== "string" ||
    typeof value.good_votes !== "number" ||
    typeof value.total_votes !== "number" ||
    typeof value.accepted !== "boolean" ||
    typeof value.pending !== "boolean"
  ) {
    throw new Error("malformed vote decision");
  }
  return value as unknown as VoteDecision;
}

function parseReport(value: unknown): Report {
  if (
    !isRecord(value) ||
    typeof value.partial !== "boolean" ||
    !Array.isArray(value.rows)
  ) {
    throw new Error("malformed report");
  }
  for (const row of value.rows) {
    if (
      !isRecord(row) ||
      typeof row.dataset !== "string" ||
      typeof row.total !== "number" ||
      typeof row.good3 !== "number" ||
      typeof row.good2 !== "number" ||
      typeof row.good1 !== "number" ||
      typeof row.good0 !== "number" ||
      typeof row.good_ratio_pct !== "string"
    ) {
      throw new Error("malformed report row");
    }
  }
  return value as unknown as Report;
}

async function errorDetail(response: Response): Promise<string> {
  try {
    const body: unknown = await response.json();
    if (isRecord(body) && typeof body.detail === "string") {
      return body.detail;
    }
  } catch {
    // fall through to the status line
  }
  return response.statusText || `request failed (${response.status})`;
}

export class AuditClient {
  constructor(
    private readonly baseUrl: string,
    private readonly annotator: string,
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const headers = new Headers(init?.headers);
    headers.set("X-Annotator", this.annotator);
    const response = await this.fetchImpl(this.baseUrl + path, {
      ...init,
      headers,
    });
    if (response.status === 401) {
      throw new AuthError(await errorDetail(response));
    }
    if (!response.ok) {
      throw new ApiError(response.status, await errorDetail(response));
    }
    return response;
  }

  async fetchNext(): Promise<NextResponse> {
    const response = await this.request("/api/next");
    return parseNext(await response.json());
  }

  async submitVote(
    tripletId: string,
    verdict: "good" | "bad",
    comment = "",
  ): Promise<VoteDecision> {
    const response = await this.request("/api/vote", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ triplet_id: tripletId, verdict, comment }),
    });
    return parseDecision(await response.json());
  }

  async fetchReport(): Promise<Report> {
    const response = await this.request("/api/report");
    return parseReport(await response.json());
  }

  async fetchExport(): Promise<string> {
    const response = await this.request("/api/export");
    return response.text();
  }
}
