/**
 * Typed client for the workbench HTTP API.
 *
 * The UI is a pure client: every value it renders comes from one of these
 * response payloads, never from client-side recomputation of transforms.
 */

export interface FieldValue {
  key: string;
  value: string;
  language?: string;
  target?: string;
}

export interface RecordNode {
  local_id: string;
  parent_ref?: string;
  level?: string;
  language?: string;
  fields: FieldValue[];
  children: RecordNode[];
}

export interface StageRun {
  index: number;
  kind: string;
  cache_hit: boolean;
  duration_ms: number;
  input_count: number;
  output_count: number;
  warnings: string[];
}

export interface PreviewResponse {
  records: RecordNode[];
  ead: string[];
  trace: { stages: StageRun[] };
}

export interface AuditEntry {
  instant: string;
  actor: string;
  action: string;
}

export interface DatasetPayload {
  id: string;
  repository_id: string;
  parent_scope: string | null;
  status: string;
  mapping_text: string | null;
  has_files: boolean;
  has_records: boolean;
  audit: AuditEntry[];
}

export interface FieldChange {
  path: string;
  before: unknown;
  after: unknown;
}

export interface DiffResponse {
  dataset_id: string;
  staging_digest: string;
  production_digest: string;
  created: string[];
  deleted: string[];
  updated: { global_id: string; changes: FieldChange[] }[];
}

export interface JobPayload {
  id: string;
  dataset_id: string;
  stage: string;
  status: "queued" | "running" | "done" | "failed";
  report: Record<string, unknown> | null;
  error: string | null;
}

export interface PromotionReport {
  dataset_id: string;
  created: number;
  updated: number;
  unchanged: number;
  deleted: number;
  blocked: string[];
  warnings: string[];
}

/** Error shape for mapping-table problems: row-anchored so the editor can point at it. */
export class MappingTextError extends Error {
  constructor(
    message: string,
    readonly row: number | null,
    readonly expression: string | null,
  ) {
    super(message);
  }
}

export class ApiError extends Error {
  constructor(message: string, readonly status: number, readonly body: unknown) {
    super(message);
  }
}

type FetchLike = typeof fetch;

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly actor: string = "reviewer",
    private readonly fetchImpl: FetchLike = fetch,
  ) {}

  private async request<T>(method: string, path: string, body?: unknown, signal?: AbortSignal): Promise<T> {
    const resp = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers: {
        "Content-Type": "application/json",
        "X-Actor": this.actor,
      },
      body: body === undefined ? undefined : JSON.stringify(body),
      signal,
    });
    const text = await resp.text();
    const payload = text ? JSON.parse(text) : null;
    if (!resp.ok) {
      if (resp.status === 422 && payload && typeof payload.row === "number") {
        throw new MappingTextError(payload.error, payload.row, payload.expression ?? null);
      }
      const message = payload?.error ?? `HTTP ${resp.status}`;
      throw new ApiError(message, resp.status, payload);
    }
    return payload as T;
  }

  listDatasets(): Promise<DatasetPayload[]> {
    return this.request("GET", "/datasets");
  }

  getDataset(id: string): Promise<DatasetPayload> {
    return this.request("GET", `/datasets/${encodeURIComponent(id)}`);
  }

  preview(id: string, limit: number, mappingText?: string, signal?: AbortSignal): Promise<PreviewResponse> {
    const body = mappingText === undefined ? {} : { mapping_text: mappingText };
    return this.request("POST", `/datasets/${encodeURIComponent(id)}/preview?limit=${limit}`, body, signal);
  }

  diff(id: string): Promise<DiffResponse> {
    return this.request("GET", `/datasets/${encodeURIComponent(id)}/diff`);
  }

  approve(id: string): Promise<DatasetPayload> {
    return this.request("POST", `/datasets/${encodeURIComponent(id)}/approve`);
  }

  promote(id: string): Promise<PromotionReport> {
    return this.request("POST", `/datasets/${encodeURIComponent(id)}/promote`);
  }

  runStage(id: string, stage: "fetch" | "transform" | "ingest"): Promise<JobPayload> {
    return this.request("POST", `/datasets/${encodeURIComponent(id)}/${stage}`, {});
  }

  getJob(jobId: string): Promise<JobPayload> {
    return this.request("GET", `/jobs/${encodeURIComponent(jobId)}`);
  }
}
