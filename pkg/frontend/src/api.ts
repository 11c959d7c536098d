// Typed client for the pipeline service. Every byte of server state the UI
// shows goes through this module, and every call is recorded so a session
// can be replayed from its log.

export interface DatasetMeta {
  id: string;
  format: string;
  type: string;
  dims: number[];
  title?: string;
  arrays?: { name: string; components: number }[];
  bytes: number;
}

export interface ModelMeta {
  id: string;
  kind: string;
  input_shape: number[];
  linear_widths: number[];
  parameters: number;
  n_labels: number;
  labels?: string[];
  bytes: number;
}

export interface ParamSchema {
  name: string;
  type: string;
  required: boolean;
  default: unknown;
}

export interface FilterSchema {
  name: string;
  params: ParamSchema[];
  input_types: string[];
  output_types: string[];
}

export interface JobInfo {
  id: string;
  kind: string;
  status: "queued" | "running" | "done" | "failed";
  progress: number;
  result: Record<string, unknown> | null;
  error: string | null;
}

export interface PipelineNodeDoc {
  id: string;
  kind: "source" | "filter";
  dataset?: string;
  filter_type?: string;
  params?: Record<string, unknown>;
}

export interface PipelineDoc {
  id: string;
  nodes: PipelineNodeDoc[];
  edges: [string, string][];
}

export interface TablePayload {
  columns: { name: string; values: (number | string)[] }[];
}

export interface RecordedCall {
  method: string;
  path: string;
}

export class ApiError extends Error {
  constructor(readonly status: number, detail: string) {
    super(detail);
  }
}

async function failure(res: Response): Promise<ApiError> {
  let detail = `${res.status} ${res.statusText}`;
  try {
    const body = await res.json();
    if (body && typeof body.detail === "string") detail = body.detail;
  } catch {
    // non-JSON error body; keep the status line
  }
  return new ApiError(res.status, detail);
}

export class ApiClient {
  readonly log: RecordedCall[] = [];

  constructor(readonly base: string = "") {}

  private async request(method: string, path: string, body?: BodyInit): Promise<Response> {
    this.log.push({ method, path });
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.body = body;
      if (typeof body === "string") {
        init.headers = { "content-type": "application/json" };
      }
    }
    const res = await fetch(this.base + path, init);
    if (!res.ok) throw await failure(res);
    return res;
  }

  private async getJson<T>(path: string): Promise<T> {
    return (await this.request("GET", path)).json();
  }

  health(): Promise<{ status: string }> {
    return this.getJson("/api/health");
  }

  listDatasets(): Promise<DatasetMeta[]> {
    return this.getJson("/api/datasets");
  }

  dataset(id: string): Promise<DatasetMeta> {
    return this.getJson(`/api/datasets/${encodeURIComponent(id)}`);
  }

  async uploadDataset(name: string, contents: BodyInit): Promise<{ id: string }> {
    const res = await this.request(
      "POST",
      `/api/datasets?name=${encodeURIComponent(name)}`,
      contents,
    );
    return res.json();
  }

  listModels(): Promise<ModelMeta[]> {
    return this.getJson("/api/models");
  }

  listFilters(): Promise<FilterSchema[]> {
    return this.getJson("/api/filters");
  }

  listTransferFunctions(): Promise<{ name: string }[]> {
    return this.getJson("/api/transfer-functions");
  }

  async simulate(config: Record<string, unknown>): Promise<JobInfo> {
    const res = await this.request("POST", "/api/simulate", JSON.stringify(config));
    return res.json();
  }

  async train(config: Record<string, unknown>): Promise<JobInfo> {
    const res = await this.request("POST", "/api/train", JSON.stringify(config));
    return res.json();
  }

  listJobs(): Promise<JobInfo[]> {
    return this.getJson("/api/jobs");
  }

  job(id: string): Promise<JobInfo> {
    return this.getJson(`/api/jobs/${encodeURIComponent(id)}`);
  }

  async createPipeline(
    nodes: PipelineNodeDoc[],
    edges: [string, string][],
  ): Promise<{ id: string }> {
    const res = await this.request(
      "POST",
      "/api/pipelines",
      JSON.stringify({ nodes, edges }),
    );
    return res.json();
  }

  pipeline(id: string): Promise<PipelineDoc> {
    return this.getJson(`/api/pipelines/${encodeURIComponent(id)}`);
  }

  async patchParams(
    pid: string,
    nid: string,
    params: Record<string, unknown>,
  ): Promise<{ id: string; params: Record<string, unknown> }> {
    const res = await this.request(
      "PATCH",
      `/api/pipelines/${encodeURIComponent(pid)}/nodes/${encodeURIComponent(nid)}/params`,
      JSON.stringify(params),
    );
    return res.json();
  }

  async patchSource(pid: string, nid: string, dataset: string): Promise<void> {
    await this.request(
      "PATCH",
      `/api/pipelines/${encodeURIComponent(pid)}/nodes/${encodeURIComponent(nid)}/source`,
      JSON.stringify({ dataset }),
    );
  }

  table(pid: string, nid: string): Promise<TablePayload> {
    return this.getJson(
      `/api/pipelines/${encodeURIComponent(pid)}/nodes/${encodeURIComponent(nid)}/table`,
    );
  }

  // Render views load through <img src>; rev is a cache-buster bumped after
  // every mutation so stale bitmaps are never reused.
  renderUrl(
    pid: string,
    nid: string,
    rev: number,
    opts: { array?: string; tf?: string; range?: string; w?: number; h?: number } = {},
  ): string {
    const q = new URLSearchParams({ rev: String(rev) });
    if (opts.array) q.set("array", opts.array);
    if (opts.tf) q.set("tf", opts.tf);
    if (opts.range) q.set("range", opts.range);
    if (opts.w !== undefined && opts.h !== undefined) {
      q.set("w", String(opts.w));
      q.set("h", String(opts.h));
    }
    return (
      `${this.base}/api/pipelines/${encodeURIComponent(pid)}` +
      `/nodes/${encodeURIComponent(nid)}/render?${q.toString()}`
    );
  }
}
