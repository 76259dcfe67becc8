// Typed client for the femurseg HTTP service. The UI is a thin client:
// every image operation happens server-side and previews are fetched as
// PNGs by digest, never recomputed here.

export interface ParamSchema {
  type: "number" | "string" | "coords";
  required: boolean;
  default: unknown;
  choices: string[] | null;
}

export interface OpSchema {
  doc: string;
  params: Record<string, ParamSchema>;
}

export interface SeriesInfo {
  session: string;
  slices: number;
  rows: number;
  cols: number;
}

export interface StageSpec {
  op: string;
  params: Record<string, unknown>;
  enabled: boolean;
}

export interface PipelineSpec {
  name: string;
  stages: StageSpec[];
}

export interface StageResult {
  index: number;
  op: string;
  digest: string;
  cache_hit: boolean;
  preview: string;
}

export interface RunResult {
  input: string;
  input_preview: string;
  stages: StageResult[];
  output: string;
  executed: number;
}

export interface ServiceError {
  code: string;
  message: string;
  detail: { stage?: number; [key: string]: unknown };
}

export interface JobState {
  job: string;
  state: "queued" | "running" | "done" | "failed";
  error?: ServiceError;
  result?: { delineation: string; overlays: string };
}

export interface PairItem {
  id: string;
  delineation: string;
  overlays: string;
}

export interface PairDescriptor {
  pair: string;
  items: PairItem[];
}

export class ApiError extends Error {
  constructor(public status: number, public body: ServiceError) {
    super(body.message);
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const response = await fetch(url, init);
  if (!response.ok) {
    let body: ServiceError;
    try {
      body = (await response.json()) as ServiceError;
    } catch {
      body = { code: "HttpError", message: `${response.status}`, detail: {} };
    }
    throw new ApiError(response.status, body);
  }
  return (await response.json()) as T;
}

export class Api {
  constructor(public base = "") {}

  async ops(): Promise<Record<string, OpSchema>> {
    const doc = await request<{ ops: Record<string, OpSchema> }>(`${this.base}/ops`);
    return doc.ops;
  }

  async uploadZip(data: Blob): Promise<SeriesInfo> {
    return request<SeriesInfo>(`${this.base}/series`, {
      method: "POST",
      headers: { "content-type": "application/zip" },
      body: data,
    });
  }

  async seriesInfo(sid: string): Promise<SeriesInfo & { digest: string }> {
    return request(`${this.base}/series/${sid}`);
  }

  slicePngUrl(sid: string, index: number, w = 400, l = 40): string {
    return `${this.base}/series/${sid}/slices/${index}.png?w=${w}&l=${l}`;
  }

  async savePipeline(sid: string, spec: PipelineSpec): Promise<{ name: string }> {
    return request(`${this.base}/series/${sid}/pipelines`, {
      method: "POST",
      body: JSON.stringify(spec),
    });
  }

  async fetchPipeline(sid: string, name: string): Promise<PipelineSpec> {
    return request(`${this.base}/series/${sid}/pipelines/${name}`);
  }

  async run(sid: string, spec: PipelineSpec, slice: number): Promise<RunResult> {
    return request(`${this.base}/series/${sid}/run`, {
      method: "POST",
      body: JSON.stringify({ pipeline: spec, slice }),
    });
  }

  async delineate(sid: string, params: Record<string, unknown>): Promise<string> {
    const doc = await request<{ job: string }>(`${this.base}/series/${sid}/delineate`, {
      method: "POST",
      body: JSON.stringify({ params }),
    });
    return doc.job;
  }

  async job(jid: string): Promise<JobState> {
    return request(`${this.base}/jobs/${jid}`);
  }

  async waitForJob(jid: string, pollMs = 500, timeoutMs = 300000): Promise<JobState> {
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      const state = await this.job(jid);
      if (state.state === "done" || state.state === "failed") return state;
      if (Date.now() > deadline) throw new Error(`job ${jid} timed out`);
      await new Promise((resolve) => setTimeout(resolve, pollMs));
    }
  }

  async delineation(url: string): Promise<DelineationDoc> {
    return request(url.startsWith("http") ? url : `${this.base}${url}`);
  }

  overlayUrl(template: string, index: number): string {
    const path = template.replace("{index}", String(index));
    return path.startsWith("http") ? path : `${this.base}${path}`;
  }

  async compare(left: CompareRef, right: CompareRef, shuffle = true,
                nonce?: number): Promise<PairDescriptor> {
    const body: Record<string, unknown> = { left, right, shuffle };
    if (nonce !== undefined) body.nonce = nonce;
    return request(`${this.base}/compare`, {
      method: "POST",
      body: JSON.stringify(body),
    });
  }

  async verdict(pair: string, vote: VerdictBody): Promise<void> {
    await request(`${this.base}/compare/${pair}/verdict`, {
      method: "POST",
      body: JSON.stringify(vote),
    });
  }

  votesCsvUrl(sid: string): string {
    return `${this.base}/series/${sid}/votes.csv`;
  }

  async votesCsv(sid: string): Promise<string> {
    const response = await fetch(this.votesCsvUrl(sid));
    if (!response.ok) throw new ApiError(response.status, {
      code: "HttpError", message: `${response.status}`, detail: {},
    });
    return response.text();
  }
}

export interface CompareRef {
  session: string;
  job: string;
  source?: string;
}

export interface DelineationSlice {
  index: number;
  z_mm: number;
  region: "proximal" | "medial" | "distal";
  points_px: number[][];
  points_mm: number[][];
}

export interface DelineationDoc {
  v: number;
  side: string;
  volume_digest: string;
  slices: DelineationSlice[];
}

export interface VerdictBody {
  survey: "one" | "two";
  rater: string;
  region: string;
  verdict: string;
  position?: number;
}
