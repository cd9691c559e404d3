// Typed client for the colorization service JSON API.

export interface HintWire {
  x: number;
  y: number;
  r: number;
  g: number;
  b: number;
}

export interface ColorizeOptions {
  caption?: string;
  negative?: string;
  hints?: HintWire[];
  steps?: number;
  guidance?: number;
  seed?: number;
  variants?: number;
}

export interface JobResultWire {
  images: string[];
  seeds: number[];
}

export interface JobWire {
  id: string;
  status: 'queued' | 'running' | 'done' | 'failed';
  error: string | null;
  result: JobResultWire | null;
}

export interface ModelsInfo {
  hashes: Record<string, string>;
  resolution: number;
  f: number;
  supports: string[];
}

export interface SuperpixelInfo {
  region_count: number;
  width: number;
  height: number;
  label_map_png: string;
  visualization_png: string;
  centroids: [number, number][];
}

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
    public field?: string,
  ) {
    super(message);
  }
}

async function throwApiError(resp: Response): Promise<never> {
  let message = `${resp.status}`;
  let field: string | undefined;
  try {
    const body = await resp.json();
    message = body.error ?? message;
    field = body.field;
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(resp.status, message, field);
}

export class ServiceClient {
  constructor(
    private baseUrl = '',
    private fetchFn: typeof fetch = fetch,
  ) {}

  async models(): Promise<ModelsInfo> {
    const resp = await this.fetchFn(`${this.baseUrl}/v1/models`);
    if (!resp.ok) await throwApiError(resp);
    return resp.json();
  }

  /** Submit a colorization job; resolves to the job id (202) or throws ApiError. */
  async submitColorize(image: Blob, optionsJson: string): Promise<string> {
    const form = new FormData();
    form.append('image', image, 'input.png');
    form.append('options', optionsJson);
    const resp = await this.fetchFn(`${this.baseUrl}/v1/colorize`, {
      method: 'POST',
      body: form,
    });
    if (resp.status !== 202) await throwApiError(resp);
    const body = await resp.json();
    return body.job_id;
  }

  async getJob(jobId: string): Promise<JobWire> {
    const resp = await this.fetchFn(`${this.baseUrl}/v1/jobs/${jobId}`);
    if (!resp.ok) await throwApiError(resp);
    return resp.json();
  }

  async superpixels(image: Blob, nSegments = 64): Promise<SuperpixelInfo> {
    const form = new FormData();
    form.append('image', image, 'input.png');
    form.append('n_segments', String(nSegments));
    const resp = await this.fetchFn(`${this.baseUrl}/v1/superpixels`, {
      method: 'POST',
      body: form,
    });
    if (!resp.ok) await throwApiError(resp);
    return resp.json();
  }

  resultUrl(path: string): string {
    return `${this.baseUrl}${path}`;
  }
}

/** Poll a job every intervalMs until done/failed. */
export async function pollJob(
  client: ServiceClient,
  jobId: string,
  intervalMs = 1000,
  onUpdate?: (job: JobWire) => void,
  maxAttempts = 600,
): Promise<JobWire> {
  for (let attempt = 0; attempt < maxAttempts; attempt += 1) {
    const job = await client.getJob(jobId);
    onUpdate?.(job);
    if (job.status === 'done') return job;
    if (job.status === 'failed') throw new ApiError(500, job.error ?? 'job failed');
    await new Promise((resolve) => setTimeout(resolve, intervalMs));
  }
  throw new ApiError(504, 'job polling timed out');
}
