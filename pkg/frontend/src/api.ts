// Typed client for the prediction service. A request token discards
// stale responses when the user resubmits before the last call returns.

import type { ExplainResponse, ModelInfo, PredictRequest, PredictResponse } from './types.js';

export class ApiFailure extends Error {
  status: number;
  fields: { field: string; message: string }[];

  constructor(status: number, fields: { field: string; message: string }[], message: string) {
    super(message);
    this.status = status;
    this.fields = fields;
  }
}

async function throwFailure(res: Response): Promise<never> {
  let fields: { field: string; message: string }[] = [];
  let message = `server responded ${res.status}`;
  try {
    const body = await res.json();
    if (Array.isArray(body.detail)) {
      fields = body.detail;
      message = fields.map((f) => `${f.field}: ${f.message}`).join('; ');
    } else if (typeof body.detail === 'string') {
      message = body.detail;
    }
  } catch {
    // non-JSON body: keep the generic message
  }
  throw new ApiFailure(res.status, fields, message);
}

export class PredictionClient {
  private base: string;
  private fetchFn: typeof fetch;
  private token = 0;

  constructor(base = '', fetchFn: typeof fetch = fetch) {
    this.base = base.replace(/\/$/, '');
    this.fetchFn = fetchFn;
  }

  /** Stale-response guard: resolves null if a newer predict() was issued. */
  async predict(request: PredictRequest): Promise<PredictResponse | null> {
    const myToken = ++this.token;
    const res = await this.fetchFn(`${this.base}/predict`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(request),
    });
    if (myToken !== this.token) return null;
    if (!res.ok) await throwFailure(res);
    return (await res.json()) as PredictResponse;
  }

  async explain(request: Omit<PredictRequest, 'days'>): Promise<ExplainResponse> {
    const res = await this.fetchFn(`${this.base}/explain`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(request),
    });
    if (!res.ok) await throwFailure(res);
    return (await res.json()) as ExplainResponse;
  }

  async modelInfo(): Promise<ModelInfo> {
    const res = await this.fetchFn(`${this.base}/model`);
    if (!res.ok) await throwFailure(res);
    return (await res.json()) as ModelInfo;
  }
}
