import type { AnnotationTask, Label, RunStatus, SubmitResult } from './types';

/** Error carrying the HTTP status so callers can branch on 404/409/422. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = 'ApiError';
  }
}

export interface ApiClientOptions {
  baseUrl: string;
  runId: string;
  fetchFn?: typeof fetch;
}

/**
 * Thin typed client over the service endpoints. No caching, no retries:
 * the poller re-fetches on its own cadence and submission errors are
 * surfaced to the queue store for rollback.
 */
export class ApiClient {
  private readonly baseUrl: string;
  private readonly runId: string;
  private readonly fetchFn: typeof fetch;

  constructor(options: ApiClientOptions) {
    this.baseUrl = options.baseUrl.replace(/\/$/, '');
    this.runId = options.runId;
    this.fetchFn = options.fetchFn ?? fetch.bind(globalThis);
  }

  async getStatus(): Promise<RunStatus> {
    return this.get<RunStatus>(`/runs/${this.runId}/status`);
  }

  async getTasks(): Promise<AnnotationTask[]> {
    return this.get<AnnotationTask[]>(`/runs/${this.runId}/tasks`);
  }

  async submitLabel(recordId: string, label: Label, annotator: string): Promise<SubmitResult> {
    const response = await this.fetchFn(
      `${this.baseUrl}/runs/${this.runId}/tasks/${encodeURIComponent(recordId)}/label`,
      {
        method: 'POST',
        headers: { 'Content-Type': 'application/json' },
        body: JSON.stringify({ label, annotator }),
      },
    );
    if (!response.ok) {
      throw new ApiError(response.status, await safeErrorText(response));
    }
    return (await response.json()) as SubmitResult;
  }

  private async get<T>(path: string): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`);
    if (!response.ok) {
      throw new ApiError(response.status, await safeErrorText(response));
    }
    return (await response.json()) as T;
  }
}

async function safeErrorText(response: Response): Promise<string> {
  try {
    const body = (await response.json()) as { error?: string; detail?: unknown };
    if (typeof body.error === 'string') return body.error;
    if (body.detail !== undefined) return JSON.stringify(body.detail);
    return response.statusText;
  } catch {
    return response.statusText;
  }
}
