// Typed client for the review service. Every mutation the UI performs goes
// through one of these methods, so the endpoint inventory below is the whole
// write surface.

import type {
  AssetSlot,
  RatingResponse,
  TaskPage,
  TaskStatus,
  TaskView,
  ValidationDetail,
} from './types';

export class AuthError extends Error {
  constructor(message = 'missing or invalid bearer token') {
    super(message);
    this.name = 'AuthError';
  }
}

export class ValidationError extends Error {
  readonly detail: ValidationDetail;
  constructor(detail: ValidationDetail) {
    super(detail.message);
    this.name = 'ValidationError';
    this.detail = detail;
  }
}

export class ConflictError extends Error {
  constructor(message: string) {
    super(message);
    this.name = 'ConflictError';
  }
}

export class NetworkError extends Error {
  constructor(message: string) {
    super(message);
    this.name = 'NetworkError';
  }
}

export class ApiError extends Error {
  readonly status: number;
  constructor(status: number, message: string) {
    super(message);
    this.name = 'ApiError';
    this.status = status;
  }
}

type FetchLike = typeof fetch;

export interface ClientConfig {
  baseUrl: string;
  token?: string;
  fetchImpl?: FetchLike;
}

function detailMessage(body: unknown): string {
  if (body && typeof body === 'object' && 'detail' in body) {
    const detail = (body as { detail: unknown }).detail;
    if (typeof detail === 'string') return detail;
    if (detail && typeof detail === 'object' && 'message' in detail) {
      return String((detail as { message: unknown }).message);
    }
    return JSON.stringify(detail);
  }
  return JSON.stringify(body);
}

export class ReviewApiClient {
  private readonly baseUrl: string;
  private readonly token: string;
  private readonly fetchImpl: FetchLike;

  constructor(config: ClientConfig) {
    this.baseUrl = config.baseUrl.replace(/\/+$/, '');
    this.token = config.token ?? '';
    this.fetchImpl = config.fetchImpl ?? fetch;
  }

  private headers(json: boolean): Record<string, string> {
    const headers: Record<string, string> = {};
    if (json) headers['Content-Type'] = 'application/json';
    if (this.token) headers['Authorization'] = `Bearer ${this.token}`;
    return headers;
  }

  private async request<T>(method: 'GET' | 'POST', path: string, body?: unknown): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchImpl(`${this.baseUrl}${path}`, {
        method,
        headers: this.headers(body !== undefined),
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new NetworkError(`cannot reach the review service: ${String(err)}`);
    }
    if (response.status === 401) throw new AuthError();
    if (response.status === 422) {
      const payload = (await response.json()) as { detail: ValidationDetail | string };
      const detail =
        typeof payload.detail === 'string'
          ? { code: 'validation', message: payload.detail }
          : payload.detail;
      throw new ValidationError(detail);
    }
    if (response.status === 409) {
      const payload = await response.json().catch(() => ({}));
      throw new ConflictError(detailMessage(payload));
    }
    if (!response.ok) {
      const payload = await response.json().catch(() => ({}));
      throw new ApiError(response.status, detailMessage(payload));
    }
    return (await response.json()) as T;
  }

  listTasks(status?: TaskStatus, page = 1, pageSize = 20): Promise<TaskPage> {
    const params = new URLSearchParams({ page: String(page), page_size: String(pageSize) });
    if (status) params.set('status', status);
    return this.request<TaskPage>('GET', `/tasks?${params.toString()}`);
  }

  getTask(sampleId: string): Promise<TaskView> {
    return this.request<TaskView>('GET', `/tasks/${encodeURIComponent(sampleId)}`);
  }

  claimTask(sampleId: string, actorId: string): Promise<TaskView> {
    return this.request<TaskView>('POST', `/tasks/${encodeURIComponent(sampleId)}/claim`, {
      actor_id: actorId,
    });
  }

  submitEdit(sampleId: string, actorId: string, text: string): Promise<TaskView> {
    return this.request<TaskView>('POST', `/tasks/${encodeURIComponent(sampleId)}/edit`, {
      actor_id: actorId,
      text,
    });
  }

  approveTask(sampleId: string, actorId: string): Promise<TaskView> {
    return this.request<TaskView>('POST', `/tasks/${encodeURIComponent(sampleId)}/approve`, {
      actor_id: actorId,
    });
  }

  submitRating(
    sampleId: string,
    evaluatorId: string,
    quality: number,
    informativeness: number,
    correctness: number,
  ): Promise<RatingResponse> {
    return this.request<RatingResponse>(
      'POST',
      `/tasks/${encodeURIComponent(sampleId)}/rating`,
      { evaluator_id: evaluatorId, quality, informativeness, correctness },
    );
  }

  assetUrl(sampleId: string, slot: AssetSlot): string {
    return `${this.baseUrl}/tasks/${encodeURIComponent(sampleId)}/assets/${slot}`;
  }
}
