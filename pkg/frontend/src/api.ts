// Thin typed client over the service's JSON API. Errors carry the server's
// message verbatim; nothing is retried silently and nothing is fabricated.

import type {
  AlertDetail,
  AlertListPayload,
  ApiError,
  DashboardPayload,
  ImportancePayload,
  Outcome,
  ThresholdChangeRecord,
  Thresholds,
  ThresholdsPayload,
} from './types.js';

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiRequestError extends Error {
  readonly status: number;
  readonly currentVersion?: number;

  constructor(status: number, message: string, currentVersion?: number) {
    super(message);
    this.status = status;
    this.currentVersion = currentVersion;
  }
}

export interface QueueFilters {
  status?: string;
  min_score?: number;
  limit?: number;
  offset?: number;
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (u, i) => fetch(u, i),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    const body = await response.json().catch(() => ({}));
    if (!response.ok) {
      const err = body as Partial<ApiError>;
      throw new ApiRequestError(
        response.status,
        err.error ?? `request failed with status ${response.status}`,
        err.current_version,
      );
    }
    return body as T;
  }

  listAlerts(filters: QueueFilters = {}): Promise<AlertListPayload> {
    const params = new URLSearchParams();
    if (filters.status) params.set('status', filters.status);
    if (filters.min_score !== undefined) params.set('min_score', String(filters.min_score));
    if (filters.limit !== undefined) params.set('limit', String(filters.limit));
    if (filters.offset !== undefined) params.set('offset', String(filters.offset));
    const qs = params.toString();
    return this.request<AlertListPayload>(`/alerts${qs ? `?${qs}` : ''}`);
  }

  getAlert(alertId: string): Promise<AlertDetail> {
    return this.request<AlertDetail>(`/alerts/${encodeURIComponent(alertId)}`);
  }

  submitDisposition(
    alertId: string,
    outcome: Outcome,
    rationale: string,
    reviewerId: string,
  ): Promise<{ disposition: unknown; alert_status: string }> {
    return this.request(`/alerts/${encodeURIComponent(alertId)}/disposition`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ outcome, rationale, reviewer_id: reviewerId }),
    });
  }

  getThresholds(): Promise<ThresholdsPayload> {
    return this.request<ThresholdsPayload>('/config/thresholds');
  }

  putThresholds(
    thresholds: Omit<Thresholds, 'version' | 'changed_by' | 'change_reason'>,
    reason: string,
    approvedBy: string,
    priorVersion: number,
  ): Promise<{ change: ThresholdChangeRecord; version: number }> {
    return this.request('/config/thresholds', {
      method: 'PUT',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({
        thresholds,
        reason,
        approved_by: approvedBy,
        prior_version: priorVersion,
      }),
    });
  }

  getChanges(): Promise<{ changes: ThresholdChangeRecord[] }> {
    return this.request('/config/changes');
  }

  getGlobalImportance(): Promise<ImportancePayload> {
    return this.request<ImportancePayload>('/explain/global');
  }

  getDashboard(): Promise<DashboardPayload> {
    return this.request<DashboardPayload>('/metrics/dashboard');
  }

  getReadinessReport(): Promise<unknown> {
    return this.request('/readiness/report');
  }
}
