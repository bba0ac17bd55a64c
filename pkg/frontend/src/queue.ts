// Alert queue view model. The service already returns alerts in its
// documented order (priority desc, then created_at, then id); the UI keeps
// that order untouched — sorting client-side would let the views disagree.

import type { AlertListPayload, AlertStatus } from './types.js';

export interface QueueRow {
  alertId: string;
  sessionId: string;
  priority: number;
  priorityLabel: string;
  reasons: string[];
  ifFlagged: boolean;
  status: AlertStatus;
  createdAt: string;
}

export type QueueState =
  | { kind: 'loading' }
  | { kind: 'empty' }
  | { kind: 'error'; message: string; retry: true }
  | { kind: 'ready'; rows: QueueRow[]; total: number };

export function buildQueueView(payload: AlertListPayload): QueueState {
  if (payload.alerts.length === 0) {
    return { kind: 'empty' };
  }
  const rows = payload.alerts.map((a) => ({
    alertId: a.alert_id,
    sessionId: a.session_id,
    priority: a.priority,
    priorityLabel: a.priority.toFixed(3),
    reasons: a.reasons,
    ifFlagged: a.if_flagged,
    status: a.status,
    createdAt: a.created_at,
  }));
  return { kind: 'ready', rows, total: payload.total };
}

export function queueErrorView(err: unknown): QueueState {
  const message = err instanceof Error ? err.message : String(err);
  return { kind: 'error', message, retry: true };
}

/** Update one row's status in place after a successful disposition. */
export function applyStatusChange(state: QueueState, alertId: string, status: AlertStatus): QueueState {
  if (state.kind !== 'ready') return state;
  return {
    ...state,
    rows: state.rows.map((r) => (r.alertId === alertId ? { ...r, status } : r)),
  };
}
