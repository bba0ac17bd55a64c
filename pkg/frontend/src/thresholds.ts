// Threshold editor state: optimistic versioning with conflicts surfaced,
// never silently retried. Submit requires a non-empty reason and approver.

import type { ThresholdChangeRecord, Thresholds, ThresholdsPayload } from './types.js';

export interface EditableThresholds {
  post_discharge_days_max: number;
  off_hours_start: number;
  off_hours_end: number;
  day_shift_roles: string[];
  duration_min_sec: number;
  duration_max_sec: number;
  repeat_count_min: number;
}

export interface EditorState {
  current: Thresholds;
  version: number;
  draft: EditableThresholds;
  reason: string;
  approvedBy: string;
  conflict: { message: string; currentVersion: number | null } | null;
  error: string | null;
  history: ThresholdChangeRecord[];
}

export function initEditor(payload: ThresholdsPayload, history: ThresholdChangeRecord[]): EditorState {
  const t = payload.thresholds;
  return {
    current: t,
    version: payload.version,
    draft: {
      post_discharge_days_max: t.post_discharge_days_max,
      off_hours_start: t.off_hours_start,
      off_hours_end: t.off_hours_end,
      day_shift_roles: [...t.day_shift_roles],
      duration_min_sec: t.duration_min_sec,
      duration_max_sec: t.duration_max_sec,
      repeat_count_min: t.repeat_count_min,
    },
    reason: '',
    approvedBy: '',
    conflict: null,
    error: null,
    history,
  };
}

/** Submit is disabled while the mandatory reason (or approver) is empty. */
export function canSubmitChange(state: EditorState): boolean {
  return state.reason.trim().length > 0 && state.approvedBy.trim().length > 0;
}

export function applySuccess(
  state: EditorState,
  result: { change: ThresholdChangeRecord; version: number },
): EditorState {
  return {
    ...state,
    current: result.change.next,
    version: result.version,
    reason: '',
    approvedBy: '',
    conflict: null,
    error: null,
    history: [...state.history, result.change],
  };
}

/** A 409 means someone else changed the thresholds first: show, never retry. */
export function applyConflict(state: EditorState, message: string, currentVersion?: number): EditorState {
  return {
    ...state,
    conflict: { message, currentVersion: currentVersion ?? null },
  };
}

export function applyRejection(state: EditorState, message: string): EditorState {
  return { ...state, error: message };
}
