// Payload shapes of the triage service API. The UI displays these verbatim:
// it never rescoring or re-derives a number the service already computed.

export type AlertStatus = 'Open' | 'InReview' | 'Closed';
export type Outcome = 'ConfirmedMisuse' | 'Benign' | 'NeedsInfo';

export interface AlertSummary {
  alert_id: string;
  session_id: string;
  priority: number;
  reasons: string[];
  if_flagged: boolean;
  status: AlertStatus;
  created_at: string;
}

export interface AlertListPayload {
  alerts: AlertSummary[];
  total: number;
  limit: number;
  offset: number;
}

export interface Explanation {
  feature_phis: Record<string, number>;
  base_value: number;
  model_output: number;
  feature_values: Record<string, number>;
  target: string;
}

export interface DispositionRecord {
  alert_id: string;
  outcome: Outcome;
  rationale: string;
  reviewer_id: string;
  decided_at: string;
}

export interface AlertDetail {
  alert_id: string;
  session: Record<string, unknown> & { session_id: string };
  features: Record<string, number | boolean>;
  rule_verdict: { flagged: boolean; reasons: string[] };
  if_score: { score: number; mean_path_length: number; flagged: boolean } | null;
  explanation: Explanation | null;
  priority: number;
  status: AlertStatus;
  created_at: string;
  threshold_version: number;
  dispositions: DispositionRecord[];
  narrative: string | null;
}

export interface Thresholds {
  post_discharge_days_max: number;
  off_hours_start: number;
  off_hours_end: number;
  day_shift_roles: string[];
  duration_min_sec: number;
  duration_max_sec: number;
  repeat_count_min: number;
  version: number;
  changed_by: string;
  change_reason: string;
}

export interface ThresholdsPayload {
  thresholds: Thresholds;
  version: number;
}

export interface ThresholdChangeRecord {
  prior: Thresholds;
  next: Thresholds;
  reason: string;
  approved_by: string;
  applied_at: string;
}

export interface ImportancePayload {
  ranking: { feature: string; mean_abs_phi: number }[];
}

export interface DashboardPayload {
  alert_volume: number;
  open_count: number;
  precision_proxy: number;
  median_time_to_triage_seconds: number;
  disposition_coverage: number;
  ingested_sessions: number;
  drift: { available: boolean; psi: Record<string, number> };
  flags: string[];
}

export interface ApiError {
  status: number;
  error: string;
  current_version?: number;
}
