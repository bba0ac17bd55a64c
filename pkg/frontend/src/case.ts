// Case view: attribution waterfall plus the disposition form state machine.
// The waterfall only rearranges numbers the service sent; the displayed
// residual is the service's own additivity check and must stay below 1e-4.

import type { AlertDetail, Outcome } from './types.js';

export interface WaterfallSegment {
  label: string;
  value: number; // signed contribution (bar length)
  start: number; // running level before this segment
  end: number;   // running level after
  kind: 'base' | 'positive' | 'negative' | 'output';
}

export interface CaseView {
  alertId: string;
  sessionId: string;
  status: string;
  reasons: string[];
  score: number | null;
  narrative: string | null;
  waterfall: WaterfallSegment[];
  residual: number | null;
  residualOk: boolean;
  dispositions: { outcome: string; rationale: string; reviewer: string; decidedAt: string }[];
  featureValues: Record<string, number>;
}

export const RESIDUAL_LIMIT = 1e-4;

export function buildCaseView(detail: AlertDetail): CaseView {
  const segments: WaterfallSegment[] = [];
  let residual: number | null = null;

  if (detail.explanation) {
    const e = detail.explanation;
    let level = e.base_value;
    segments.push({ label: 'base', value: e.base_value, start: 0, end: level, kind: 'base' });
    // largest |phi| first so the picture reads top-down
    const entries = Object.entries(e.feature_phis).sort(
      (a, b) => Math.abs(b[1]) - Math.abs(a[1]),
    );
    for (const [feature, phi] of entries) {
      segments.push({
        label: feature,
        value: phi,
        start: level,
        end: level + phi,
        kind: phi >= 0 ? 'positive' : 'negative',
      });
      level += phi;
    }
    segments.push({
      label: 'model output',
      value: e.model_output,
      start: 0,
      end: e.model_output,
      kind: 'output',
    });
    residual = e.model_output - level;
  }

  return {
    alertId: detail.alert_id,
    sessionId: detail.session.session_id,
    status: detail.status,
    reasons: detail.rule_verdict.reasons,
    score: detail.if_score ? detail.if_score.score : null,
    narrative: detail.narrative,
    waterfall: segments,
    residual,
    residualOk: residual === null || Math.abs(residual) < RESIDUAL_LIMIT,
    dispositions: detail.dispositions.map((d) => ({
      outcome: d.outcome,
      rationale: d.rationale,
      reviewer: d.reviewer_id,
      decidedAt: d.decided_at,
    })),
    featureValues: detail.explanation?.feature_values ?? {},
  };
}

// -- disposition form ---------------------------------------------------------

export interface DispositionForm {
  outcome: Outcome;
  rationale: string;
  reviewerId: string;
}

/** The submit button stays disabled until every mandatory field has content. */
export function canSubmitDisposition(form: DispositionForm): boolean {
  return form.rationale.trim().length > 0 && form.reviewerId.trim().length > 0;
}

export type DispositionResult =
  | { kind: 'blocked' }
  | { kind: 'recorded'; status: string }
  | { kind: 'conflict'; message: string }
  | { kind: 'error'; message: string };

interface DispositionApi {
  submitDisposition(
    alertId: string,
    outcome: Outcome,
    rationale: string,
    reviewerId: string,
  ): Promise<{ disposition: unknown; alert_status: string }>;
}

/**
 * Client-side validation gate in front of the service call: an invalid form
 * never produces a request. The 409 from a racing reviewer surfaces as a
 * conflict for the banner, not a retry.
 */
export async function submitDisposition(
  api: DispositionApi,
  alertId: string,
  form: DispositionForm,
): Promise<DispositionResult> {
  if (!canSubmitDisposition(form)) {
    return { kind: 'blocked' };
  }
  try {
    const result = await api.submitDisposition(alertId, form.outcome, form.rationale, form.reviewerId);
    return { kind: 'recorded', status: result.alert_status };
  } catch (err) {
    const status = (err as { status?: number }).status;
    const message = err instanceof Error ? err.message : String(err);
    if (status === 409) {
      return { kind: 'conflict', message };
    }
    return { kind: 'error', message };
  }
}
