// Pure view-model behavior over the recorded fixtures.

import { readFileSync } from 'node:fs';
import { dirname, join } from 'node:path';
import { fileURLToPath } from 'node:url';
import { describe, expect, it } from 'vitest';

import { buildCaseView, canSubmitDisposition, RESIDUAL_LIMIT } from '../src/case.js';
import { buildImportanceBars } from '../src/importance.js';
import { applyStatusChange, buildQueueView, queueErrorView } from '../src/queue.js';
import {
  applyConflict,
  applySuccess,
  canSubmitChange,
  initEditor,
} from '../src/thresholds.js';
import type { AlertDetail, AlertListPayload, ImportancePayload, ThresholdsPayload } from '../src/types.js';

const FIXTURES = join(dirname(fileURLToPath(import.meta.url)), '..', 'fixtures');
const load = <T>(name: string): T => JSON.parse(readFileSync(join(FIXTURES, name), 'utf8')) as T;

describe('queue view', () => {
  it('keeps the service ordering verbatim, no client-side resort', () => {
    const payload = load<AlertListPayload>('alerts_list.json');
    const state = buildQueueView(payload);
    expect(state.kind).toBe('ready');
    if (state.kind !== 'ready') return;
    expect(state.rows.map((r) => r.alertId)).toEqual(payload.alerts.map((a) => a.alert_id));

    // even a deliberately scrambled payload must come through untouched
    const scrambled = { ...payload, alerts: [...payload.alerts].reverse() };
    const scrambledState = buildQueueView(scrambled);
    if (scrambledState.kind !== 'ready') throw new Error('expected rows');
    expect(scrambledState.rows.map((r) => r.alertId)).toEqual(
      scrambled.alerts.map((a) => a.alert_id),
    );
  });

  it('carries priorities through unmodified', () => {
    const payload = load<AlertListPayload>('alerts_list.json');
    const state = buildQueueView(payload);
    if (state.kind !== 'ready') throw new Error('expected rows');
    for (const [i, row] of state.rows.entries()) {
      expect(row.priority).toBe(payload.alerts[i]!.priority);
    }
  });

  it('renders empty and error states distinctly', () => {
    expect(buildQueueView({ alerts: [], total: 0, limit: 50, offset: 0 })).toEqual({
      kind: 'empty',
    });
    const err = queueErrorView(new Error('connection refused'));
    expect(err.kind).toBe('error');
    if (err.kind === 'error') {
      expect(err.retry).toBe(true);
      expect(err.message).toContain('connection refused');
    }
  });

  it('updates one row status without reordering', () => {
    const payload = load<AlertListPayload>('alerts_list.json');
    const state = buildQueueView(payload);
    if (state.kind !== 'ready') throw new Error('expected rows');
    const target = state.rows[1]!.alertId;
    const next = applyStatusChange(state, target, 'Closed');
    if (next.kind !== 'ready') throw new Error('expected rows');
    expect(next.rows.map((r) => r.alertId)).toEqual(state.rows.map((r) => r.alertId));
    expect(next.rows[1]!.status).toBe('Closed');
  });
});

describe('case view', () => {
  it('waterfall reconciles base + contributions with the model output', () => {
    const detail = load<AlertDetail>('alert_detail.json');
    const view = buildCaseView(detail);
    expect(view.residual).not.toBeNull();
    expect(Math.abs(view.residual!)).toBeLessThan(RESIDUAL_LIMIT);
    expect(view.residualOk).toBe(true);

    const base = view.waterfall.find((s) => s.kind === 'base')!;
    const output = view.waterfall.find((s) => s.kind === 'output')!;
    const contributions = view.waterfall
      .filter((s) => s.kind === 'positive' || s.kind === 'negative')
      .reduce((acc, s) => acc + s.value, 0);
    expect(base.value + contributions).toBeCloseTo(output.value, 6);
  });

  it('every waterfall number is traceable to the service payload', () => {
    const detail = load<AlertDetail>('alert_detail.json');
    const view = buildCaseView(detail);
    const phis = detail.explanation!.feature_phis;
    for (const seg of view.waterfall) {
      if (seg.kind === 'positive' || seg.kind === 'negative') {
        expect(seg.value).toBe(phis[seg.label]);
      }
    }
  });

  it('disposition form blocks submission until rationale and reviewer are set', () => {
    expect(canSubmitDisposition({ outcome: 'Benign', rationale: '', reviewerId: 'r' })).toBe(false);
    expect(canSubmitDisposition({ outcome: 'Benign', rationale: '   ', reviewerId: 'r' })).toBe(false);
    expect(canSubmitDisposition({ outcome: 'Benign', rationale: 'checked', reviewerId: '' })).toBe(false);
    expect(canSubmitDisposition({ outcome: 'Benign', rationale: 'checked', reviewerId: 'r' })).toBe(true);
  });
});

describe('threshold editor', () => {
  it('submit gate requires reason and approver', () => {
    const editor = initEditor(load<ThresholdsPayload>('thresholds.json'), []);
    expect(canSubmitChange(editor)).toBe(false);
    editor.reason = 'tighten for pilot';
    expect(canSubmitChange(editor)).toBe(false);
    editor.approvedBy = 'governance-board';
    expect(canSubmitChange(editor)).toBe(true);
  });

  it('conflicts are surfaced with the server message, never auto-resolved', () => {
    const editor = initEditor(load<ThresholdsPayload>('thresholds.json'), []);
    const next = applyConflict(editor, 'prior_version 1 does not match current 2', 2);
    expect(next.conflict).toEqual({
      message: 'prior_version 1 does not match current 2',
      currentVersion: 2,
    });
    expect(next.version).toBe(editor.version); // no silent refresh
  });

  it('success appends to the visible history', () => {
    const editor = initEditor(load<ThresholdsPayload>('thresholds.json'), []);
    const change = {
      prior: editor.current,
      next: { ...editor.current, version: editor.version + 1 },
      reason: 'x',
      approved_by: 'y',
      applied_at: '2024-07-01T00:00:00Z',
    };
    const next = applySuccess(editor, { change, version: editor.version + 1 });
    expect(next.history).toHaveLength(1);
    expect(next.version).toBe(editor.version + 1);
    expect(next.reason).toBe('');
  });
});

describe('importance chart', () => {
  it('bar order equals the service payload order', () => {
    const payload = load<ImportancePayload>('explain_global.json');
    const bars = buildImportanceBars(payload);
    expect(bars.map((b) => b.feature)).toEqual(payload.ranking.map((r) => r.feature));
    expect(bars[0]!.width).toBe(1);
    for (const [i, bar] of bars.entries()) {
      expect(bar.value).toBe(payload.ranking[i]!.mean_abs_phi);
    }
  });
});
