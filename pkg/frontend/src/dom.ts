// DOM renderers: translate view models into elements. No business logic here.

import type { CaseView } from './case.js';
import type { ImportanceBar } from './importance.js';
import type { QueueState } from './queue.js';
import type { EditorState } from './thresholds.js';

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderQueue(
  state: QueueState,
  onOpen: (alertId: string) => void,
  onRetry: () => void,
): HTMLElement {
  const root = el('section', 'queue');
  if (state.kind === 'loading') {
    root.appendChild(el('p', 'state state-loading', 'Loading alerts…'));
    return root;
  }
  if (state.kind === 'error') {
    const box = el('div', 'state state-error');
    box.appendChild(el('p', undefined, `Could not load alerts: ${state.message}`));
    const retry = el('button', 'retry', 'Retry');
    retry.addEventListener('click', onRetry);
    box.appendChild(retry);
    root.appendChild(box);
    return root;
  }
  if (state.kind === 'empty') {
    root.appendChild(el('p', 'state state-empty', 'No alerts in the queue.'));
    return root;
  }
  const table = el('table', 'queue-table');
  const head = el('tr');
  for (const h of ['Priority', 'Session', 'Reasons', 'Status', 'Created', '']) {
    head.appendChild(el('th', undefined, h));
  }
  table.appendChild(head);
  for (const row of state.rows) {
    const tr = el('tr', `row status-${row.status.toLowerCase()}`);
    tr.dataset.alertId = row.alertId;
    tr.appendChild(el('td', 'priority', row.priorityLabel));
    tr.appendChild(el('td', undefined, row.sessionId));
    const badges = el('td', 'badges');
    for (const reason of row.reasons) {
      badges.appendChild(el('span', 'badge', reason.split('_')[0]));
    }
    if (row.ifFlagged) badges.appendChild(el('span', 'badge badge-model', 'model'));
    tr.appendChild(badges);
    tr.appendChild(el('td', 'status', row.status));
    tr.appendChild(el('td', 'created', row.createdAt));
    const openCell = el('td');
    const open = el('button', 'open', 'Review');
    open.addEventListener('click', () => onOpen(row.alertId));
    openCell.appendChild(open);
    tr.appendChild(openCell);
    table.appendChild(tr);
  }
  root.appendChild(table);
  return root;
}

export function renderWaterfall(view: CaseView): HTMLElement {
  const root = el('div', 'waterfall');
  if (view.waterfall.length === 0) {
    root.appendChild(el('p', 'state state-empty', 'No model explanation (rules-only alert).'));
    return root;
  }
  const values = view.waterfall.flatMap((s) => [s.start, s.end]);
  const lo = Math.min(...values);
  const hi = Math.max(...values);
  const span = hi - lo || 1;
  for (const seg of view.waterfall) {
    const row = el('div', `wf-row wf-${seg.kind}`);
    row.appendChild(el('span', 'wf-label', seg.label));
    const track = el('div', 'wf-track');
    const bar = el('div', 'wf-bar');
    const left = (Math.min(seg.start, seg.end) - lo) / span;
    const width = Math.abs(seg.end - seg.start) / span;
    bar.style.left = `${(left * 100).toFixed(2)}%`;
    bar.style.width = `${Math.max(width * 100, 0.5).toFixed(2)}%`;
    track.appendChild(bar);
    row.appendChild(track);
    row.appendChild(el('span', 'wf-value', seg.value.toFixed(4)));
    root.appendChild(row);
  }
  const residual = el(
    'p',
    view.residualOk ? 'residual ok' : 'residual bad',
    view.residual === null
      ? ''
      : `additivity residual ${view.residual.toExponential(2)} (${view.residualOk ? 'ok' : 'EXCEEDS LIMIT'})`,
  );
  root.appendChild(residual);
  return root;
}

export function renderImportance(bars: ImportanceBar[]): HTMLElement {
  const root = el('div', 'importance');
  for (const bar of bars) {
    const row = el('div', 'imp-row');
    row.appendChild(el('span', 'imp-label', bar.feature));
    const track = el('div', 'imp-track');
    const fill = el('div', 'imp-bar');
    fill.style.width = `${(bar.width * 100).toFixed(1)}%`;
    track.appendChild(fill);
    row.appendChild(track);
    row.appendChild(el('span', 'imp-value', bar.value.toFixed(3)));
    root.appendChild(row);
  }
  return root;
}

export function renderHistory(state: EditorState): HTMLElement {
  const table = el('table', 'history');
  const head = el('tr');
  for (const h of ['Version', 'Reason', 'Approved by', 'Applied']) {
    head.appendChild(el('th', undefined, h));
  }
  table.appendChild(head);
  for (const change of state.history) {
    const tr = el('tr');
    tr.appendChild(el('td', undefined, String(change.next.version)));
    tr.appendChild(el('td', undefined, change.reason));
    tr.appendChild(el('td', undefined, change.approved_by));
    tr.appendChild(el('td', undefined, change.applied_at));
    table.appendChild(tr);
  }
  return table;
}
