// Dashboard wiring: three panes (queue, case, governance) over the API client.

import { ApiClient, ApiRequestError } from './api.js';
import {
  buildCaseView,
  canSubmitDisposition,
  submitDisposition,
  type DispositionForm,
} from './case.js';
import { renderHistory, renderImportance, renderQueue, renderWaterfall } from './dom.js';
import { buildImportanceBars } from './importance.js';
import { applyStatusChange, buildQueueView, queueErrorView, type QueueState } from './queue.js';
import {
  applyConflict,
  applyRejection,
  applySuccess,
  canSubmitChange,
  initEditor,
  type EditorState,
} from './thresholds.js';
import type { AlertStatus, Outcome } from './types.js';

const OUTCOMES: Outcome[] = ['ConfirmedMisuse', 'Benign', 'NeedsInfo'];

export class Dashboard {
  private queueState: QueueState = { kind: 'loading' };
  private editor: EditorState | null = null;

  constructor(
    private readonly api: ApiClient,
    private readonly root: HTMLElement,
  ) {}

  async start(): Promise<void> {
    await this.refreshQueue();
    await this.refreshGovernance();
  }

  private pane(id: string): HTMLElement {
    let node = this.root.querySelector<HTMLElement>(`#${id}`);
    if (!node) {
      node = document.createElement('div');
      node.id = id;
      this.root.appendChild(node);
    }
    return node;
  }

  async refreshQueue(): Promise<void> {
    this.queueState = { kind: 'loading' };
    this.paintQueue();
    try {
      const payload = await this.api.listAlerts({ limit: 100 });
      this.queueState = buildQueueView(payload);
    } catch (err) {
      this.queueState = queueErrorView(err);
    }
    this.paintQueue();
  }

  private paintQueue(): void {
    const pane = this.pane('queue-pane');
    pane.replaceChildren(
      renderQueue(
        this.queueState,
        (alertId) => void this.openCase(alertId),
        () => void this.refreshQueue(),
      ),
    );
  }

  async openCase(alertId: string): Promise<void> {
    const pane = this.pane('case-pane');
    try {
      const detail = await this.api.getAlert(alertId);
      const view = buildCaseView(detail);
      pane.replaceChildren();
      const title = document.createElement('h2');
      title.textContent = `${view.sessionId} — ${view.status}`;
      pane.appendChild(title);
      if (view.narrative) {
        const p = document.createElement('p');
        p.className = 'narrative';
        p.textContent = view.narrative;
        pane.appendChild(p);
      }
      pane.appendChild(renderWaterfall(view));
      pane.appendChild(this.dispositionForm(alertId));
    } catch (err) {
      const p = document.createElement('p');
      p.className = 'state state-error';
      p.textContent = err instanceof Error ? err.message : String(err);
      pane.replaceChildren(p);
    }
  }

  private dispositionForm(alertId: string): HTMLElement {
    const form: DispositionForm = { outcome: 'Benign', rationale: '', reviewerId: '' };
    const box = document.createElement('form');
    box.className = 'disposition';

    const select = document.createElement('select');
    for (const o of OUTCOMES) {
      const opt = document.createElement('option');
      opt.value = o;
      opt.textContent = o;
      select.appendChild(opt);
    }
    select.value = form.outcome;
    select.addEventListener('change', () => {
      form.outcome = select.value as Outcome;
    });

    const reviewer = document.createElement('input');
    reviewer.placeholder = 'reviewer id';
    const rationale = document.createElement('textarea');
    rationale.placeholder = 'rationale (required)';
    const submit = document.createElement('button');
    submit.type = 'submit';
    submit.textContent = 'Record disposition';
    submit.disabled = true;
    const banner = document.createElement('p');
    banner.className = 'banner';

    const sync = () => {
      form.rationale = rationale.value;
      form.reviewerId = reviewer.value;
      submit.disabled = !canSubmitDisposition(form);
    };
    rationale.addEventListener('input', sync);
    reviewer.addEventListener('input', sync);

    box.addEventListener('submit', (ev) => {
      ev.preventDefault();
      void submitDisposition(this.api, alertId, form).then((result) => {
        if (result.kind === 'blocked') {
          return; // button is disabled anyway; never issue the request
        }
        if (result.kind === 'recorded') {
          this.queueState = applyStatusChange(
            this.queueState,
            alertId,
            result.status as AlertStatus,
          );
          this.paintQueue();
          void this.openCase(alertId);
        } else if (result.kind === 'conflict') {
          banner.className = 'banner conflict';
          banner.textContent = `Already closed by another reviewer: ${result.message}`;
        } else {
          banner.className = 'banner error';
          banner.textContent = result.message;
        }
      });
    });

    box.append(select, reviewer, rationale, submit, banner);
    return box;
  }

  async refreshGovernance(): Promise<void> {
    const pane = this.pane('governance-pane');
    try {
      const [thresholds, changes, importance] = await Promise.all([
        this.api.getThresholds(),
        this.api.getChanges(),
        this.api.getGlobalImportance().catch(() => null),
      ]);
      this.editor = initEditor(thresholds, changes.changes);
      pane.replaceChildren();
      const title = document.createElement('h2');
      title.textContent = `Thresholds — version ${this.editor.version}`;
      pane.appendChild(title);
      pane.appendChild(this.thresholdForm());
      pane.appendChild(renderHistory(this.editor));
      if (importance) {
        const h = document.createElement('h2');
        h.textContent = 'Global importance';
        pane.appendChild(h);
        pane.appendChild(renderImportance(buildImportanceBars(importance)));
      }
    } catch (err) {
      const p = document.createElement('p');
      p.className = 'state state-error';
      p.textContent = err instanceof Error ? err.message : String(err);
      pane.replaceChildren(p);
    }
  }

  private thresholdForm(): HTMLElement {
    const state = this.editor!;
    const form = document.createElement('form');
    form.className = 'thresholds';

    type NumericKey = Exclude<keyof typeof state.draft, 'day_shift_roles'>;
    const fields: [NumericKey, string][] = [
      ['post_discharge_days_max', 'Post-discharge days max'],
      ['off_hours_start', 'Off-hours start'],
      ['off_hours_end', 'Off-hours end'],
      ['duration_min_sec', 'Duration min (s)'],
      ['duration_max_sec', 'Duration max (s)'],
      ['repeat_count_min', 'Repeat count min'],
    ];
    for (const [key, label] of fields) {
      const wrap = document.createElement('label');
      wrap.textContent = label;
      const input = document.createElement('input');
      input.type = 'number';
      input.value = String(state.draft[key]);
      input.addEventListener('input', () => {
        state.draft[key] = Number(input.value);
      });
      wrap.appendChild(input);
      form.appendChild(wrap);
    }

    const reason = document.createElement('textarea');
    reason.placeholder = 'reason for change (required)';
    const approver = document.createElement('input');
    approver.placeholder = 'approved by';
    const submit = document.createElement('button');
    submit.type = 'submit';
    submit.textContent = 'Apply change';
    submit.disabled = true;
    const banner = document.createElement('p');
    banner.className = 'banner';

    const sync = () => {
      state.reason = reason.value;
      state.approvedBy = approver.value;
      submit.disabled = !canSubmitChange(state);
    };
    reason.addEventListener('input', sync);
    approver.addEventListener('input', sync);

    form.addEventListener('submit', (ev) => {
      ev.preventDefault();
      if (!canSubmitChange(state)) return;
      void this.api
        .putThresholds(state.draft, state.reason, state.approvedBy, state.version)
        .then((result) => {
          this.editor = applySuccess(state, result);
          void this.refreshGovernance();
        })
        .catch((err: unknown) => {
          if (err instanceof ApiRequestError && err.status === 409) {
            this.editor = applyConflict(state, err.message, err.currentVersion);
            banner.className = 'banner conflict';
            banner.textContent =
              `Version conflict: ${err.message}` +
              (err.currentVersion !== undefined ? ` (current version ${err.currentVersion})` : '');
          } else {
            this.editor = applyRejection(state, err instanceof Error ? err.message : String(err));
            banner.className = 'banner error';
            banner.textContent = this.editor.error ?? 'request rejected';
          }
        });
    });

    form.append(reason, approver, submit, banner);
    return form;
  }
}

export function mount(baseUrl: string, root: HTMLElement): Dashboard {
  const dashboard = new Dashboard(new ApiClient(baseUrl), root);
  void dashboard.start();
  return dashboard;
}
