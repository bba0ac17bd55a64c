// A service instance backed by the recorded fixtures: serves captured
// payloads and enforces the same mutation rules the real service does
// (mandatory rationale, terminal dispositions, optimistic threshold
// versioning), so contract tests exercise real request/response cycles.

import { createServer, type IncomingMessage, type Server, type ServerResponse } from 'node:http';
import { readFileSync } from 'node:fs';
import { dirname, join } from 'node:path';
import { fileURLToPath } from 'node:url';
import type { AddressInfo } from 'node:net';

const FIXTURES = join(dirname(fileURLToPath(import.meta.url)), '..', 'fixtures');

function fixture<T>(name: string): T {
  return JSON.parse(readFileSync(join(FIXTURES, name), 'utf8')) as T;
}

interface AlertRow {
  alert_id: string;
  status: string;
  [key: string]: unknown;
}

export interface FixtureService {
  server: Server;
  baseUrl: string;
  requestLog: { method: string; path: string }[];
  close(): Promise<void>;
}

export async function startFixtureService(): Promise<FixtureService> {
  const alertsList = fixture<{ alerts: AlertRow[]; total: number; limit: number; offset: number }>(
    'alerts_list.json',
  );
  const alertDetail = fixture<Record<string, unknown> & { alert_id: string }>('alert_detail.json');
  const explainGlobal = fixture<unknown>('explain_global.json');
  const thresholdsPayload = fixture<{ thresholds: Record<string, unknown>; version: number }>(
    'thresholds.json',
  );
  const changes = fixture<{ changes: unknown[] }>('changes.json');

  // mutable state, reset per server instance
  const alerts = alertsList.alerts.map((a) => ({ ...a }));
  const terminal = new Set<string>();
  let version = thresholdsPayload.version;
  let thresholds = { ...thresholdsPayload.thresholds, version };
  const history = [...changes.changes];
  const requestLog: { method: string; path: string }[] = [];

  const respond = (res: ServerResponse, status: number, body: unknown) => {
    const text = JSON.stringify(body);
    res.writeHead(status, { 'content-type': 'application/json' });
    res.end(text);
  };

  const readBody = (req: IncomingMessage): Promise<Record<string, unknown>> =>
    new Promise((resolve, reject) => {
      let data = '';
      req.on('data', (chunk) => (data += chunk));
      req.on('end', () => {
        try {
          resolve(data ? JSON.parse(data) : {});
        } catch (err) {
          reject(err);
        }
      });
      req.on('error', reject);
    });

  const server = createServer((req, res) => {
    void (async () => {
      const url = new URL(req.url ?? '/', 'http://localhost');
      const path = url.pathname;
      requestLog.push({ method: req.method ?? 'GET', path });

      if (req.method === 'GET' && path === '/alerts') {
        respond(res, 200, { alerts, total: alerts.length, limit: 100, offset: 0 });
        return;
      }

      const detailMatch = path.match(/^\/alerts\/([^/]+)$/);
      if (req.method === 'GET' && detailMatch) {
        const id = decodeURIComponent(detailMatch[1]!);
        const row = alerts.find((a) => a.alert_id === id);
        if (!row) {
          respond(res, 404, { error: `unknown alert: ${id}` });
          return;
        }
        respond(res, 200, { ...alertDetail, alert_id: id, status: row.status });
        return;
      }

      const dispMatch = path.match(/^\/alerts\/([^/]+)\/disposition$/);
      if (req.method === 'POST' && dispMatch) {
        const id = decodeURIComponent(dispMatch[1]!);
        const row = alerts.find((a) => a.alert_id === id);
        const body = await readBody(req);
        if (!row) {
          respond(res, 404, { error: `unknown alert: ${id}` });
          return;
        }
        const rationale = typeof body.rationale === 'string' ? body.rationale.trim() : '';
        if (!rationale) {
          respond(res, 400, { error: 'rationale must be non-empty' });
          return;
        }
        if (terminal.has(id)) {
          respond(res, 409, { error: `alert ${id} already has a terminal disposition` });
          return;
        }
        const outcome = body.outcome as string;
        const status = outcome === 'NeedsInfo' ? 'InReview' : 'Closed';
        if (status === 'Closed') terminal.add(id);
        row.status = status;
        respond(res, 200, { disposition: { alert_id: id, outcome, rationale }, alert_status: status });
        return;
      }

      if (req.method === 'GET' && path === '/config/thresholds') {
        respond(res, 200, { thresholds, version });
        return;
      }

      if (req.method === 'PUT' && path === '/config/thresholds') {
        const body = await readBody(req);
        const reason = typeof body.reason === 'string' ? body.reason.trim() : '';
        if (!reason) {
          respond(res, 400, { error: 'reason must be non-empty' });
          return;
        }
        if (body.prior_version !== version) {
          respond(res, 409, {
            error: `prior_version ${body.prior_version} does not match current ${version}`,
            current_version: version,
          });
          return;
        }
        version += 1;
        thresholds = { ...(body.thresholds as Record<string, unknown>), version };
        const change = {
          prior: thresholds,
          next: thresholds,
          reason,
          approved_by: body.approved_by,
          applied_at: '2024-07-01T00:00:00Z',
        };
        history.push(change);
        respond(res, 200, { change, version });
        return;
      }

      if (req.method === 'GET' && path === '/config/changes') {
        respond(res, 200, { changes: history });
        return;
      }

      if (req.method === 'GET' && path === '/explain/global') {
        respond(res, 200, explainGlobal);
        return;
      }

      respond(res, 404, { error: `no fixture route for ${req.method} ${path}` });
    })().catch((err) => {
      respond(res, 500, { error: String(err) });
    });
  });

  await new Promise<void>((resolve) => server.listen(0, '127.0.0.1', resolve));
  const address = server.address() as AddressInfo;
  return {
    server,
    baseUrl: `http://127.0.0.1:${address.port}`,
    requestLog,
    close: () => new Promise((resolve) => server.close(() => resolve())),
  };
}
