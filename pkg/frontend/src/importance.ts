// Global-importance chart rows. The service sorts by mean |phi| descending;
// bar order must equal payload order exactly.

import type { ImportancePayload } from './types.js';

export interface ImportanceBar {
  feature: string;
  value: number;
  width: number; // 0..1, relative to the top feature
}

export function buildImportanceBars(payload: ImportancePayload): ImportanceBar[] {
  const top = payload.ranking[0]?.mean_abs_phi ?? 0;
  return payload.ranking.map((r) => ({
    feature: r.feature,
    value: r.mean_abs_phi,
    width: top > 0 ? r.mean_abs_phi / top : 0,
  }));
}
