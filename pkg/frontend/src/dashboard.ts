import type { RunStatus } from './types';

export interface DashboardSeries {
  rounds: number[];
  macroF1: (number | null)[];
  totalUsd: number[];
  humanUsd: number[];
}

/**
 * Chart series are a verbatim re-shaping of the /status payload; the UI never
 * recomputes a metric the server already reported.
 */
export function seriesFromStatus(status: RunStatus): DashboardSeries {
  return {
    rounds: status.metrics.map((m) => m.round),
    macroF1: status.metrics.map((m) => m.macro_f1),
    totalUsd: status.metrics.map((m) => m.cost.total_usd),
    humanUsd: status.metrics.map((m) => m.cost.human_usd),
  };
}

export function describeStatus(status: RunStatus): string {
  const base = `round ${status.round} — ${status.status}`;
  return status.stop_reason ? `${base} (${status.stop_reason})` : base;
}

/** Minimal dependency-free polyline chart. */
export function polylinePoints(
  values: (number | null)[],
  width: number,
  height: number,
  pad = 6,
): string {
  const present = values.filter((v): v is number => v !== null);
  if (present.length === 0) return '';
  const min = Math.min(...present, 0);
  const max = Math.max(...present, 1e-9);
  const span = max - min || 1;
  const step = values.length > 1 ? (width - 2 * pad) / (values.length - 1) : 0;
  return values
    .map((v, i) => {
      if (v === null) return null;
      const x = pad + i * step;
      const y = height - pad - ((v - min) / span) * (height - 2 * pad);
      return `${x.toFixed(1)},${y.toFixed(1)}`;
    })
    .filter((p): p is string => p !== null)
    .join(' ');
}
