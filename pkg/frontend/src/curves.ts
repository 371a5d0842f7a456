import type { AggregateRow } from "./csv.js";

export interface CurvePoint {
  nTarget: number;
  mean: number;
  ci95: number;
}

export interface Series {
  label: string;
  points: CurvePoint[];
}

/**
 * Legend label for one (condition, K, N_source) group: the baseline
 * condition is "No Transfer", everything else is "K × N".
 */
export function seriesLabel(row: Pick<AggregateRow, "condition" | "k" | "nSource">): string {
  if (row.condition === "no-transfer") return "No Transfer";
  return `${row.k} × ${row.nSource}`;
}

/** Groups rows into plottable series, points sorted by N_target.
 * Transfer series come first; the baseline is listed last. */
export function groupSeries(rows: AggregateRow[]): Series[] {
  const byKey = new Map<string, { label: string; points: CurvePoint[] }>();
  for (const row of rows) {
    const key = `${row.condition}|${row.k}|${row.nSource}`;
    let s = byKey.get(key);
    if (!s) {
      s = { label: seriesLabel(row), points: [] };
      byKey.set(key, s);
    }
    s.points.push({ nTarget: row.nTarget, mean: row.mean, ci95: row.ci95 });
  }
  const series = [...byKey.values()];
  for (const s of series) s.points.sort((a, b) => a.nTarget - b.nTarget);
  series.sort((a, b) => {
    const abase = a.label === "No Transfer" ? 1 : 0;
    const bbase = b.label === "No Transfer" ? 1 : 0;
    return abase - bbase || a.label.localeCompare(b.label);
  });
  return series;
}
