/**
 * Parser for the experiment harness's aggregate CSV contract.
 *
 * Format: optional `#`-prefixed comment lines (provenance), then a header
 * row, then one data row per (condition, N_target) cell.
 */

export interface AggregateRow {
  family: string;
  condition: string;
  k: number;
  nSource: number;
  nTarget: number;
  mean: number;
  ci95: number;
}

export const REQUIRED_COLUMNS = [
  "family",
  "condition",
  "K",
  "N_source",
  "N_target",
  "mean",
  "ci95",
] as const;

function num(raw: string, column: string, line: number): number {
  const v = Number(raw);
  if (raw.trim() === "" || Number.isNaN(v)) {
    throw new Error(`line ${line}: column ${column} is not numeric: ${JSON.stringify(raw)}`);
  }
  return v;
}

export function parseAggregateCsv(text: string): AggregateRow[] {
  const lines = text
    .split(/\r?\n/)
    .map((ln, i) => ({ ln, i: i + 1 }))
    .filter(({ ln }) => ln.trim() !== "" && !ln.startsWith("#"));
  if (lines.length === 0) {
    throw new Error("CSV is empty: no header row found");
  }

  const header = lines[0].ln.split(",").map((h) => h.trim());
  const missing = REQUIRED_COLUMNS.filter((c) => !header.includes(c));
  if (missing.length > 0) {
    throw new Error(`CSV is missing required columns: ${missing.join(", ")}`);
  }
  const col = new Map(header.map((h, j) => [h, j]));
  const get = (cells: string[], name: string) => cells[col.get(name)!] ?? "";

  const rows: AggregateRow[] = [];
  for (const { ln, i } of lines.slice(1)) {
    const cells = ln.split(",");
    if (cells.length < header.length) {
      throw new Error(`line ${i}: expected ${header.length} fields, got ${cells.length}`);
    }
    rows.push({
      family: get(cells, "family"),
      condition: get(cells, "condition"),
      k: num(get(cells, "K"), "K", i),
      nSource: num(get(cells, "N_source"), "N_source", i),
      nTarget: num(get(cells, "N_target"), "N_target", i),
      mean: num(get(cells, "mean"), "mean", i),
      ci95: num(get(cells, "ci95"), "ci95", i),
    });
  }
  if (rows.length === 0) {
    throw new Error("CSV has a header but no data rows");
  }
  return rows;
}
