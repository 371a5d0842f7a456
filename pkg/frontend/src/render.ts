import { readFileSync, writeFileSync } from "node:fs";

import { parseAggregateCsv } from "./csv.js";
import { groupSeries } from "./curves.js";
import { renderSvg } from "./svg.js";

export interface CurveSpec {
  csvPath: string;
  outPath: string;
  title?: string;
  logX?: boolean;
}

/** Reads an aggregate CSV and writes the learning-curve figure. */
export function renderCurves(spec: CurveSpec): void {
  const rows = parseAggregateCsv(readFileSync(spec.csvPath, "utf8"));
  const series = groupSeries(rows);
  const title = spec.title ?? rows[0].family;
  writeFileSync(spec.outPath, renderSvg(series, { title, logX: spec.logX }));
}
