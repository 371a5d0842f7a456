/**
 * Minimal deterministic SVG renderer for learning-curve figures:
 * accuracy vs number of target-task examples, one line per series,
 * 95% confidence-interval whiskers at every point.
 */

import type { Series } from "./curves.js";

export interface SvgOptions {
  title?: string;
  width?: number;
  height?: number;
  /** log-scale the x axis (N_target usually spans decades) */
  logX?: boolean;
}

const PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
const MARGIN = { top: 48, right: 24, bottom: 48, left: 56 };

function fmt(v: number): string {
  return Number(v.toFixed(2)).toString();
}

function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

function niceYTicks(lo: number, hi: number): number[] {
  const span = hi - lo || 1;
  const step = span > 1.2 ? 0.25 : span > 0.6 ? 0.2 : 0.1;
  const ticks: number[] = [];
  for (let v = Math.ceil(lo / step) * step; v <= hi + 1e-9; v += step) {
    ticks.push(Number(v.toFixed(10)));
  }
  return ticks;
}

export function renderSvg(series: Series[], opts: SvgOptions = {}): string {
  if (series.length === 0) throw new Error("nothing to plot: no series");
  const width = opts.width ?? 640;
  const height = opts.height ?? 440;
  const logX = opts.logX ?? true;
  const plotW = width - MARGIN.left - MARGIN.right;
  const plotH = height - MARGIN.top - MARGIN.bottom;

  const pts = series.flatMap((s) => s.points);
  const xs = pts.map((p) => p.nTarget);
  const xLo = Math.min(...xs);
  const xHi = Math.max(...xs);
  let yLo = Math.min(...pts.map((p) => p.mean - p.ci95), 0);
  let yHi = Math.max(...pts.map((p) => p.mean + p.ci95), 1);
  const pad = 0.02 * (yHi - yLo);
  yLo -= pad;
  yHi += pad;

  const xPos = (n: number) => {
    if (xHi === xLo) return MARGIN.left + plotW / 2;
    const t = logX
      ? (Math.log(n) - Math.log(xLo)) / (Math.log(xHi) - Math.log(xLo))
      : (n - xLo) / (xHi - xLo);
    return MARGIN.left + t * plotW;
  };
  const yPos = (v: number) => MARGIN.top + (1 - (v - yLo) / (yHi - yLo)) * plotH;

  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
      `viewBox="0 0 ${width} ${height}" font-family="sans-serif" font-size="12">`,
  );
  parts.push(`<rect width="${width}" height="${height}" fill="white"/>`);
  if (opts.title) {
    parts.push(
      `<text x="${width / 2}" y="24" text-anchor="middle" font-size="15">${esc(opts.title)}</text>`,
    );
  }

  // axes and grid
  const xTicks = [...new Set(xs)].sort((a, b) => a - b);
  const yTicks = niceYTicks(yLo, yHi);
  for (const v of yTicks) {
    const y = yPos(v);
    parts.push(
      `<line x1="${MARGIN.left}" y1="${fmt(y)}" x2="${width - MARGIN.right}" y2="${fmt(y)}" stroke="#ddd"/>`,
      `<text x="${MARGIN.left - 8}" y="${fmt(y + 4)}" text-anchor="end">${v}</text>`,
    );
  }
  for (const n of xTicks) {
    const x = xPos(n);
    parts.push(
      `<line x1="${fmt(x)}" y1="${MARGIN.top + plotH}" x2="${fmt(x)}" y2="${MARGIN.top + plotH + 5}" stroke="black"/>`,
      `<text x="${fmt(x)}" y="${MARGIN.top + plotH + 20}" text-anchor="middle">${n}</text>`,
    );
  }
  parts.push(
    `<line x1="${MARGIN.left}" y1="${MARGIN.top + plotH}" x2="${width - MARGIN.right}" y2="${MARGIN.top + plotH}" stroke="black"/>`,
    `<line x1="${MARGIN.left}" y1="${MARGIN.top}" x2="${MARGIN.left}" y2="${MARGIN.top + plotH}" stroke="black"/>`,
    `<text x="${MARGIN.left + plotW / 2}" y="${height - 10}" text-anchor="middle">Number of target-task examples</text>`,
    `<text x="16" y="${MARGIN.top + plotH / 2}" text-anchor="middle" transform="rotate(-90 16 ${MARGIN.top + plotH / 2})">Accuracy</text>`,
  );

  series.forEach((s, i) => {
    const color = PALETTE[i % PALETTE.length];
    const line = s.points.map((p) => `${fmt(xPos(p.nTarget))},${fmt(yPos(p.mean))}`).join(" ");
    parts.push(
      `<polyline class="series" data-label="${esc(s.label)}" points="${line}" fill="none" stroke="${color}" stroke-width="1.5"/>`,
    );
    for (const p of s.points) {
      const x = fmt(xPos(p.nTarget));
      const yTop = fmt(yPos(p.mean + p.ci95));
      const yBot = fmt(yPos(p.mean - p.ci95));
      parts.push(
        `<line class="errorbar" x1="${x}" y1="${yTop}" x2="${x}" y2="${yBot}" stroke="${color}"/>`,
        `<line x1="${fmt(xPos(p.nTarget) - 3)}" y1="${yTop}" x2="${fmt(xPos(p.nTarget) + 3)}" y2="${yTop}" stroke="${color}"/>`,
        `<line x1="${fmt(xPos(p.nTarget) - 3)}" y1="${yBot}" x2="${fmt(xPos(p.nTarget) + 3)}" y2="${yBot}" stroke="${color}"/>`,
        `<circle cx="${x}" cy="${fmt(yPos(p.mean))}" r="2.5" fill="${color}"/>`,
      );
    }
  });

  // legend, bottom-right of the plot area
  const legendX = width - MARGIN.right - 130;
  series.forEach((s, i) => {
    const y = MARGIN.top + plotH - 16 * (series.length - i) - 8;
    const color = PALETTE[i % PALETTE.length];
    parts.push(
      `<line x1="${legendX}" y1="${y}" x2="${legendX + 22}" y2="${y}" stroke="${color}" stroke-width="1.5"/>`,
      `<text class="legend" x="${legendX + 28}" y="${y + 4}">${esc(s.label)}</text>`,
    );
  });

  parts.push("</svg>");
  return parts.join("\n");
}
