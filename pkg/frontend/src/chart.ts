// SVG line charts rendered to markup strings: framework-free and easy to
// assert on in tests.

import { makeIndexScale, makeValueScale, pathFrom, type ScaleKind } from "./scale.js";

export interface ChartSeries {
  label: string;
  values: number[];
  color: string;
}

export interface ChartOptions {
  width?: number;
  height?: number;
  scale?: ScaleKind;
  /** index of a point to highlight with a marker circle, per series label */
  highlight?: Record<string, number>;
}

const PAD = 8;

export function lineChartSvg(series: ChartSeries[], opts: ChartOptions = {}): string {
  const width = opts.width ?? 560;
  const height = opts.height ?? 220;
  const kind = opts.scale ?? "linear";
  const innerW = width - PAD * 2;
  const innerH = height - PAD * 2;
  const allValues = series.flatMap((s) => s.values);
  const yScale = makeValueScale(allValues.length ? allValues : [0], kind, innerH);
  const parts: string[] = [
    `<svg viewBox="0 0 ${width} ${height}" class="chart" role="img">`,
  ];
  for (const s of series) {
    if (s.values.length === 0) continue;
    const xScale = makeIndexScale(s.values.length, innerW);
    const xs = s.values.map((_, i) => PAD + xScale(i));
    const ys = s.values.map((v) => PAD + yScale.toPx(v));
    parts.push(
      `<path d="${pathFrom(xs, ys)}" fill="none" stroke="${s.color}" ` +
        `stroke-width="2" data-series="${escapeAttr(s.label)}"/>`,
    );
    const markIndex = opts.highlight?.[s.label];
    if (markIndex !== undefined && markIndex >= 0 && markIndex < s.values.length) {
      parts.push(
        `<circle cx="${(xs[markIndex] as number).toFixed(1)}" ` +
          `cy="${(ys[markIndex] as number).toFixed(1)}" r="4" fill="${s.color}" ` +
          `data-highlight="${escapeAttr(s.label)}"/>`,
      );
    }
  }
  parts.push("</svg>");
  return parts.join("");
}

function escapeAttr(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/"/g, "&quot;").replace(/</g, "&lt;");
}
