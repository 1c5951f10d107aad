// Threshold-aligned multi-region comparison: every curve starts at the
// relative day its count first reached the chosen threshold.

import type { ConsoleApi } from "../api.js";
import { lineChartSvg, type ChartSeries } from "../chart.js";
import type { ScaleKind } from "../scale.js";
import type { CompareDto, Metric } from "../types.js";

const PALETTE = ["#b3413e", "#2b6cb0", "#2f855a", "#805ad5", "#b7791f", "#319795"];

export interface CompareModel {
  curves: { regionId: string; days: number[]; values: number[] }[];
  excluded: { regionId: string; reason: string }[];
  maxDay: number;
}

export function buildCompareModel(dto: CompareDto): CompareModel {
  const curves = dto.series.map((s) => ({
    regionId: s.region_id,
    days: s.points.map((p) => p.day),
    values: s.points.map((p) => p.value),
  }));
  const maxDay = Math.max(0, ...curves.flatMap((c) => c.days));
  return { curves, excluded: dto.excluded.map((e) => ({ regionId: e.region_id, reason: e.reason })), maxDay };
}

export class CompareView {
  regionsInput = "";
  threshold = 100;
  metric: Metric = "confirmed";
  scale: ScaleKind = "linear";
  model: CompareModel | null = null;
  chartSvg = "";

  constructor(private readonly api: ConsoleApi) {}

  /** Without arguments (router refresh), keep the current selection. */
  async load(regionIds?: string[], threshold?: number): Promise<CompareModel> {
    if (regionIds === undefined) {
      const current = this.regionsInput.split(",").map((s) => s.trim()).filter(Boolean);
      if (current.length === 0) {
        this.model = { curves: [], excluded: [], maxDay: 0 };
        return this.model;
      }
      regionIds = current;
    }
    this.threshold = threshold ?? this.threshold;
    threshold = this.threshold;
    this.regionsInput = regionIds.join(",");
    const dto = await this.api.getCompare(regionIds, this.metric, threshold);
    this.model = buildCompareModel(dto);
    const series: ChartSeries[] = this.model.curves.map((curve, i) => ({
      label: curve.regionId,
      values: curve.values,
      color: PALETTE[i % PALETTE.length] as string,
    }));
    this.chartSvg = lineChartSvg(series, { scale: this.scale });
    return this.model;
  }

  async toggleScale(): Promise<void> {
    this.scale = this.scale === "linear" ? "log" : "linear";
    if (this.model) {
      const ids = this.model.curves.map((c) => c.regionId);
      const excluded = this.model.excluded.map((e) => e.regionId);
      await this.load([...ids, ...excluded], this.threshold);
    }
  }

  render(root: HTMLElement): void {
    const legend = (this.model?.curves ?? [])
      .map(
        (c, i) =>
          `<span class="legend" style="color:${PALETTE[i % PALETTE.length]}">` +
          `&#9632; ${c.regionId}</span>`,
      )
      .join(" ");
    const excluded = (this.model?.excluded ?? [])
      .map((e) => `<li>${e.regionId}: ${e.reason}</li>`)
      .join("");
    root.innerHTML = `
      <h2>Aligned comparison</h2>
      <form class="compare-form">
        <input class="regions" placeholder="IT-25,US-WA-033" value="${this.regionsInput}">
        <input class="threshold" type="number" min="1" value="${this.threshold}">
        <button type="submit">Compare</button>
        <button type="button" class="scale-toggle">scale: ${this.scale}</button>
      </form>
      <p class="hint">Day 0 is each region's first day at or above the threshold.</p>
      <div class="legend-row">${legend}</div>
      <div class="chart-box">${this.chartSvg}</div>
      ${excluded ? `<p>Excluded (below threshold):</p><ul class="excluded">${excluded}</ul>` : ""}`;
    root.querySelector<HTMLFormElement>(".compare-form")?.addEventListener(
      "submit",
      (event) => {
        event.preventDefault();
        const regions =
          root.querySelector<HTMLInputElement>("input.regions")?.value ?? "";
        const threshold = Number(
          root.querySelector<HTMLInputElement>("input.threshold")?.value ?? "100",
        );
        const ids = regions.split(",").map((s) => s.trim()).filter(Boolean);
        if (ids.length > 0 && threshold > 0) {
          void this.load(ids, threshold).then(() => this.render(root));
        }
      },
    );
    root.querySelector("button.scale-toggle")?.addEventListener("click", () => {
      void this.toggleScale().then(() => this.render(root));
    });
  }
}
