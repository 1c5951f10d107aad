// Held-deployment review: list suspended updates, inspect the affected
// curve with the proposed point highlighted, approve or reject.

import { ApiError, type ConsoleApi } from "../api.js";
import { lineChartSvg } from "../chart.js";
import type { ScaleKind } from "../scale.js";
import type { Metric, TicketDto } from "../types.js";

export interface HoldRow {
  ticketId: string;
  regionId: string;
  metric: Metric;
  previousValue: number | null;
  proposedValue: number | null;
  proposedDay: string | null;
  rules: number[];
  tags: string[];
  expiresAt: string;
  minutesToExpiry: number;
}

export function buildHoldRows(tickets: TicketDto[], nowMs: number): HoldRow[] {
  return tickets.map((t) => ({
    ticketId: t.ticket_id,
    regionId: t.region_id,
    metric: t.metric,
    previousValue: t.previous_value,
    proposedValue: t.proposed.value,
    proposedDay: t.proposed.day,
    rules: t.triggered_rules,
    tags: t.proposed.tags,
    expiresAt: t.expires_at,
    minutesToExpiry: Math.max(
      0,
      Math.round((Date.parse(t.expires_at) - nowMs) / 60_000),
    ),
  }));
}

export class HoldsView {
  rows: HoldRow[] = [];
  selected: HoldRow | null = null;
  chartSvg = "";
  scale: ScaleKind = "linear";
  notice = "";

  constructor(private readonly api: ConsoleApi) {}

  async load(nowMs: number = Date.now()): Promise<HoldRow[]> {
    const { tickets } = await this.api.getHolds("HELD");
    this.rows = buildHoldRows(tickets, nowMs);
    if (this.selected && !this.rows.some((r) => r.ticketId === this.selected?.ticketId)) {
      this.selected = null;
      this.chartSvg = "";
    }
    return this.rows;
  }

  async select(ticketId: string): Promise<void> {
    const row = this.rows.find((r) => r.ticketId === ticketId) ?? null;
    this.selected = row;
    if (!row) return;
    const series = await this.api.getSeries(row.regionId, row.metric, {
      scale: this.scale,
    });
    const values = series.points.map((p) => p.value);
    const labels = series.points.map((p) => p.date);
    if (row.proposedValue !== null && row.proposedDay !== null) {
      values.push(row.proposedValue);
      labels.push(row.proposedDay);
    }
    this.chartSvg = lineChartSvg(
      [{ label: row.regionId, values, color: "#b3413e" }],
      { scale: this.scale, highlight: { [row.regionId]: values.length - 1 } },
    );
  }

  async decide(ticketId: string, decision: "APPROVE" | "REJECT"): Promise<void> {
    try {
      await this.api.decideHold(ticketId, decision);
      this.notice = `${ticketId} ${decision === "APPROVE" ? "approved" : "rejected"}`;
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.notice = `${ticketId} was already resolved elsewhere`;
      } else {
        throw err;
      }
    }
    await this.load();
  }

  async toggleScale(): Promise<void> {
    this.scale = this.scale === "linear" ? "log" : "linear";
    if (this.selected) await this.select(this.selected.ticketId);
  }

  render(root: HTMLElement): void {
    const rows = this.rows
      .map(
        (r) => `
      <tr data-ticket="${r.ticketId}" class="${this.selected?.ticketId === r.ticketId ? "selected" : ""}">
        <td>${r.ticketId}</td>
        <td>${r.regionId}</td>
        <td>${r.metric}</td>
        <td class="num">${r.previousValue ?? "–"}</td>
        <td class="num proposed">${r.proposedValue ?? "(history)"}</td>
        <td>{${r.rules.join(",")}}</td>
        <td>${r.minutesToExpiry} min</td>
        <td>
          <button class="approve" data-ticket="${r.ticketId}">Approve</button>
          <button class="reject" data-ticket="${r.ticketId}">Reject</button>
        </td>
      </tr>`,
      )
      .join("");
    root.innerHTML = `
      <h2>Held deployments</h2>
      ${this.notice ? `<p class="notice">${this.notice}</p>` : ""}
      ${
        this.rows.length === 0
          ? `<p class="empty">No held updates.</p>`
          : `<table class="holds">
        <thead><tr><th>Ticket</th><th>Region</th><th>Metric</th><th>Previous</th>
        <th>Proposed</th><th>Rules</th><th>Expires in</th><th></th></tr></thead>
        <tbody>${rows}</tbody></table>`
      }
      <div class="chart-box">
        ${this.selected ? `<button class="scale-toggle">scale: ${this.scale}</button>` : ""}
        ${this.chartSvg}
      </div>`;
    root.querySelectorAll("tbody tr").forEach((tr) => {
      tr.addEventListener("click", () => {
        void this.select((tr as HTMLElement).dataset.ticket ?? "").then(() =>
          this.render(root),
        );
      });
    });
    const bind = (selector: string, decision: "APPROVE" | "REJECT") => {
      root.querySelectorAll(selector).forEach((btn) => {
        btn.addEventListener("click", (event) => {
          event.stopPropagation();
          const id = (btn as HTMLElement).dataset.ticket ?? "";
          void this.decide(id, decision).then(() => this.render(root));
        });
      });
    };
    bind("button.approve", "APPROVE");
    bind("button.reject", "REJECT");
    root.querySelector("button.scale-toggle")?.addEventListener("click", () => {
      void this.toggleScale().then(() => this.render(root));
    });
  }
}
