// Inconsistency diary: parent-vs-children disagreements with a small
// inline bar comparing the two figures; persistent entries stand out.

import type { ConsoleApi } from "../api.js";
import type { DiaryEntryDto } from "../types.js";

export class DiaryView {
  entries: DiaryEntryDto[] = [];
  statusFilter: "" | "OPEN" | "PERSISTENT" | "RESOLVED" = "";

  constructor(private readonly api: ConsoleApi) {}

  async load(): Promise<DiaryEntryDto[]> {
    const { entries } = await this.api.getDiary(this.statusFilter || undefined);
    this.entries = entries;
    return entries;
  }

  render(root: HTMLElement): void {
    const bar = (entry: DiaryEntryDto) => {
      const max = Math.max(entry.parent_value, entry.children_sum, 1);
      const parentW = Math.round((entry.parent_value / max) * 100);
      const childW = Math.round((entry.children_sum / max) * 100);
      return `<div class="minibar">
        <div class="parent" style="width:${parentW}%" title="parent ${entry.parent_value}"></div>
        <div class="children" style="width:${childW}%" title="children ${entry.children_sum}"></div>
      </div>`;
    };
    const rows = this.entries
      .map(
        (e) => `
      <tr class="status-${e.status}">
        <td>${e.entry_id}</td>
        <td class="status">${e.status}</td>
        <td>${e.parent_region}</td>
        <td>${e.metric}</td>
        <td class="num">${e.parent_value}</td>
        <td class="num">${e.children_sum}</td>
        <td class="num">${e.delta}</td>
        <td>${bar(e)}</td>
        <td>${e.first_seen.slice(0, 10)}</td>
      </tr>`,
      )
      .join("");
    root.innerHTML = `
      <h2>Inconsistency diary</h2>
      <label>status <select class="status-filter">
        <option value="">all</option>
        ${["OPEN", "PERSISTENT", "RESOLVED"]
          .map(
            (s) =>
              `<option value="${s}" ${s === this.statusFilter ? "selected" : ""}>${s}</option>`,
          )
          .join("")}
      </select></label>
      ${
        this.entries.length === 0
          ? `<p class="empty">Diary is empty.</p>`
          : `<table class="diary">
        <thead><tr><th>Entry</th><th>Status</th><th>Parent</th><th>Metric</th>
        <th>Parent value</th><th>Children sum</th><th>Delta</th><th></th><th>Since</th></tr></thead>
        <tbody>${rows}</tbody></table>`
      }`;
    root.querySelector(".status-filter")?.addEventListener("change", (event) => {
      this.statusFilter = (event.target as HTMLSelectElement).value as never;
      void this.load().then(() => this.render(root));
    });
  }
}
