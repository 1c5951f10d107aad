// Issue triage board: filter the nine report categories, assign to the
// session operator, resolve with a mandatory note.

import type { ConsoleApi } from "../api.js";
import type { IssueCategoryDto, IssueDto, IssueStateDto } from "../types.js";

export const ISSUE_CATEGORIES: IssueCategoryDto[] = [
  "NEW_CASE",
  "RECOVER_CASE",
  "DEATH_CASE",
  "ERROR_REPORT",
  "FEATURE_REQUEST",
  "BREAKING_NEWS",
  "FURTHER_DETAILS",
  "TESTING_LOCATION",
  "QUESTION",
];

export function validateResolveForm(note: string): string | null {
  if (!note.trim()) {
    return "A resolution note is required.";
  }
  return null;
}

export class IssuesView {
  issues: IssueDto[] = [];
  categoryFilter: IssueCategoryDto | "" = "";
  stateFilter: IssueStateDto | "" = "";
  formError = "";
  notice = "";

  constructor(private readonly api: ConsoleApi) {}

  async load(): Promise<IssueDto[]> {
    const { issues } = await this.api.getIssues({
      category: this.categoryFilter || undefined,
      state: this.stateFilter || undefined,
    });
    this.issues = issues;
    return issues;
  }

  async assign(issueId: string): Promise<void> {
    await this.api.assignIssue(issueId);
    this.notice = `${issueId} assigned to ${this.api.session.operator}`;
    await this.load();
  }

  /** Client-side guard mirrors the server invariant: no note, no request. */
  async resolve(
    issueId: string,
    outcome: "RESOLVED" | "INVALID",
    note: string,
  ): Promise<boolean> {
    const error = validateResolveForm(note);
    if (error) {
      this.formError = error;
      return false;
    }
    this.formError = "";
    await this.api.resolveIssue(issueId, outcome, note);
    this.notice = `${issueId} ${outcome.toLowerCase()}`;
    await this.load();
    return true;
  }

  render(root: HTMLElement): void {
    const options = (values: string[], current: string) =>
      [`<option value="">all</option>`]
        .concat(
          values.map(
            (v) =>
              `<option value="${v}" ${v === current ? "selected" : ""}>${v}</option>`,
          ),
        )
        .join("");
    const cards = this.issues
      .map(
        (issue) => `
      <div class="issue-card state-${issue.state}" data-issue="${issue.issue_id}">
        <header><span class="category">${issue.category}</span>
          <span class="state">${issue.state}</span></header>
        <p>${escapeHtml(issue.body)}</p>
        ${issue.region_id ? `<p class="region">${issue.region_id}</p>` : ""}
        ${issue.links.map((l) => `<a href="${l}">${l}</a>`).join(" ")}
        ${
          issue.state === "OPEN"
            ? `<button class="assign" data-issue="${issue.issue_id}">Assign to me</button>`
            : ""
        }
        ${
          issue.state === "ASSIGNED"
            ? `<div class="resolve-form">
                <input class="note" placeholder="resolution note" data-issue="${issue.issue_id}">
                <button class="resolve" data-issue="${issue.issue_id}">Resolve</button>
                <button class="invalid" data-issue="${issue.issue_id}">Invalid</button>
              </div>`
            : ""
        }
      </div>`,
      )
      .join("");
    root.innerHTML = `
      <h2>Issue reports</h2>
      ${this.notice ? `<p class="notice">${this.notice}</p>` : ""}
      ${this.formError ? `<p class="form-error">${this.formError}</p>` : ""}
      <div class="filters">
        <label>category <select class="category-filter">
          ${options(ISSUE_CATEGORIES, this.categoryFilter)}</select></label>
        <label>state <select class="state-filter">
          ${options(["OPEN", "ASSIGNED", "RESOLVED", "INVALID"], this.stateFilter)}</select></label>
      </div>
      <div class="board">${cards || `<p class="empty">No issues match.</p>`}</div>`;

    root.querySelector(".category-filter")?.addEventListener("change", (event) => {
      this.categoryFilter = (event.target as HTMLSelectElement).value as never;
      void this.load().then(() => this.render(root));
    });
    root.querySelector(".state-filter")?.addEventListener("change", (event) => {
      this.stateFilter = (event.target as HTMLSelectElement).value as never;
      void this.load().then(() => this.render(root));
    });
    root.querySelectorAll("button.assign").forEach((btn) => {
      btn.addEventListener("click", () => {
        void this.assign((btn as HTMLElement).dataset.issue ?? "").then(() =>
          this.render(root),
        );
      });
    });
    const bindResolve = (selector: string, outcome: "RESOLVED" | "INVALID") => {
      root.querySelectorAll(selector).forEach((btn) => {
        btn.addEventListener("click", () => {
          const issueId = (btn as HTMLElement).dataset.issue ?? "";
          const note =
            root.querySelector<HTMLInputElement>(`input.note[data-issue="${issueId}"]`)
              ?.value ?? "";
          void this.resolve(issueId, outcome, note).then(() => this.render(root));
        });
      });
    };
    bindResolve("button.resolve", "RESOLVED");
    bindResolve("button.invalid", "INVALID");
  }
}

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;");
}
