// Scripted operator session against a live API server: reject the held
// transit-state deployment, work one issue of every category to
// resolution, build a two-region aligned comparison, then audit the
// journal for exactly the mutations this session performed.

import { execFileSync, spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ConsoleApi } from "../src/api.js";
import { CompareView } from "../src/views/compare.js";
import { HoldsView } from "../src/views/holds.js";
import { ISSUE_CATEGORIES, IssuesView } from "../src/views/issues.js";

const here = dirname(fileURLToPath(import.meta.url));
const PORT = 18_100 + (process.pid % 800);
const BASE = `http://127.0.0.1:${PORT}`;

let workdir: string;
let server: ChildProcess;
let journalBaseline = 0;

interface JournalEntry {
  kind: string;
  event?: string;
  decision?: string;
  category?: string;
  ticket_id?: string;
}

function readJournal(): JournalEntry[] {
  const path = join(workdir, "store", "journal.jsonl");
  return readFileSync(path, "utf8")
    .trim()
    .split("\n")
    .filter(Boolean)
    .map((line) => JSON.parse(line) as JournalEntry);
}

async function waitForServer(): Promise<void> {
  const deadline = Date.now() + 20_000;
  for (;;) {
    try {
      const response = await fetch(`${BASE}/regions`);
      if (response.ok) return;
    } catch {
      // not up yet
    }
    if (Date.now() > deadline) throw new Error("API server did not come up");
    await new Promise((r) => setTimeout(r, 150));
  }
}

beforeAll(async () => {
  workdir = mkdtempSync(join(tmpdir(), "console-session-"));
  execFileSync("python3", [join(here, "fixtures", "seed_store.py"), workdir]);
  server = spawn(
    "python3",
    ["-m", "casetrack.cli", "--config", join(workdir, "config.yaml"),
     "serve", "--port", String(PORT)],
    { stdio: ["ignore", "pipe", "pipe"] },
  );
  await waitForServer();
  journalBaseline = readJournal().length;
}, 40_000);

afterAll(() => {
  server?.kill("SIGTERM");
  rmSync(workdir, { recursive: true, force: true });
});

describe("scripted console session", () => {
  const api = new ConsoleApi({
    apiBaseUrl: BASE,
    token: "console-token",
    operator: "console-op",
  });

  it("rejects the held deployment and the curve stays at the previous value", async () => {
    const holds = new HoldsView(api);
    const rows = await holds.load();
    expect(rows.length).toBe(1);
    const row = rows[0]!;
    expect(row.previousValue).toBe(102);
    expect(row.proposedValue).toBe(102103);
    expect(row.rules).toEqual([2, 3, 4]);

    await holds.select(row.ticketId);
    expect(holds.chartSvg).toContain("data-highlight");

    await holds.decide(row.ticketId, "REJECT");
    expect(holds.rows).toEqual([]);

    const series = await api.getSeries("US-NY-061", "confirmed");
    const last = series.points[series.points.length - 1]!;
    expect(last.value).toBe(102);
  }, 30_000);

  it("works one issue of every category through assign and resolve", async () => {
    const issues = new IssuesView(api);
    for (const category of ISSUE_CATEGORIES) {
      issues.categoryFilter = category;
      issues.stateFilter = "OPEN";
      const open = await issues.load();
      expect(open.length).toBe(1);
      const issueId = open[0]!.issue_id;

      await issues.assign(issueId);

      // guard: an empty note never reaches the API
      const blocked = await issues.resolve(issueId, "RESOLVED", "");
      expect(blocked).toBe(false);

      const done = await issues.resolve(issueId, "RESOLVED", `verified ${category}`);
      expect(done).toBe(true);
    }
    const { issues: remaining } = await api.getIssues({ state: "OPEN" });
    expect(remaining).toEqual([]);
    const { issues: resolved } = await api.getIssues({ state: "RESOLVED" });
    expect(resolved.length).toBe(ISSUE_CATEGORIES.length);
  }, 30_000);

  it("renders a two-region aligned comparison starting at day zero", async () => {
    const compare = new CompareView(api);
    const model = await compare.load(["IT-25", "US-WA-033"], 100);
    expect(model.curves.map((c) => c.regionId)).toEqual(["IT-25", "US-WA-033"]);
    for (const curve of model.curves) {
      expect(curve.days[0]).toBe(0);
      expect(curve.values[0]!).toBeGreaterThanOrEqual(100);
    }
    expect(compare.chartSvg.match(/<path /g)?.length).toBe(2);
    expect(model.excluded).toEqual([]);
  }, 30_000);

  it("left exactly the session's mutations in the journal", () => {
    const delta = readJournal().slice(journalBaseline);
    const ticketEvents = delta.filter((e) => e.kind === "ticket");
    const issueEvents = delta.filter((e) => e.kind === "issue");
    const gateDecisions = delta.filter((e) => e.kind === "decision");

    expect(ticketEvents.length).toBe(1);
    expect(ticketEvents[0]?.event).toBe("REJECTED");

    expect(issueEvents.filter((e) => e.event === "ASSIGNED").length).toBe(9);
    expect(issueEvents.filter((e) => e.event === "RESOLVED").length).toBe(9);
    const resolvedCategories = issueEvents
      .filter((e) => e.event === "RESOLVED")
      .map((e) => e.category)
      .sort();
    expect(resolvedCategories).toEqual([...ISSUE_CATEGORIES].sort());

    // the console caused no series commits and nothing else
    expect(gateDecisions).toEqual([]);
    expect(delta.length).toBe(1 + 18);
  });
});
