// Console bootstrap: load the static session config, wire the views to a
// hash router, refresh the active view on navigation.

import { ConsoleApi, type ConsoleSession } from "./api.js";
import { CompareView } from "./views/compare.js";
import { DiaryView } from "./views/diary.js";
import { HoldsView } from "./views/holds.js";
import { IssuesView } from "./views/issues.js";

type Route = "holds" | "issues" | "diary" | "compare";

const ROUTES: Route[] = ["holds", "issues", "diary", "compare"];

export async function loadSession(configUrl = "./config.json"): Promise<ConsoleSession> {
  const response = await fetch(configUrl);
  if (!response.ok) {
    throw new Error(`cannot load console config: HTTP ${response.status}`);
  }
  const raw = (await response.json()) as Partial<ConsoleSession>;
  return {
    apiBaseUrl: raw.apiBaseUrl ?? "",
    token: raw.token ?? "",
    operator: raw.operator ?? "console",
  };
}

export function currentRoute(hash: string): Route {
  const name = hash.replace(/^#\/?/, "");
  return (ROUTES as string[]).includes(name) ? (name as Route) : "holds";
}

export async function bootstrap(doc: Document): Promise<void> {
  const session = await loadSession();
  const api = new ConsoleApi(session);
  const views = {
    holds: new HoldsView(api),
    issues: new IssuesView(api),
    diary: new DiaryView(api),
    compare: new CompareView(api),
  };
  const main = doc.getElementById("view");
  const nav = doc.getElementById("nav");
  if (!main || !nav) throw new Error("console shell is missing #view/#nav");

  nav.innerHTML = ROUTES.map(
    (r) => `<a href="#/${r}" data-route="${r}">${r}</a>`,
  ).join("");

  async function show(): Promise<void> {
    const route = currentRoute(doc.defaultView?.location.hash ?? "");
    nav!.querySelectorAll("a").forEach((a) => {
      a.classList.toggle("active", (a as HTMLElement).dataset.route === route);
    });
    const view = views[route];
    await view.load();
    view.render(main as HTMLElement);
  }

  doc.defaultView?.addEventListener("hashchange", () => void show());
  await show();
}

declare global {
  interface Window {
    __consoleBooted?: Promise<void>;
  }
}

if (typeof document !== "undefined" && document.getElementById("view")) {
  window.__consoleBooted = bootstrap(document);
}
