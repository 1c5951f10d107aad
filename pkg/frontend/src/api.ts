// Thin typed client over the casetrack HTTP API. All mutations carry the
// session bearer token; a missing token fails client-side before any
// request leaves the console.

import type {
  CompareDto,
  DiaryEntryDto,
  IssueCategoryDto,
  IssueDto,
  IssueStateDto,
  Metric,
  RegionDto,
  SeriesDto,
  TicketDto,
} from "./types.js";

export interface ConsoleSession {
  apiBaseUrl: string;
  token: string;
  operator: string;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly tag: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

function query(params: Record<string, string | number | undefined>): string {
  const pairs = Object.entries(params).filter(([, v]) => v !== undefined);
  if (pairs.length === 0) return "";
  const search = new URLSearchParams();
  for (const [key, value] of pairs) search.set(key, String(value));
  return `?${search.toString()}`;
}

export class ConsoleApi {
  constructor(
    readonly session: ConsoleSession,
    private readonly fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(`${this.session.apiBaseUrl}${path}`, init);
    if (!response.ok) {
      let tag = "http_error";
      let message = `HTTP ${response.status}`;
      try {
        const body = (await response.json()) as { error?: string; message?: string };
        tag = body.error ?? tag;
        message = body.message ?? message;
      } catch {
        // non-JSON error body: keep defaults
      }
      throw new ApiError(response.status, tag, message);
    }
    return (await response.json()) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    if (!this.session.token) {
      throw new ApiError(401, "missing_token", "session has no bearer token");
    }
    return this.request<T>(path, {
      method: "POST",
      headers: {
        "Content-Type": "application/json",
        Authorization: `Bearer ${this.session.token}`,
      },
      body: JSON.stringify(body),
    });
  }

  getRegions(parent?: string): Promise<{ regions: RegionDto[] }> {
    return this.request(`/regions${query({ parent })}`);
  }

  getSeries(
    regionId: string,
    metric: Metric,
    opts: { from?: string; to?: string; scale?: string; alignThreshold?: number } = {},
  ): Promise<SeriesDto> {
    return this.request(
      `/series/${encodeURIComponent(regionId)}/${metric}${query({
        from: opts.from,
        to: opts.to,
        scale: opts.scale,
        align_threshold: opts.alignThreshold,
      })}`,
    );
  }

  getCompare(
    regionIds: string[],
    metric: Metric,
    alignThreshold: number,
  ): Promise<CompareDto> {
    return this.request(
      `/compare${query({
        regions: regionIds.join(","),
        metric,
        align_threshold: alignThreshold,
      })}`,
    );
  }

  getHolds(state?: string): Promise<{ tickets: TicketDto[] }> {
    return this.request(`/holds${query({ state })}`);
  }

  decideHold(ticketId: string, decision: "APPROVE" | "REJECT"): Promise<TicketDto> {
    return this.post(`/holds/${encodeURIComponent(ticketId)}/decision`, {
      decision,
      operator: this.session.operator,
    });
  }

  getDiary(status?: string): Promise<{ entries: DiaryEntryDto[] }> {
    return this.request(`/diary${query({ status })}`);
  }

  getIssues(
    filter: { state?: IssueStateDto; category?: IssueCategoryDto } = {},
  ): Promise<{ issues: IssueDto[] }> {
    return this.request(`/issues${query(filter)}`);
  }

  assignIssue(issueId: string): Promise<IssueDto> {
    return this.post(`/issues/${encodeURIComponent(issueId)}/assign`, {
      operator: this.session.operator,
    });
  }

  resolveIssue(
    issueId: string,
    outcome: "RESOLVED" | "INVALID",
    note: string,
  ): Promise<IssueDto> {
    return this.post(`/issues/${encodeURIComponent(issueId)}/resolve`, {
      outcome,
      note,
    });
  }
}
