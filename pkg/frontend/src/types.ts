// JSON shapes served by the casetrack API. Field names mirror the wire
// format; numbers stay numbers, exact rationals arrive as strings ("2/5").

export type Metric =
  | "confirmed"
  | "deceased"
  | "recovered"
  | "tested_positive"
  | "tested_negative"
  | "hospitalized";

export interface RegionDto {
  region_id: string;
  name_en: string;
  name_local: string;
  level: "COUNTRY" | "DIVISION" | "SUBDIVISION";
  parent_id: string | null;
  population: number | null;
  is_unassigned: boolean;
}

export interface SeriesPointDto {
  date: string;
  value: number;
}

export interface AlignedPointDto {
  day: number;
  value: number;
}

export interface SeriesDto {
  region_id: string;
  metric: Metric;
  scale: "linear" | "log";
  points: SeriesPointDto[];
  aligned?: AlignedPointDto[];
  align_threshold?: number;
  flags: string[];
}

export interface ProposedDto {
  kind: "COMMIT_POINT" | "REPLACE_HISTORY";
  day: string | null;
  value: number | null;
  points: [string, number][];
  tags: string[];
  source_id: string;
}

export type TicketStateDto = "HELD" | "APPROVED" | "REJECTED" | "EXPIRED_RETRIED";

export interface TicketDto {
  ticket_id: string;
  region_id: string;
  metric: Metric;
  state: TicketStateDto;
  triggered_rules: number[];
  created_at: string;
  expires_at: string;
  resolved_by: string | null;
  previous_value: number | null;
  proposed: ProposedDto;
}

export type IssueCategoryDto =
  | "NEW_CASE"
  | "RECOVER_CASE"
  | "DEATH_CASE"
  | "ERROR_REPORT"
  | "FEATURE_REQUEST"
  | "BREAKING_NEWS"
  | "FURTHER_DETAILS"
  | "TESTING_LOCATION"
  | "QUESTION";

export type IssueStateDto = "OPEN" | "ASSIGNED" | "RESOLVED" | "INVALID";

export interface IssueDto {
  issue_id: string;
  category: IssueCategoryDto;
  state: IssueStateDto;
  region_id: string | null;
  links: string[];
  body: string;
  submitted_at: string;
  assignee: string | null;
  resolution_note: string | null;
  resulting_records: string[];
}

export interface DiaryEntryDto {
  entry_id: string;
  status: "OPEN" | "RESOLVED" | "PERSISTENT";
  first_seen: string;
  last_seen: string;
  parent_region: string;
  metric: Metric;
  date: string;
  parent_value: number;
  children_sum: number;
  delta: number;
  staleness_note: Record<string, string>;
}

export interface CompareSeriesDto {
  region_id: string;
  points: AlignedPointDto[];
}

export interface CompareDto {
  metric: Metric;
  align_threshold: number;
  series: CompareSeriesDto[];
  excluded: { region_id: string; reason: string }[];
}
