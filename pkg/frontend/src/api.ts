/** Typed client for the triage service HTTP+JSON API.
 *
 * The client performs no classification logic and no response reshaping:
 * every method returns the service payload verbatim so views render exactly
 * what the service said.
 */

import type {
  ContextResponse,
  CvReport,
  Explanation,
  Label,
  ModelListing,
  QueueFilters,
  QueueItem,
  QueuePage,
  SummaryResponse,
  WeeklyRatings,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: unknown,
  ) {
    super(`API error ${status}: ${JSON.stringify(detail)}`);
  }
}

export function buildQueueQuery(filters: QueueFilters): string {
  const params = new URLSearchParams();
  if (filters.replayId !== undefined) params.set("replay_id", filters.replayId);
  if (filters.flagged !== undefined) params.set("flagged", String(filters.flagged));
  if (filters.flagReason !== undefined) params.set("flag_reason", filters.flagReason);
  if (filters.label !== undefined) params.set("label", filters.label);
  params.set("offset", String(filters.offset ?? 0));
  params.set("limit", String(filters.limit ?? 50));
  return params.toString();
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly token: string = "",
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private headers(withBody: boolean): Record<string, string> {
    const headers: Record<string, string> = {};
    if (withBody) headers["Content-Type"] = "application/json";
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    return headers;
  }

  private async request<T>(method: "GET" | "POST", path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: this.headers(body !== undefined) };
    if (body !== undefined) init.body = JSON.stringify(body);
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    const payload = await response.json().catch(() => null);
    if (!response.ok) {
      throw new ApiError(response.status, payload && (payload as { detail?: unknown }).detail);
    }
    return payload as T;
  }

  listPredictions(filters: QueueFilters = {}): Promise<QueuePage> {
    return this.request("GET", `/predictions?${buildQueueQuery(filters)}`);
  }

  getPrediction(eventId: string): Promise<QueueItem> {
    return this.request("GET", `/predictions/${encodeURIComponent(eventId)}`);
  }

  getExplanation(eventId: string): Promise<Explanation> {
    return this.request("GET", `/predictions/${encodeURIComponent(eventId)}/explain`);
  }

  getContext(eventId: string): Promise<ContextResponse> {
    return this.request("GET", `/events/${encodeURIComponent(eventId)}/context`);
  }

  getSummary(eventId: string): Promise<SummaryResponse> {
    return this.request("GET", `/events/${encodeURIComponent(eventId)}/summary`);
  }

  listLabels(): Promise<{ labels: Label[] }> {
    return this.request("GET", "/labels");
  }

  reclassify(eventId: string, labelId: string, operatorId: string): Promise<QueueItem> {
    return this.request("POST", `/predictions/${encodeURIComponent(eventId)}/reclassify`, {
      label_id: labelId,
      operator_id: operatorId,
    });
  }

  confirm(eventId: string, operatorId: string): Promise<QueueItem> {
    return this.request("POST", `/predictions/${encodeURIComponent(eventId)}/confirm`, {
      operator_id: operatorId,
    });
  }

  rateReplay(replayId: string, rating: number, operatorId: string): Promise<unknown> {
    return this.request("POST", `/replays/${encodeURIComponent(replayId)}/rating`, {
      rating,
      operator_id: operatorId,
    });
  }

  listModels(): Promise<{ models: ModelListing[] }> {
    return this.request("GET", "/models");
  }

  activeReport(): Promise<CvReport> {
    return this.request("GET", "/models/active/report");
  }

  weeklyRatings(): Promise<WeeklyRatings> {
    return this.request("GET", "/reports/ratings/weekly");
  }
}
