// Typed client over the published review-service API. The fetch implementation
// is injectable so tests can run against a mocked service.

import type {
  AuditResponse,
  AuditSubmission,
  ItemPage,
  ItemView,
  StatsView,
} from "./types.js";

export type FetchLike = (
  input: string,
  init?: RequestInit,
) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: unknown,
  ) {
    super(`service error ${status}`);
  }
}

export class NetworkError extends Error {}

export interface ListParams {
  status?: string;
  cursor?: string;
  limit?: number;
}

export class ReviewApi {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    let resp: Response;
    try {
      resp = await this.fetchImpl(this.baseUrl + path, init);
    } catch (err) {
      throw new NetworkError(String(err));
    }
    if (!resp.ok) {
      let detail: unknown = null;
      try {
        detail = await resp.json();
      } catch {
        // non-JSON error body; keep null
      }
      throw new ApiError(resp.status, detail);
    }
    return resp;
  }

  async listItems(params: ListParams = {}): Promise<ItemPage> {
    const query = new URLSearchParams();
    if (params.status) query.set("status", params.status);
    if (params.cursor) query.set("cursor", params.cursor);
    if (params.limit) query.set("limit", String(params.limit));
    const qs = query.toString();
    const resp = await this.request(`/items${qs ? `?${qs}` : ""}`);
    return (await resp.json()) as ItemPage;
  }

  async getItem(id: string): Promise<ItemView> {
    const resp = await this.request(`/items/${encodeURIComponent(id)}`);
    return (await resp.json()) as ItemView;
  }

  /** POST an audit decision; resolves with the stored record and new status. */
  async postAudit(id: string, body: AuditSubmission): Promise<AuditResponse> {
    const resp = await this.request(`/items/${encodeURIComponent(id)}/audit`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    return (await resp.json()) as AuditResponse;
  }

  async stats(): Promise<StatsView> {
    const resp = await this.request("/stats");
    return (await resp.json()) as StatsView;
  }
}
