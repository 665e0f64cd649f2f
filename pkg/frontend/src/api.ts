// Typed client for the gateway. Every response is shape-checked before it
// reaches UI code; HTTP errors surface as ApiError with the server's
// machine code.

import {
  ReviewPage,
  StatsDoc,
  StoreRecord,
  Verdict,
  Label,
  assertReviewPage,
  assertStats,
  assertStoreRecord,
} from "./types.js";

export type FetchFn = typeof fetch;

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function throwApiError(resp: Response): Promise<never> {
  let code = "http_error";
  let message = `HTTP ${resp.status}`;
  try {
    const doc = (await resp.json()) as { error?: { code?: string; message?: string } };
    if (doc.error) {
      code = doc.error.code ?? code;
      message = doc.error.message ?? message;
    }
  } catch {
    // non-JSON error body; keep the generic message
  }
  throw new ApiError(resp.status, code, message);
}

export interface ResolveBody {
  verdict: Verdict;
  moderator: string;
  relabel?: Label;
}

/** What the UI layers depend on; ApiClient is the HTTP implementation. */
export interface ReviewApi {
  reviewPage(limit?: number, cursor?: string | null): Promise<ReviewPage>;
  fullQueue(maxItems?: number): Promise<StoreRecord[]>;
  resolve(videoId: string, body: ResolveBody): Promise<StoreRecord>;
  stats(): Promise<StatsDoc>;
}

export class ApiClient implements ReviewApi {
  constructor(
    private readonly base: string,
    private readonly fetchFn: FetchFn = fetch,
  ) {}

  private url(path: string): string {
    return `${this.base}${path}`;
  }

  async reviewPage(limit = 50, cursor?: string | null): Promise<ReviewPage> {
    const params = new URLSearchParams({ limit: String(limit) });
    if (cursor) params.set("cursor", cursor);
    const resp = await this.fetchFn(this.url(`/api/v1/review?${params}`));
    if (!resp.ok) await throwApiError(resp);
    return assertReviewPage(await resp.json());
  }

  /** Walk the cursor until the queue is exhausted (bounded for sanity). */
  async fullQueue(maxItems = 500): Promise<StoreRecord[]> {
    const items: StoreRecord[] = [];
    let cursor: string | null = null;
    do {
      const page: ReviewPage = await this.reviewPage(50, cursor);
      items.push(...page.items);
      cursor = page.cursor;
    } while (cursor !== null && items.length < maxItems);
    return items;
  }

  async resolve(videoId: string, body: ResolveBody): Promise<StoreRecord> {
    const resp = await this.fetchFn(this.url(`/api/v1/review/${encodeURIComponent(videoId)}`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!resp.ok) await throwApiError(resp);
    return assertStoreRecord(await resp.json());
  }

  async stats(): Promise<StatsDoc> {
    const resp = await this.fetchFn(this.url("/api/v1/stats"));
    if (!resp.ok) await throwApiError(resp);
    return assertStats(await resp.json());
  }
}
