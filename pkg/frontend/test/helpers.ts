import { ResolveBody, ReviewApi } from "../src/api.js";
import { ModerationResult, ReviewPage, StatsDoc, StoreRecord } from "../src/types.js";

export function makeResult(videoId: string, overrides: Partial<ModerationResult> = {}): ModerationResult {
  return {
    video_id: videoId,
    probabilities: [0.4, 0.3, 0.2, 0.1],
    predicted: "safe",
    decision: "REVIEW",
    confidence: 0.4,
    text_composed: "Audio: we made a garden | OCR: part two",
    checkpoint_fingerprint: "fp",
    ingest_ts: 1000,
    classified_ts: 1001,
    empty_text: false,
    hashtags: ["diy", "daily"],
    engagement: { views: 1200, likes: 80, comments: 4 },
    ...overrides,
  };
}

export function makeRecord(videoId: string, seq: number, overrides: Partial<ModerationResult> = {}): StoreRecord {
  return { seq, last_write_ts: 1001, result: makeResult(videoId, overrides) };
}

export function emptyStats(): StatsDoc {
  return {
    window_start: 0,
    window_end: 3600,
    total: 0,
    by_label: { safe: 0, adult_content: 0, harmful_content: 0, suicide: 0 },
    by_decision: { ALLOW: 0, BLOCK: 0, REVIEW: 0 },
    review_queue_depth: 0,
    throughput_per_s: 0,
  };
}

/** In-memory ReviewApi fake mirroring the gateway's behavior. */
export class FakeApi implements ReviewApi {
  items: StoreRecord[] = [];
  resolveCalls: Array<{ id: string; body: ResolveBody }> = [];
  failResolveWith: { status: number; code: string; message: string } | null = null;
  statsDoc: StatsDoc = emptyStats();

  async reviewPage(limit = 50, cursor?: string | null): Promise<ReviewPage> {
    const after = cursor ? Number(cursor) : 0;
    const pending = this.items
      .filter((r) => r.seq > after && !r.result.resolution)
      .slice(0, limit);
    const last = pending[pending.length - 1];
    const exhausted =
      pending.length < limit ||
      this.items.filter((r) => r.seq > (last?.seq ?? 0) && !r.result.resolution).length === 0;
    return { items: pending, cursor: exhausted ? null : String(last.seq) };
  }

  async fullQueue(): Promise<StoreRecord[]> {
    const out: StoreRecord[] = [];
    let cursor: string | null = null;
    do {
      const page: ReviewPage = await this.reviewPage(50, cursor);
      out.push(...page.items);
      cursor = page.cursor;
    } while (cursor !== null);
    return out;
  }

  async resolve(videoId: string, body: ResolveBody): Promise<StoreRecord> {
    this.resolveCalls.push({ id: videoId, body });
    if (this.failResolveWith) {
      const { ApiError } = await import("../src/api.js");
      const f = this.failResolveWith;
      throw new ApiError(f.status, f.code, f.message);
    }
    const rec = this.items.find((r) => r.result.video_id === videoId);
    if (!rec) {
      const { ApiError } = await import("../src/api.js");
      throw new ApiError(404, "not_found", `no record for ${videoId}`);
    }
    rec.result.resolution = {
      verdict: body.verdict,
      moderator: body.moderator,
      resolved_ts: 2000,
      relabel: body.relabel ?? null,
    };
    return rec;
  }

  async stats(): Promise<StatsDoc> {
    return this.statsDoc;
  }
}

export function jsonResponse(doc: unknown, status = 200): Response {
  return new Response(JSON.stringify(doc), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

/** A fetch stub driven by a route table; unknown routes 404. */
export function fakeFetch(
  routes: Record<string, (init?: RequestInit) => Response | Promise<Response>>,
): typeof fetch {
  return async (input: RequestInfo | URL, init?: RequestInit) => {
    const url = String(input);
    for (const [prefix, handler] of Object.entries(routes)) {
      if (url.includes(prefix)) return handler(init);
    }
    return jsonResponse({ error: { code: "not_found", message: url } }, 404);
  };
}

export function streamOf(lines: string[], holdOpen = false): Response {
  const encoder = new TextEncoder();
  const body = new ReadableStream<Uint8Array>({
    start(controller) {
      for (const line of lines) {
        controller.enqueue(encoder.encode(line + "\n"));
      }
      if (!holdOpen) controller.close();
    },
  });
  return new Response(body, {
    status: 200,
    headers: { "Content-Type": "application/x-ndjson" },
  });
}

export async function waitFor(predicate: () => boolean, timeoutMs = 5000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    if (predicate()) return;
    await new Promise((resolve) => setTimeout(resolve, 10));
  }
  if (!predicate()) throw new Error("condition not met in time");
}
