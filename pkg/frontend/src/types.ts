// Payload shapes for the gateway API (the JSON Schemas under ../docs/api
// are the source of truth; contract tests validate fixtures against them).

export type Label = "safe" | "adult_content" | "harmful_content" | "suicide";
export type Decision = "ALLOW" | "BLOCK" | "REVIEW";
export type Verdict = "allow" | "block";

export const LABELS: Label[] = ["safe", "adult_content", "harmful_content", "suicide"];

export interface Resolution {
  verdict: Verdict;
  moderator: string;
  resolved_ts: number;
  relabel?: Label | null;
}

export interface ModerationResult {
  video_id: string;
  probabilities: number[];
  predicted: Label;
  decision: Decision;
  confidence: number;
  text_composed: string;
  checkpoint_fingerprint: string;
  ingest_ts: number;
  classified_ts: number;
  empty_text: boolean;
  gold_label?: Label;
  audio_kept_s?: number | null;
  hashtags?: string[];
  engagement?: { views: number; likes: number; comments: number } | null;
  resolution?: Resolution | null;
}

export interface StoreRecord {
  seq: number;
  last_write_ts: number;
  result: ModerationResult;
}

export interface ReviewPage {
  items: StoreRecord[];
  cursor: string | null;
}

export interface StatsDoc {
  window_start: number;
  window_end: number;
  total: number;
  by_label: Record<string, number>;
  by_decision: Record<string, number>;
  review_queue_depth: number;
  review_queue_depth_total?: number;
  throughput_per_s: number;
  confusion?: number[][] | null;
  macro?: Record<string, number> | null;
}

export interface QueueEvent {
  type: "hello" | "heartbeat" | "review_added" | "review_resolved" | "dropped";
  id?: string;
}

export interface DecisionForm {
  verdict: Verdict | null;
  relabel: Label | null;
  moderator: string;
}

export function isQueueEvent(doc: unknown): doc is QueueEvent {
  return (
    typeof doc === "object" &&
    doc !== null &&
    typeof (doc as { type?: unknown }).type === "string"
  );
}

export function assertReviewPage(doc: unknown): ReviewPage {
  const page = doc as ReviewPage;
  if (!page || !Array.isArray(page.items) || page.cursor === undefined) {
    throw new Error("malformed review page payload");
  }
  for (const item of page.items) {
    assertStoreRecord(item);
  }
  return page;
}

export function assertStoreRecord(doc: unknown): StoreRecord {
  const rec = doc as StoreRecord;
  if (
    !rec ||
    typeof rec.seq !== "number" ||
    !rec.result ||
    typeof rec.result.video_id !== "string" ||
    !Array.isArray(rec.result.probabilities) ||
    rec.result.probabilities.length !== 4
  ) {
    throw new Error("malformed store record payload");
  }
  return rec;
}

export function assertStats(doc: unknown): StatsDoc {
  const stats = doc as StatsDoc;
  if (!stats || typeof stats.total !== "number" || !stats.by_decision) {
    throw new Error("malformed stats payload");
  }
  return stats;
}
