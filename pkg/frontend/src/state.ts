// Queue state: the single mutable model behind the dashboard. Holds the
// pending review items, applies stream events, and runs the optimistic
// submit flow. The store is the source of truth; this cache only mirrors it.

import { ApiError, ResolveBody, ReviewApi } from "./api.js";
import { QueueEvent, StoreRecord } from "./types.js";

export interface SubmitOutcome {
  ok: boolean;
  /** set when the item was taken by someone else (HTTP 409) */
  alreadyHandled?: boolean;
  /** field-level validation problems (HTTP 422) */
  fieldError?: string;
  error?: string;
}

export class QueueStore {
  items: StoreRecord[] = [];
  private listeners: Array<() => void> = [];
  private refreshing = false;
  private refreshQueued = false;

  constructor(private readonly client: ReviewApi) {}

  subscribe(fn: () => void): () => void {
    this.listeners.push(fn);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== fn);
    };
  }

  private notify(): void {
    for (const fn of [...this.listeners]) fn();
  }

  has(videoId: string): boolean {
    return this.items.some((r) => r.result.video_id === videoId);
  }

  async refresh(): Promise<void> {
    // coalesce concurrent refreshes; a queued one reruns after the current
    if (this.refreshing) {
      this.refreshQueued = true;
      return;
    }
    this.refreshing = true;
    try {
      do {
        this.refreshQueued = false;
        const items = await this.client.fullQueue();
        this.items = items;
        this.notify();
      } while (this.refreshQueued);
    } finally {
      this.refreshing = false;
    }
  }

  applyEvent(event: QueueEvent): void {
    if (event.type === "review_added") {
      // the event carries only the id; re-pull the queue for the payload
      void this.refresh();
    } else if (event.type === "review_resolved" && event.id) {
      this.removeLocal(event.id);
    }
  }

  removeLocal(videoId: string): void {
    const before = this.items.length;
    this.items = this.items.filter((r) => r.result.video_id !== videoId);
    if (this.items.length !== before) this.notify();
  }

  async submit(videoId: string, body: ResolveBody): Promise<SubmitOutcome> {
    try {
      await this.client.resolve(videoId, body);
      this.removeLocal(videoId); // optimistic: the event will agree
      return { ok: true };
    } catch (err) {
      if (err instanceof ApiError) {
        if (err.status === 409) {
          this.removeLocal(videoId);
          return { ok: false, alreadyHandled: true, error: err.message };
        }
        if (err.status === 422) {
          return { ok: false, fieldError: err.message, error: err.message };
        }
        return { ok: false, error: err.message };
      }
      return { ok: false, error: String(err) };
    }
  }
}
