// Newline-delimited JSON event stream over plain fetch. Reconnects with
// exponential backoff when the stream drops; reports connection status so
// the UI can show offline/stale banners.

import { QueueEvent, isQueueEvent } from "./types.js";
import { FetchFn } from "./api.js";

export type StreamStatus = "connecting" | "connected" | "reconnecting" | "offline";

export interface StreamOptions {
  baseDelayMs?: number;
  maxDelayMs?: number;
  offlineAfterFailures?: number;
}

export interface StreamHandle {
  stop(): void;
  readonly lastEventAt: number | null;
}

export function connectEvents(
  base: string,
  fetchFn: FetchFn,
  onEvent: (event: QueueEvent) => void,
  onStatus: (status: StreamStatus) => void,
  options: StreamOptions = {},
): StreamHandle {
  const baseDelay = options.baseDelayMs ?? 500;
  const maxDelay = options.maxDelayMs ?? 8000;
  const offlineAfter = options.offlineAfterFailures ?? 3;

  let stopped = false;
  let failures = 0;
  let timer: ReturnType<typeof setTimeout> | null = null;
  const handle = { lastEventAt: null as number | null };

  async function readStream(): Promise<void> {
    const resp = await fetchFn(`${base}/api/v1/events`);
    if (!resp.ok || !resp.body) {
      throw new Error(`event stream HTTP ${resp.status}`);
    }
    failures = 0;
    onStatus("connected");
    const reader = resp.body.getReader();
    const decoder = new TextDecoder();
    let buffer = "";
    try {
      for (;;) {
        const { done, value } = await reader.read();
        if (done || stopped) break;
        buffer += decoder.decode(value, { stream: true });
        let newline = buffer.indexOf("\n");
        while (newline >= 0) {
          const line = buffer.slice(0, newline).trim();
          buffer = buffer.slice(newline + 1);
          newline = buffer.indexOf("\n");
          if (!line) continue;
          let doc: unknown;
          try {
            doc = JSON.parse(line);
          } catch {
            continue; // tolerate partial garbage on reconnect boundaries
          }
          if (isQueueEvent(doc)) {
            handle.lastEventAt = Date.now();
            onEvent(doc);
          }
        }
      }
    } finally {
      reader.cancel().catch(() => undefined);
    }
  }

  function scheduleReconnect(): void {
    if (stopped) return;
    failures += 1;
    onStatus(failures >= offlineAfter ? "offline" : "reconnecting");
    const delay = Math.min(baseDelay * 2 ** (failures - 1), maxDelay);
    timer = setTimeout(loop, delay);
  }

  function loop(): void {
    if (stopped) return;
    readStream()
      .then(() => {
        // server closed the stream cleanly; reconnect unless stopping
        if (!stopped) scheduleReconnect();
      })
      .catch(() => {
        if (!stopped) scheduleReconnect();
      });
  }

  onStatus("connecting");
  loop();

  return {
    stop() {
      stopped = true;
      if (timer !== null) clearTimeout(timer);
    },
    get lastEventAt() {
      return handle.lastEventAt;
    },
  };
}
