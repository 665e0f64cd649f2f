// DOM layer: renders the live queue, the evidence panel with the decision
// form, and the stats sidebar. No classification logic lives here; every
// number shown comes straight from an API payload.

import { ApiClient, FetchFn, ReviewApi } from "./api.js";
import { connectEvents, StreamHandle, StreamStatus } from "./events.js";
import {
  EvidenceText,
  LABEL_GUIDANCE,
  LABEL_TITLES,
  formatCount,
  formatTime,
  labelList,
  percentages,
  splitComposed,
} from "./format.js";
import { QueueStore } from "./state.js";
import { DecisionForm, Label, StatsDoc, StoreRecord, Verdict } from "./types.js";

export interface KeyValueStorage {
  get(key: string): string | null;
  set(key: string, value: string): void;
}

export interface AppConfig {
  base: string;
  fetchFn?: FetchFn;
  doc: Document;
  statsIntervalMs?: number;
  staleAfterMs?: number;
  storage?: KeyValueStorage;
  streamOptions?: { baseDelayMs?: number; maxDelayMs?: number; offlineAfterFailures?: number };
}

const MODERATOR_KEY = "vidmod.moderator";

export class App {
  readonly client: ReviewApi;
  readonly store: QueueStore;
  private readonly doc: Document;
  private readonly storage: KeyValueStorage;
  private stream: StreamHandle | null = null;
  private statsTimer: ReturnType<typeof setInterval> | null = null;
  private staleTimer: ReturnType<typeof setInterval> | null = null;

  selectedId: string | null = null;
  form: DecisionForm = { verdict: null, relabel: null, moderator: "" };
  status: StreamStatus = "connecting";
  private lastStats: StatsDoc | null = null;
  private statsStale = false;

  constructor(private readonly config: AppConfig) {
    const fetchFn = config.fetchFn ?? fetch;
    this.client = new ApiClient(config.base, fetchFn);
    this.store = new QueueStore(this.client);
    this.doc = config.doc;
    this.storage = config.storage ?? memoryStorage();
    this.form.moderator = this.storage.get(MODERATOR_KEY) ?? "";
  }

  async start(): Promise<void> {
    this.mount();
    this.store.subscribe(() => this.onStoreChange());
    const fetchFn = this.config.fetchFn ?? fetch;
    this.stream = connectEvents(
      this.config.base,
      fetchFn,
      (event) => this.store.applyEvent(event),
      (status) => {
        this.status = status;
        this.renderBanner();
      },
      this.config.streamOptions,
    );
    this.statsTimer = setInterval(
      () => void this.refreshStats(),
      this.config.statsIntervalMs ?? 10_000,
    );
    this.staleTimer = setInterval(() => this.renderBanner(), 1_000);
    await Promise.all([this.store.refresh(), this.refreshStats()]);
  }

  stop(): void {
    this.stream?.stop();
    if (this.statsTimer !== null) clearInterval(this.statsTimer);
    if (this.staleTimer !== null) clearInterval(this.staleTimer);
  }

  // -- skeleton ---------------------------------------------------------------

  private mount(): void {
    const root = this.doc.getElementById("app") ?? this.doc.body;
    root.innerHTML = `
      <header>
        <h1>Review queue</h1>
        <span id="conn-banner" class="banner connecting">connecting</span>
      </header>
      <main>
        <section id="queue">
          <div id="queue-empty" class="empty" hidden>Queue clear — nothing waiting for review.</div>
          <ul id="queue-list"></ul>
        </section>
        <section id="detail"><div class="empty">Select an item.</div></section>
        <aside id="stats"><div class="empty">Loading stats…</div></aside>
      </main>
      <div id="notice" hidden></div>`;
    const list = this.el("queue-list");
    list.addEventListener("click", (ev) => {
      const li = (ev.target as Element).closest("li[data-id]");
      if (li) this.select(li.getAttribute("data-id"));
    });
  }

  private el(id: string): HTMLElement {
    const node = this.doc.getElementById(id);
    if (!node) throw new Error(`missing #${id}`);
    return node;
  }

  // -- queue ------------------------------------------------------------------

  private onStoreChange(): void {
    const items = this.store.items;
    if (this.selectedId && !this.store.has(this.selectedId)) {
      this.selectedId = null;
    }
    if (!this.selectedId && items.length) {
      this.selectedId = items[0].result.video_id;
    }
    this.renderQueue();
    this.renderDetail();
  }

  select(videoId: string | null): void {
    this.selectedId = videoId;
    this.form.verdict = null;
    this.form.relabel = null;
    this.renderQueue();
    this.renderDetail();
  }

  private renderQueue(): void {
    const list = this.el("queue-list");
    const empty = this.el("queue-empty");
    const items = this.store.items;
    empty.hidden = items.length > 0;
    list.innerHTML = items
      .map((rec) => {
        const r = rec.result;
        const active = r.video_id === this.selectedId ? " active" : "";
        return `
          <li data-id="${escapeHtml(r.video_id)}" class="queue-item${active}">
            <span class="qid">${escapeHtml(r.video_id)}</span>
            <span class="qlabel">${LABEL_TITLES[r.predicted]}</span>
            <span class="qconf">${(r.confidence * 100).toFixed(0)}%</span>
          </li>`;
      })
      .join("");
  }

  // -- detail / decision form ---------------------------------------------------

  private renderDetail(): void {
    const detail = this.el("detail");
    const rec = this.store.items.find((r) => r.result.video_id === this.selectedId);
    if (!rec) {
      detail.innerHTML = this.store.items.length
        ? `<div class="empty">Select an item.</div>`
        : `<div class="empty">Queue clear.</div>`;
      return;
    }
    detail.innerHTML = buildDetailHtml(rec);
    this.wireForm(rec);
  }

  private wireForm(rec: StoreRecord): void {
    const moderator = this.el("moderator") as HTMLInputElement;
    moderator.value = this.form.moderator;
    const submit = this.el("submit") as HTMLButtonElement;

    const update = () => {
      this.form.moderator = moderator.value;
      this.storage.set(MODERATOR_KEY, moderator.value);
      const checked = this.doc.querySelector<HTMLInputElement>(
        'input[name="verdict"]:checked',
      );
      this.form.verdict = (checked?.value as Verdict | undefined) ?? null;
      const relabel = (this.el("relabel") as HTMLSelectElement).value;
      this.form.relabel = relabel ? (relabel as Label) : null;
      submit.disabled = !this.form.verdict || !this.form.moderator.trim();
    };
    update();

    for (const input of Array.from(
      this.doc.querySelectorAll('input[name="verdict"], #relabel'),
    )) {
      input.addEventListener("change", update);
    }
    moderator.addEventListener("input", update);
    submit.addEventListener("click", () => void this.submit(rec.result.video_id));
  }

  async submit(videoId: string): Promise<void> {
    if (!this.form.verdict || !this.form.moderator.trim()) return;
    const outcome = await this.store.submit(videoId, {
      verdict: this.form.verdict,
      moderator: this.form.moderator.trim(),
      ...(this.form.relabel ? { relabel: this.form.relabel } : {}),
    });
    if (outcome.ok) {
      this.notice(`Resolved ${videoId}.`);
    } else if (outcome.alreadyHandled) {
      this.notice(`${videoId} was already handled by another moderator.`);
    } else if (outcome.fieldError) {
      const box = this.doc.getElementById("form-error");
      if (box) {
        box.textContent = outcome.fieldError;
        (box as HTMLElement).hidden = false;
      }
    } else {
      this.notice(`Failed to resolve ${videoId}: ${outcome.error ?? "unknown error"}`);
    }
    void this.refreshStats();
  }

  private notice(text: string): void {
    const box = this.el("notice");
    box.textContent = text;
    box.hidden = false;
  }

  // -- stats & connection -------------------------------------------------------

  async refreshStats(): Promise<void> {
    try {
      this.lastStats = await this.client.stats();
      this.statsStale = false;
    } catch {
      this.statsStale = true; // keep the last-good snapshot
    }
    this.renderStats();
  }

  private renderStats(): void {
    const panel = this.el("stats");
    const stats = this.lastStats;
    if (!stats) {
      panel.innerHTML = `<div class="empty">Stats unavailable.</div>`;
      return;
    }
    const queueDepth = stats.review_queue_depth_total ?? stats.review_queue_depth;
    const decisions = Object.entries(stats.by_decision)
      .map(([k, v]) => `<tr><td>${k}</td><td>${v}</td></tr>`)
      .join("");
    const labels = Object.entries(stats.by_label)
      .map(([k, v]) => `<tr><td>${escapeHtml(k)}</td><td>${v}</td></tr>`)
      .join("");
    panel.innerHTML = `
      <h2>Last hour ${this.statsStale ? '<span class="stale">stale</span>' : ""}</h2>
      <div id="queue-depth">Review queue depth: <strong>${queueDepth}</strong></div>
      <table class="stats-table"><caption>decisions</caption>${decisions}</table>
      <table class="stats-table"><caption>predicted labels</caption>${labels}</table>`;
  }

  private renderBanner(): void {
    const banner = this.el("conn-banner");
    banner.className = `banner ${this.status}`;
    const lastEvent = this.stream?.lastEventAt ?? null;
    const staleAfter = this.config.staleAfterMs ?? 45_000;
    const stale =
      this.status === "connected" && lastEvent !== null && Date.now() - lastEvent > staleAfter;
    banner.textContent =
      this.status === "offline"
        ? "offline — retrying"
        : stale
          ? "connected (events lagging)"
          : this.status;
  }
}

export function buildDetailHtml(rec: StoreRecord): string {
  const r = rec.result;
  const pct = percentages(r.probabilities);
  const bars = labelList()
    .map((label, i) => {
      return `
        <div class="prob-row" data-label="${label}">
          <span class="prob-name">${LABEL_TITLES[label]}</span>
          <span class="prob-bar"><span class="prob-fill" style="width:${pct[i]}%"></span></span>
          <span class="prob-pct">${pct[i]}%</span>
        </div>`;
    })
    .join("");
  const evidence: EvidenceText = splitComposed(r.text_composed);
  const hashtags = (r.hashtags ?? []).map((h) => `#${escapeHtml(h)}`).join(" ");
  const eng = r.engagement
    ? `${formatCount(r.engagement.views)} views · ${formatCount(r.engagement.likes)} likes · ` +
      `${formatCount(r.engagement.comments)} comments`
    : "";
  const options = labelList()
    .map((l) => `<option value="${l}">${LABEL_TITLES[l]}</option>`)
    .join("");
  const guidance = labelList()
    .map((l) => `<li><strong>${LABEL_TITLES[l]}:</strong> ${LABEL_GUIDANCE[l]}</li>`)
    .join("");
  return `
    <h2>${escapeHtml(r.video_id)}</h2>
    <div class="meta">
      predicted <strong>${LABEL_TITLES[r.predicted]}</strong>
      at ${(r.confidence * 100).toFixed(1)}% confidence ·
      ingested ${formatTime(r.ingest_ts)}
      ${r.empty_text ? '· <span class="flag">no usable text</span>' : ""}
    </div>
    <div class="probs">${bars}</div>
    <div class="evidence">
      <h3>Transcript (audio)</h3>
      <p class="text-asr">${escapeHtml(evidence.asr) || "<em>none</em>"}</p>
      <h3>On-screen text (OCR)</h3>
      <p class="text-ocr">${escapeHtml(evidence.ocr) || "<em>none</em>"}</p>
      <div class="tags">${hashtags}</div>
      <div class="engagement">${eng}</div>
    </div>
    <form class="decision" onsubmit="return false">
      <fieldset>
        <label><input type="radio" name="verdict" value="allow"> Allow</label>
        <label><input type="radio" name="verdict" value="block"> Block</label>
      </fieldset>
      <label>Relabel (optional)
        <select id="relabel"><option value="">keep prediction</option>${options}</select>
      </label>
      <details class="guidance"><summary>Label definitions</summary><ul>${guidance}</ul></details>
      <label>Moderator <input id="moderator" type="text" placeholder="your name"></label>
      <div id="form-error" class="error" hidden></div>
      <button id="submit" disabled>Submit decision</button>
    </form>`;
}

function escapeHtml(raw: string): string {
  return raw
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function memoryStorage(): KeyValueStorage {
  const data = new Map<string, string>();
  return {
    get: (k) => data.get(k) ?? null,
    set: (k, v) => void data.set(k, v),
  };
}
