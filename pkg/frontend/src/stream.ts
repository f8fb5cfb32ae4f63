import { NdjsonParser } from "./ndjson.js";
import type { PanelModel } from "./types.js";

export interface FeedOptions {
  base?: string;
  fetchFn?: typeof fetch;
  onSnapshot: (model: PanelModel) => void;
  onStatus: (connected: boolean) => void;
  minBackoffMs?: number;
  maxBackoffMs?: number;
  sleep?: (ms: number) => Promise<void>;
}

const defaultSleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms));

function isSnapshot(obj: unknown): obj is PanelModel {
  return typeof obj === "object" && obj !== null && "network" in obj;
}

/**
 * One long-lived connection to /api/stream with exponential backoff on
 * loss. While the stream is down, each retry gap first polls /api/panel
 * once so the page keeps moving even if only the streaming route is
 * broken (proxy in the way, server mid-restart).
 */
export class PanelFeed {
  private readonly base: string;
  private readonly fetchFn: typeof fetch;
  private readonly minBackoff: number;
  private readonly maxBackoff: number;
  private readonly sleep: (ms: number) => Promise<void>;
  private backoff: number;
  private stopped = false;
  private ctl: AbortController | null = null;

  constructor(private readonly opts: FeedOptions) {
    this.base = opts.base ?? "";
    this.fetchFn = opts.fetchFn ?? ((...args) => fetch(...args));
    this.minBackoff = opts.minBackoffMs ?? 500;
    this.maxBackoff = opts.maxBackoffMs ?? 8000;
    this.sleep = opts.sleep ?? defaultSleep;
    this.backoff = this.minBackoff;
  }

  async run(): Promise<void> {
    while (!this.stopped) {
      try {
        await this.streamOnce();
      } catch {
        // fall through to backoff; covers refused connections and
        // mid-stream drops alike
      }
      this.opts.onStatus(false);
      if (this.stopped) break;
      await this.pollOnce();
      await this.sleep(this.backoff);
      this.backoff = Math.min(this.backoff * 2, this.maxBackoff);
    }
  }

  stop(): void {
    this.stopped = true;
    this.ctl?.abort();
  }

  private async streamOnce(): Promise<void> {
    this.ctl = new AbortController();
    const resp = await this.fetchFn(this.base + "/api/stream", {
      signal: this.ctl.signal,
    });
    if (!resp.ok || !resp.body) throw new Error(`stream: HTTP ${resp.status}`);
    this.opts.onStatus(true);
    this.backoff = this.minBackoff; // healthy connection resets the clock
    const parser = new NdjsonParser((obj) => {
      if (isSnapshot(obj)) this.opts.onSnapshot(obj); // keepalives fall out here
    });
    const reader = resp.body.getReader();
    const decoder = new TextDecoder();
    try {
      for (;;) {
        const { value, done } = await reader.read();
        if (done) break;
        parser.feed(decoder.decode(value, { stream: true }));
      }
      parser.flush();
    } finally {
      reader.releaseLock();
    }
  }

  private async pollOnce(): Promise<void> {
    try {
      const resp = await this.fetchFn(this.base + "/api/panel");
      if (resp.ok) {
        const model = (await resp.json()) as PanelModel;
        this.opts.onSnapshot(model);
      }
    } catch {
      // still down; the stream retry will keep trying
    }
  }
}
