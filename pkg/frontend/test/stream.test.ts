import { describe, expect, it } from "vitest";
import { PanelFeed } from "../src/stream.js";
import { model } from "./fixtures.js";
import type { PanelModel } from "../src/types.js";

function ndjsonBody(lines: unknown[]): ReadableStream<Uint8Array> {
  const enc = new TextEncoder();
  return new ReadableStream({
    start(controller) {
      for (const line of lines) {
        controller.enqueue(enc.encode(JSON.stringify(line) + "\n"));
      }
      controller.close();
    },
  });
}

function streamResponse(lines: unknown[]): Response {
  return new Response(ndjsonBody(lines), {
    status: 200,
    headers: { "Content-Type": "application/x-ndjson" },
  });
}

interface Run {
  snapshots: PanelModel[];
  statuses: boolean[];
  sleeps: number[];
  feed: PanelFeed;
  done: Promise<void>;
}

function runFeed(fetchFn: typeof fetch, stopAfterSleeps: number): Run {
  const snapshots: PanelModel[] = [];
  const statuses: boolean[] = [];
  const sleeps: number[] = [];
  const run: Partial<Run> = { snapshots, statuses, sleeps };
  const feed = new PanelFeed({
    fetchFn,
    onSnapshot: (m) => snapshots.push(m),
    onStatus: (up) => statuses.push(up),
    minBackoffMs: 100,
    maxBackoffMs: 400,
    sleep: (ms) => {
      sleeps.push(ms);
      if (sleeps.length >= stopAfterSleeps) feed.stop();
      return Promise.resolve();
    },
  });
  run.feed = feed;
  run.done = feed.run();
  return run as Run;
}

describe("PanelFeed", () => {
  it("delivers snapshots and drops keepalives", async () => {
    const snap = model();
    const calls: string[] = [];
    const fetchFn: typeof fetch = async (input) => {
      const url = String(input);
      calls.push(url);
      if (url.endsWith("/api/stream")) {
        return streamResponse([snap, { keepalive: true }, snap]);
      }
      return new Response("{}", { status: 404 });
    };
    const run = runFeed(fetchFn, 1);
    await run.done;
    expect(run.snapshots.length).toBe(2);
    expect(run.snapshots[0].network.mode).toBe("online");
    expect(run.statuses[0]).toBe(true);
    // stream ended: marked disconnected before stopping
    expect(run.statuses.at(-1)).toBe(false);
  });

  it("backs off exponentially up to the cap while the server is down", async () => {
    const fetchFn: typeof fetch = async () => {
      throw new Error("connection refused");
    };
    const run = runFeed(fetchFn, 4);
    await run.done;
    expect(run.sleeps).toEqual([100, 200, 400, 400]);
    expect(run.snapshots).toEqual([]);
    expect(run.statuses.every((s) => s === false)).toBe(true);
  });

  it("falls back to polling /api/panel between reconnect attempts", async () => {
    const snap = model();
    const fetchFn: typeof fetch = async (input) => {
      const url = String(input);
      if (url.endsWith("/api/stream")) throw new Error("stream broken");
      return new Response(JSON.stringify(snap), { status: 200 });
    };
    const run = runFeed(fetchFn, 2);
    await run.done;
    expect(run.snapshots.length).toBe(2); // one poll per retry gap
    expect(run.snapshots[0].network.mode).toBe("online");
  });

  it("resets the backoff after a healthy connection", async () => {
    let attempt = 0;
    const snap = model();
    const fetchFn: typeof fetch = async (input) => {
      const url = String(input);
      if (url.endsWith("/api/panel")) throw new Error("down");
      attempt++;
      if (attempt <= 3) throw new Error("refused"); // sleeps 100, 200, 400
      return streamResponse([snap]); // connects, then ends; next sleep is 100 again
    };
    const run = runFeed(fetchFn, 4);
    await run.done;
    expect(run.sleeps).toEqual([100, 200, 400, 100]);
    expect(run.snapshots.length).toBe(1);
  });
});
