import type {
  ControlResponse,
  ControlRow,
  DeviceId,
  InstructionBody,
  NodeRow,
  PanelModel,
} from "./types.js";
import { deviceKey } from "./types.js";
import { describeBody } from "./format.js";

/** A change the operator sent that the fleet has not echoed back yet. */
export interface PendingChange {
  key: string;
  body: InstructionBody;
  sentAt: number;
  instrId: number | null;
  via: "store" | "direct" | null;
}

export interface Toast {
  kind: "info" | "error";
  text: string;
  at: number;
}

export const PENDING_TIMEOUT_MS = 10_000;
export const TOAST_TTL_MS = 8_000;
const MAX_TOASTS = 5;

function bodyConfirmed(row: ControlRow, nodes: NodeRow[], p: PendingChange): boolean {
  const b = p.body;
  switch (b.kind) {
    case "set_enabled":
      return row.enabled === b.enabled;
    case "set_threshold":
      return (
        row.threshold !== null &&
        row.threshold.low === b.threshold.low &&
        row.threshold.high === b.threshold.high
      );
    case "set_push_period":
      return row.push_period_s === b.push_period_s;
    case "set_email_alerts":
      return row.email_alerts === b.email_alerts;
    case "actuator_command": {
      // No descriptor field changes; the node's applied-instruction
      // watermark is the only store-route confirmation signal.
      if (p.instrId === null || p.via !== "store") return false;
      const node = nodes.find((n) => n.fog_id === row.id.fog_id);
      return node !== undefined && node.last_applied_instr >= p.instrId;
    }
  }
}

/**
 * Single source of truth for the page: the latest panel snapshot plus
 * UI-local state (selection, unacknowledged changes, toasts, connection
 * health). Renderers subscribe; every mutation goes through a method here.
 *
 * Pending changes clear three ways: the next snapshot echoes the change
 * back, a direct-link ack already confirmed it at submit time, or the
 * 10 s timeout fires and raises an error toast.
 */
export class PanelStore {
  model: PanelModel | null = null;
  lastUpdateMs: number | null = null;
  connected = false;
  selected: string | null = null;
  pending = new Map<string, PendingChange>();
  toasts: Toast[] = [];
  checkAll: { results: { fog_id: string; device_id: string; ok: boolean; error?: string }[]; at: number } | null = null;

  private listeners = new Set<() => void>();
  private seenAlerts: Set<string> | null = null;

  constructor(private readonly now: () => number = Date.now) {}

  subscribe(fn: () => void): () => void {
    this.listeners.add(fn);
    return () => this.listeners.delete(fn);
  }

  private emit(): void {
    for (const fn of this.listeners) fn();
  }

  applySnapshot(model: PanelModel): void {
    this.model = model;
    this.lastUpdateMs = this.now();
    if (this.selected === null) {
      const first = model.controls[0];
      if (first) this.selected = deviceKey(first.id);
    }
    this.reconcilePending(model);
    this.noteAlerts(model);
    this.expire();
    this.emit();
  }

  setConnected(up: boolean): void {
    if (this.connected === up) return;
    this.connected = up;
    this.emit();
  }

  select(key: string): void {
    this.selected = key;
    this.emit();
  }

  /** Record the server's answer to a control POST. */
  markSent(id: DeviceId, body: InstructionBody, resp: ControlResponse): void {
    const key = deviceKey(id);
    if (resp.via === "direct") {
      // The node acked (or refused) over the wire before the POST returned.
      if (resp.ok) {
        this.toast("info", `applied: ${describeBody(body)} on ${key}`);
      } else {
        this.toast("error", `${key} rejected: ${describeBody(body)}`);
      }
      this.emit();
      return;
    }
    this.pending.set(key, {
      key,
      body,
      sentAt: this.now(),
      instrId: resp.instr_id,
      via: resp.via,
    });
    this.emit();
  }

  markFailed(id: DeviceId, body: InstructionBody, message: string): void {
    this.toast("error", `${describeBody(body)} on ${deviceKey(id)}: ${message}`);
    this.emit();
  }

  setCheckAll(results: { fog_id: string; device_id: string; ok: boolean; error?: string }[]): void {
    this.checkAll = { results, at: this.now() };
    this.emit();
  }

  /** Periodic housekeeping: pending timeouts and toast expiry. */
  tick(): void {
    const before = this.pending.size + this.toasts.length;
    this.expire();
    if (this.pending.size + this.toasts.length !== before) this.emit();
  }

  pendingFor(key: string): PendingChange | undefined {
    return this.pending.get(key);
  }

  /** Breach alerts arriving after page load become toasts; history does not. */
  private noteAlerts(model: PanelModel): void {
    const keys = model.alerts.map(
      (a) => `${a.fog_id}/${a.device_id}@${a.episode_started_at_ms}:${a.dispatched_at_ms}`,
    );
    if (this.seenAlerts === null) {
      this.seenAlerts = new Set(keys);
      return;
    }
    for (let i = 0; i < keys.length; i++) {
      if (this.seenAlerts.has(keys[i])) continue;
      this.seenAlerts.add(keys[i]);
      const a = model.alerts[i];
      this.toast(
        "error",
        `alert: ${a.fog_id}/${a.device_id} at ${a.value.toFixed(2)} ` +
          `outside [${a.threshold.low}, ${a.threshold.high}]`,
      );
    }
  }

  private reconcilePending(model: PanelModel): void {
    for (const [key, p] of [...this.pending]) {
      const row = model.controls.find((c) => deviceKey(c.id) === key);
      if (row && bodyConfirmed(row, model.nodes, p)) {
        this.pending.delete(key);
        this.toast("info", `confirmed: ${describeBody(p.body)} on ${key}`);
      }
    }
  }

  private expire(): void {
    const now = this.now();
    for (const [key, p] of [...this.pending]) {
      if (now - p.sentAt > PENDING_TIMEOUT_MS) {
        this.pending.delete(key);
        this.toast("error", `no confirmation for ${describeBody(p.body)} on ${key}`);
      }
    }
    this.toasts = this.toasts.filter((t) => now - t.at <= TOAST_TTL_MS);
  }

  private toast(kind: Toast["kind"], text: string): void {
    this.toasts.push({ kind, text, at: this.now() });
    if (this.toasts.length > MAX_TOASTS) {
      this.toasts = this.toasts.slice(-MAX_TOASTS);
    }
  }
}
