import type { PanelStore } from "./state.js";
import type {
  ControlRow,
  HealthRow,
  NodeRow,
  PanelModel,
  SecurityRow,
  StatsRow,
} from "./types.js";
import { deviceKey } from "./types.js";
import { describeBody, fmtTime, fmtValue } from "./format.js";

export interface ControlHandlers {
  onSelect(key: string): void;
  onToggleEnabled(row: ControlRow): void;
  onSubmitThreshold(row: ControlRow, low: string, high: string): void;
  onSubmitPeriod(row: ControlRow, period: string): void;
  onToggleAlerts(row: ControlRow): void;
  onBuzz(row: ControlRow, volts: string, tone: string, duration: string): void;
  onCheckAll(): void;
}

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

const esc = escapeHtml;

/**
 * Owns the page DOM. The skeleton (header, banner, five sections) is built
 * once; each store change re-fills section bodies. The control section is
 * only re-rendered when the data behind it changes, so form fields being
 * typed into survive the once-a-second snapshot churn.
 */
export class Panel {
  private readonly bodies: Record<string, HTMLElement> = {};
  private controlSig = "";

  constructor(
    private readonly root: HTMLElement,
    private readonly store: PanelStore,
    private readonly handlers: ControlHandlers,
  ) {
    this.root.innerHTML = `
      <div id="stale-banner" class="banner hidden"></div>
      <div id="toasts"></div>
      <header>
        <h1>fogdeck</h1>
        <span id="net-badge" class="badge">connecting</span>
      </header>
      <main class="grid">
        <section id="panel-info"><h2>info</h2><div class="body"></div></section>
        <section id="panel-network"><h2>network</h2><div class="body"></div></section>
        <section id="panel-stats"><h2>stats</h2><div class="body"></div></section>
        <section id="panel-health"><h2>health</h2><div class="body"></div></section>
        <section id="panel-control"><h2>control</h2><div class="body"></div></section>
      </main>`;
    for (const name of ["info", "network", "stats", "health", "control"]) {
      this.bodies[name] = this.root.querySelector(`#panel-${name} .body`) as HTMLElement;
    }
    this.wireEvents();
    store.subscribe(() => this.update());
    this.update();
  }

  selectedRow(): ControlRow | null {
    const m = this.store.model;
    if (!m || this.store.selected === null) return null;
    return m.controls.find((c) => deviceKey(c.id) === this.store.selected) ?? null;
  }

  setFieldError(field: string, message: string): void {
    const slot = this.root.querySelector(`[data-err="${field}"]`);
    if (slot) slot.textContent = message;
  }

  clearFieldErrors(): void {
    for (const slot of this.root.querySelectorAll("[data-err]")) {
      slot.textContent = "";
    }
  }

  update(): void {
    const m = this.store.model;
    this.renderBanner();
    this.renderToasts();
    this.renderBadge(m);
    if (!m) {
      for (const name of Object.keys(this.bodies)) {
        this.bodies[name].innerHTML = `<p class="empty">waiting for data</p>`;
      }
      return;
    }
    this.bodies.info.innerHTML = this.infoHtml(m);
    this.bodies.network.innerHTML = this.networkHtml(m);
    this.bodies.stats.innerHTML = this.statsHtml(m.stats);
    this.bodies.health.innerHTML = this.healthHtml(m);
    this.renderControl(m);
  }

  private renderBanner(): void {
    const banner = this.root.querySelector("#stale-banner") as HTMLElement;
    if (this.store.connected) {
      banner.classList.add("hidden");
      banner.textContent = "";
    } else {
      banner.classList.remove("hidden");
      const last = this.store.lastUpdateMs;
      banner.textContent =
        last === null
          ? "no connection to the control plane yet"
          : `connection lost; showing data from ${fmtTime(last)}`;
    }
  }

  private renderToasts(): void {
    const box = this.root.querySelector("#toasts") as HTMLElement;
    box.innerHTML = this.store.toasts
      .map((t) => `<div class="toast ${t.kind}">${esc(t.text)}</div>`)
      .join("");
  }

  private renderBadge(m: PanelModel | null): void {
    const badge = this.root.querySelector("#net-badge") as HTMLElement;
    if (!m) {
      badge.textContent = "connecting";
      badge.className = "badge";
      return;
    }
    badge.textContent = m.network.mode;
    badge.className = `badge mode-${m.network.mode}`;
  }

  private infoHtml(m: PanelModel): string {
    const skip = new Set(["refreshed_at_ms"]);
    const rows = Object.entries(m.info)
      .filter(([k]) => !skip.has(k))
      .map(([k, v]) => `<tr><th>${esc(k)}</th><td>${esc(String(v))}</td></tr>`)
      .join("");
    const devices = m.controls.length;
    const nodes = m.nodes.length;
    return `
      <table>${rows}
        <tr><th>fleet</th><td>${nodes} nodes, ${devices} devices</td></tr>
        <tr><th>refreshed</th><td>${fmtTime(m.info.refreshed_at_ms)}</td></tr>
      </table>`;
  }

  private networkHtml(m: PanelModel): string {
    const since = fmtTime(m.network.since_ms);
    const nodes = m.nodes.length
      ? `<table>
          <tr><th>node</th><th>reach</th><th>cloud</th><th>clients</th><th>buffered</th><th>dropped</th></tr>
          ${m.nodes.map((n) => this.nodeRowHtml(n)).join("")}
        </table>`
      : `<p class="empty">no fog nodes registered</p>`;
    const log = m.mode_log
      .slice(-4)
      .reverse()
      .map((e) => `<li>${esc(e.mode)} at ${fmtTime(e.since_ms)} (${esc(e.cause)})</li>`)
      .join("");
    return `
      <p>mode <b class="mode-${m.network.mode}">${esc(m.network.mode)}</b>
        since ${since} (${esc(m.network.cause)})</p>
      ${nodes}
      <ul class="mode-log">${log}</ul>`;
  }

  private nodeRowHtml(n: NodeRow): string {
    const c = n.counters;
    const clients = n.client_list.map(([cid, peer]) => `${cid}@${peer}`).join(", ");
    return `<tr class="${n.reachable ? "" : "bad"}">
      <td>${esc(n.fog_id)}</td>
      <td>${n.reachable ? "yes" : `no (${esc(n.reason)})`}</td>
      <td>${esc(n.cloud_mode ?? "?")}</td>
      <td title="${esc(clients)}">${n.active_clients}</td>
      <td>${c.buffered ?? 0}</td>
      <td>${c.dropped ?? 0}</td>
    </tr>`;
  }

  private statsHtml(rows: StatsRow[]): string {
    if (!rows.length) return `<p class="empty">no sensors yet</p>`;
    const body = rows
      .map((r) => {
        const key = deviceKey(r.id);
        const sel = key === this.store.selected ? " selected" : "";
        return `<tr class="stat-row${sel}" data-select="${esc(key)}">
          <td>${esc(key)}</td>
          <td>${esc(r.location.label || "-")}</td>
          <td class="num">${esc(fmtValue(r.value, r.unit))}</td>
          <td>${fmtTime(r.timestamp_ms)}</td>
          <td><span class="dot ${r.indicator}" title="${r.indicator}"></span></td>
        </tr>`;
      })
      .join("");
    return `<table>
      <tr><th>device</th><th>location</th><th>value</th><th>timestamp</th><th></th></tr>
      ${body}
    </table>`;
  }

  private healthHtml(m: PanelModel): string {
    const rows = m.health.length
      ? `<table>
          <tr><th>subject</th><th>state</th><th>reason</th><th>last seen</th></tr>
          ${m.health.map((h) => this.healthRowHtml(h)).join("")}
        </table>`
      : `<p class="empty">no health reports yet</p>`;
    const breaches = m.breaches
      .slice(-5)
      .reverse()
      .map(
        (b) =>
          `<li>${esc(b.fog_id)}/${esc(b.device_id)} peak ${b.peak_value.toFixed(2)}
           from ${fmtTime(b.started_at_ms)} ${b.ended_at_ms === null ? "(open)" : `to ${fmtTime(b.ended_at_ms)}`}</li>`,
      )
      .join("");
    return `
      ${rows}
      ${m.breaches.length ? `<h3>breach episodes</h3><ul class="breaches">${breaches}</ul>` : ""}
      <details id="security-feed">
        <summary>security events (${m.security.length})</summary>
        ${this.securityHtml(m.security)}
      </details>`;
  }

  private healthRowHtml(h: HealthRow): string {
    const subject = h.device_id === null ? h.fog_id : `${h.fog_id}/${h.device_id}`;
    return `<tr class="${h.state === "healthy" ? "" : "bad"}">
      <td>${esc(subject)}</td>
      <td>${esc(h.state)}</td>
      <td>${esc(h.reason || "-")}</td>
      <td>${fmtTime(h.last_seen_ms)}</td>
    </tr>`;
  }

  private securityHtml(events: SecurityRow[]): string {
    if (!events.length) return `<p class="empty">none observed</p>`;
    const rows = events
      .slice(-20)
      .reverse()
      .map(
        (e) => `<tr class="sec-row">
          <td>${fmtTime(e.observed_at_ms)}</td>
          <td>${esc(e.kind)}</td>
          <td>${esc(e.fog_id)}</td>
          <td>${esc(e.peer)}</td>
        </tr>`,
      )
      .join("");
    return `<table><tr><th>when</th><th>event</th><th>node</th><th>peer</th></tr>${rows}</table>`;
  }

  // --- control section -------------------------------------------------

  private renderControl(m: PanelModel): void {
    const row = this.selectedRow();
    const pending = row ? (this.store.pendingFor(deviceKey(row.id)) ?? null) : null;
    const sig = JSON.stringify([
      this.store.selected,
      row,
      pending?.body ?? null,
      this.store.checkAll,
      m.controls.map((c) => deviceKey(c.id)),
    ]);
    if (sig === this.controlSig) return;
    this.controlSig = sig;
    this.bodies.control.innerHTML = this.controlHtml(m, row, pending !== null);
  }

  private controlHtml(m: PanelModel, row: ControlRow | null, hasPending: boolean): string {
    if (!m.controls.length) {
      return `<p class="empty">no devices to control</p>
        ${this.checkAllHtml(m)}`;
    }
    const options = m.controls
      .map((c) => {
        const key = deviceKey(c.id);
        const sel = key === this.store.selected ? " selected" : "";
        return `<option value="${esc(key)}"${sel}>${esc(key)} (${esc(c.kind)})</option>`;
      })
      .join("");
    const picker = `<label>device
      <select id="device-picker">${options}</select></label>`;
    if (!row) return picker + this.checkAllHtml(m);

    const serverPending = row.pending;
    const pendingNote = hasPending
      ? `<p class="pending">pending change awaiting confirmation</p>`
      : serverPending
        ? `<p class="pending">fleet applying: ${esc(describeBody(serverPending))}</p>`
        : "";
    const toggle = `<button id="btn-toggle-enabled">${row.enabled ? "turn off" : "turn on"}</button>`;
    const sensorForms =
      row.kind === "buzzer_actuator"
        ? this.buzzFormHtml()
        : this.thresholdFormHtml(row) + this.periodFormHtml(row) + this.alertsHtml(row);
    return `
      ${picker}
      <div class="control-card" data-device="${esc(deviceKey(row.id))}">
        ${pendingNote}
        <p>${row.enabled ? "enabled" : "disabled"} ${toggle}</p>
        ${sensorForms}
      </div>
      ${this.checkAllHtml(m)}`;
  }

  private thresholdFormHtml(row: ControlRow): string {
    const t = row.threshold;
    return `
      <form id="form-threshold">
        <fieldset>
          <legend>working range</legend>
          <label>low <input id="thr-low" value="${t ? t.low : ""}" /></label>
          <span class="field-error" data-err="low"></span>
          <label>high <input id="thr-high" value="${t ? t.high : ""}" /></label>
          <span class="field-error" data-err="high"></span>
          <button type="submit">set</button>
        </fieldset>
      </form>`;
  }

  private periodFormHtml(row: ControlRow): string {
    return `
      <form id="form-period">
        <label>push period (s)
          <input id="period-input" value="${row.push_period_s}" /></label>
        <span class="field-error" data-err="period"></span>
        <button type="submit">set</button>
      </form>`;
  }

  private alertsHtml(row: ControlRow): string {
    return `<p>email alerts: ${row.email_alerts ? "on" : "off"}
      <button id="btn-toggle-alerts">${row.email_alerts ? "disable" : "enable"}</button></p>`;
  }

  private buzzFormHtml(): string {
    return `
      <form id="form-buzz">
        <fieldset>
          <legend>sound the buzzer</legend>
          <label>power (V) <input id="buzz-volts" value="5.0" /></label>
          <span class="field-error" data-err="volts"></span>
          <label>tone (Hz) <input id="buzz-tone" value="880" /></label>
          <span class="field-error" data-err="tone"></span>
          <label>duration (ms) <input id="buzz-duration" value="1000" /></label>
          <span class="field-error" data-err="duration"></span>
          <button type="submit">buzz</button>
        </fieldset>
      </form>`;
  }

  private checkAllHtml(m: PanelModel): string {
    const buzzers = m.controls.filter((c) => c.kind === "buzzer_actuator").length;
    const res = this.store.checkAll;
    const results = res
      ? `<ul id="check-all-results">${res.results
          .map(
            (r) =>
              `<li class="${r.ok ? "ok" : "bad"}">${esc(r.fog_id)}/${esc(r.device_id)}:
               ${r.ok ? "ok" : esc(r.error ?? "failed")}</li>`,
          )
          .join("")}</ul>`
      : "";
    return `
      <div class="check-all">
        <button id="btn-check-all" ${buzzers ? "" : "disabled"}>Check All (${buzzers} actuators)</button>
        ${results}
      </div>`;
  }

  // --- events ------------------------------------------------------------

  private wireEvents(): void {
    this.root.addEventListener("click", (ev) => {
      const target = ev.target as HTMLElement;
      const selectRow = target.closest("[data-select]");
      if (selectRow) {
        this.handlers.onSelect(selectRow.getAttribute("data-select")!);
        return;
      }
      const row = this.selectedRow();
      if (target.id === "btn-check-all") this.handlers.onCheckAll();
      else if (target.id === "btn-toggle-enabled" && row) this.handlers.onToggleEnabled(row);
      else if (target.id === "btn-toggle-alerts" && row) this.handlers.onToggleAlerts(row);
    });
    this.root.addEventListener("change", (ev) => {
      const target = ev.target as HTMLSelectElement;
      if (target.id === "device-picker") this.handlers.onSelect(target.value);
    });
    this.root.addEventListener("submit", (ev) => {
      ev.preventDefault();
      const form = ev.target as HTMLFormElement;
      const row = this.selectedRow();
      if (!row) return;
      const val = (id: string) =>
        (this.root.querySelector(`#${id}`) as HTMLInputElement | null)?.value ?? "";
      if (form.id === "form-threshold") {
        this.handlers.onSubmitThreshold(row, val("thr-low"), val("thr-high"));
      } else if (form.id === "form-period") {
        this.handlers.onSubmitPeriod(row, val("period-input"));
      } else if (form.id === "form-buzz") {
        this.handlers.onBuzz(row, val("buzz-volts"), val("buzz-tone"), val("buzz-duration"));
      }
    });
  }
}
