import { PanelApi, ApiError } from "./api.js";
import { Panel, type ControlHandlers } from "./render.js";
import { PanelStore } from "./state.js";
import { PanelFeed } from "./stream.js";
import type { ControlRow, InstructionBody } from "./types.js";
import { isInvalid, parseActuatorCommand, parsePushPeriod, parseThreshold } from "./validate.js";

const store = new PanelStore();
const api = new PanelApi();

let panel: Panel;

async function send(row: ControlRow, body: InstructionBody): Promise<void> {
  try {
    const resp = await api.submitControl(row.id, body);
    store.markSent(row.id, body, resp);
  } catch (err) {
    const message = err instanceof ApiError ? err.message : "control plane unreachable";
    store.markFailed(row.id, body, message);
  }
}

const handlers: ControlHandlers = {
  onSelect: (key) => store.select(key),

  onToggleEnabled: (row) => {
    void send(row, { kind: "set_enabled", enabled: !row.enabled });
  },

  onSubmitThreshold: (row, low, high) => {
    panel.clearFieldErrors();
    const parsed = parseThreshold(low, high);
    if (isInvalid(parsed)) {
      panel.setFieldError(parsed.field, parsed.message);
      return;
    }
    void send(row, { kind: "set_threshold", threshold: parsed });
  },

  onSubmitPeriod: (row, raw) => {
    panel.clearFieldErrors();
    const parsed = parsePushPeriod(raw);
    if (isInvalid(parsed)) {
      panel.setFieldError(parsed.field, parsed.message);
      return;
    }
    void send(row, { kind: "set_push_period", push_period_s: parsed });
  },

  onToggleAlerts: (row) => {
    void send(row, { kind: "set_email_alerts", email_alerts: !row.email_alerts });
  },

  onBuzz: (row, volts, tone, duration) => {
    panel.clearFieldErrors();
    const parsed = parseActuatorCommand(volts, tone, duration);
    if (isInvalid(parsed)) {
      panel.setFieldError(parsed.field, parsed.message);
      return;
    }
    void send(row, { kind: "actuator_command", ...parsed });
  },

  onCheckAll: () => {
    api
      .checkAll()
      .then((results) => store.setCheckAll(results))
      .catch(() => store.setCheckAll([]));
  },
};

const feed = new PanelFeed({
  onSnapshot: (model) => store.applySnapshot(model),
  onStatus: (up) => store.setConnected(up),
});

panel = new Panel(document.getElementById("app")!, store, handlers);
setInterval(() => store.tick(), 1000);
void feed.run();
