import type { ControlRow, NodeRow, PanelModel, StatsRow } from "../src/types.js";

export const T0 = 1_704_067_200_000;

export function statsRow(over: Partial<StatsRow> = {}): StatsRow {
  return {
    id: { fog_id: "fog-0", device_id: "temp-0" },
    location: { label: "lab bench", lat: null, lon: null },
    value: 25.0,
    unit: "celsius",
    timestamp_ms: T0,
    seq: 1,
    indicator: "green",
    ...over,
  };
}

export function controlRow(over: Partial<ControlRow> = {}): ControlRow {
  return {
    id: { fog_id: "fog-0", device_id: "temp-0" },
    kind: "temperature_humidity_sensor",
    location: { label: "lab bench", lat: null, lon: null },
    enabled: true,
    threshold: { low: 20, high: 30 },
    push_period_s: 5,
    email_alerts: false,
    pending: null,
    ...over,
  };
}

export function nodeRow(over: Partial<NodeRow> = {}): NodeRow {
  return {
    fog_id: "fog-0",
    reachable: true,
    reason: "",
    cloud_mode: "reachable",
    active_clients: 0,
    client_list: [],
    counters: { emitted: 10, pushed: 10, buffered: 0, dropped: 0 },
    last_seen_ms: T0,
    last_applied_instr: 0,
    ...over,
  };
}

export function model(over: Partial<PanelModel> = {}): PanelModel {
  return {
    info: { operator: "operator", application: "fogdeck", area: "test field", refreshed_at_ms: T0 },
    network: { mode: "online", since_ms: T0, cause: "startup" },
    mode_log: [{ mode: "online", since_ms: T0, cause: "startup" }],
    health: [
      { fog_id: "fog-0", device_id: null, state: "healthy", reason: "", last_seen_ms: T0 },
      { fog_id: "fog-0", device_id: "temp-0", state: "healthy", reason: "", last_seen_ms: T0 },
    ],
    stats: [statsRow()],
    controls: [controlRow(), controlRow({ id: { fog_id: "fog-0", device_id: "buzz-0" }, kind: "buzzer_actuator", threshold: null })],
    actuators: [
      {
        id: { fog_id: "fog-0", device_id: "buzz-0" },
        device_id: "buzz-0",
        powered: false,
        power_volts: 0,
        tone_hz: 0,
        remaining_ms: 0,
      },
    ],
    nodes: [nodeRow()],
    security: [],
    breaches: [],
    alerts: [],
    pending: [],
    ...over,
  };
}
