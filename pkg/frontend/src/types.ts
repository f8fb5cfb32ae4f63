// Wire shapes as the control plane serializes them. Field names match the
// JSON exactly; everything here is data, no behavior.

export interface DeviceId {
  fog_id: string;
  device_id: string;
}

export interface WorkingRange {
  low: number;
  high: number;
}

export interface Location {
  label: string;
  lat: number | null;
  lon: number | null;
}

export type DeviceKind =
  | "temperature_humidity_sensor"
  | "clock"
  | "buzzer_actuator";

export type Indicator = "green" | "red" | "grey";

export interface StatsRow {
  id: DeviceId;
  location: Location;
  value: number | null;
  unit: string | null;
  timestamp_ms: number | null;
  seq: number | null;
  indicator: Indicator;
}

export interface ControlRow {
  id: DeviceId;
  kind: DeviceKind;
  location: Location;
  enabled: boolean;
  threshold: WorkingRange | null;
  push_period_s: number;
  email_alerts: boolean;
  pending: InstructionBody | null; // server-side echo, not the UI's own
}

export interface HealthRow {
  fog_id: string;
  device_id: string | null; // null = the fog node itself
  state: "healthy" | "faulty" | "unreachable";
  reason: string;
  last_seen_ms: number;
}

export interface NetworkMode {
  mode: "online" | "offline";
  since_ms: number;
  cause: string;
}

export interface NodeRow {
  fog_id: string;
  reachable: boolean;
  reason: string;
  cloud_mode: string | null;
  active_clients: number;
  client_list: [string, string][]; // [client_id, peer address]
  counters: { emitted?: number; pushed?: number; buffered?: number; dropped?: number };
  last_seen_ms: number;
  last_applied_instr: number;
}

export interface SecurityRow {
  seq: number;
  fog_id: string;
  kind: string;
  peer: string;
  observed_at_ms: number;
}

export interface ActuatorRow {
  id: DeviceId;
  device_id: string;
  powered: boolean;
  power_volts: number;
  tone_hz: number;
  remaining_ms: number;
}

export interface BreachRow {
  fog_id: string;
  device_id: string;
  started_at_ms: number;
  ended_at_ms: number | null;
  peak_value: number;
  alert_sent: boolean;
}

export interface AlertRow {
  fog_id: string;
  device_id: string;
  value: number;
  threshold: WorkingRange;
  episode_started_at_ms: number;
  dispatched_at_ms: number;
  delivered: boolean;
}

export interface PendingRow {
  fog_id: string;
  device_id: string;
  body: InstructionBody;
  instr_id: number;
  issued_at_ms: number;
  via: "store" | "direct";
}

export type InstructionBody =
  | { kind: "set_enabled"; enabled: boolean }
  | { kind: "set_threshold"; threshold: WorkingRange }
  | { kind: "set_push_period"; push_period_s: number }
  | { kind: "set_email_alerts"; email_alerts: boolean }
  | {
      kind: "actuator_command";
      power_volts: number;
      tone_hz: number;
      duration_ms: number;
    };

export interface PanelModel {
  info: Record<string, unknown> & { refreshed_at_ms: number };
  network: NetworkMode;
  mode_log: NetworkMode[];
  health: HealthRow[];
  stats: StatsRow[];
  controls: ControlRow[];
  actuators: ActuatorRow[];
  nodes: NodeRow[];
  security: SecurityRow[];
  breaches: BreachRow[];
  alerts: AlertRow[];
  pending: PendingRow[];
}

export interface ControlResponse {
  via: "store" | "direct";
  instr_id: number;
  pending?: boolean;
  ok?: boolean;
}

export interface CheckAllResult {
  fog_id: string;
  device_id: string;
  ok: boolean;
  detail?: ControlResponse;
  error?: string;
}

export function deviceKey(id: DeviceId): string {
  return `${id.fog_id}/${id.device_id}`;
}
