export function fmtTime(ms: number | null | undefined): string {
  if (ms === null || ms === undefined) return "-";
  const d = new Date(ms);
  const pad = (n: number) => String(n).padStart(2, "0");
  return (
    `${d.getFullYear()}-${pad(d.getMonth() + 1)}-${pad(d.getDate())} ` +
    `${pad(d.getHours())}:${pad(d.getMinutes())}:${pad(d.getSeconds())}`
  );
}

export function fmtValue(value: number | null, unit: string | null): string {
  if (value === null) return "-";
  const suffix = unit === "celsius" ? " °C" : unit === "percent_rh" ? " %RH" : "";
  return value.toFixed(2) + suffix;
}

/** "3s ago", "2m ago"; sub-second gaps round to "now". */
export function ago(ms: number, now: number): string {
  const gap = Math.max(0, now - ms);
  if (gap < 1000) return "now";
  const s = Math.floor(gap / 1000);
  if (s < 60) return `${s}s ago`;
  const m = Math.floor(s / 60);
  if (m < 60) return `${m}m ago`;
  return `${Math.floor(m / 60)}h ago`;
}

export function describeBody(body: {
  kind: string;
  [k: string]: unknown;
}): string {
  switch (body.kind) {
    case "set_enabled":
      return body.enabled ? "turn on" : "turn off";
    case "set_threshold": {
      const t = body.threshold as { low: number; high: number };
      return `threshold [${t.low}, ${t.high}]`;
    }
    case "set_push_period":
      return `push every ${body.push_period_s}s`;
    case "set_email_alerts":
      return body.email_alerts ? "alerts on" : "alerts off";
    case "actuator_command":
      return `buzz ${body.power_volts}V ${body.tone_hz}Hz ${body.duration_ms}ms`;
    default:
      return body.kind;
  }
}
