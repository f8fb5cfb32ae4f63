// Client-side mirrors of the server's instruction checks. Rejecting here
// only saves a round trip; the server re-validates everything.

export const MIN_PUSH_PERIOD_S = 1;
export const MAX_PUSH_PERIOD_S = 3600;
export const MIN_BUZZER_VOLTS = 3.3;
export const MAX_BUZZER_VOLTS = 9.0;

export interface Invalid {
  field: string;
  message: string;
}

function num(raw: string, field: string): number | Invalid {
  const v = Number(raw.trim());
  if (raw.trim() === "" || !Number.isFinite(v)) {
    return { field, message: "must be a number" };
  }
  return v;
}

export function parseThreshold(
  lowRaw: string,
  highRaw: string,
): { low: number; high: number } | Invalid {
  const low = num(lowRaw, "low");
  if (typeof low !== "number") return low;
  const high = num(highRaw, "high");
  if (typeof high !== "number") return high;
  if (low > high) {
    return { field: "low", message: "low must not exceed high" };
  }
  return { low, high };
}

export function parsePushPeriod(raw: string): number | Invalid {
  const v = num(raw, "period");
  if (typeof v !== "number") return v;
  if (v < MIN_PUSH_PERIOD_S || v > MAX_PUSH_PERIOD_S) {
    return {
      field: "period",
      message: `period must be within [${MIN_PUSH_PERIOD_S}, ${MAX_PUSH_PERIOD_S}] s`,
    };
  }
  return v;
}

export function parseActuatorCommand(
  voltsRaw: string,
  toneRaw: string,
  durationRaw: string,
): { power_volts: number; tone_hz: number; duration_ms: number } | Invalid {
  const volts = num(voltsRaw, "volts");
  if (typeof volts !== "number") return volts;
  if (volts < MIN_BUZZER_VOLTS || volts > MAX_BUZZER_VOLTS) {
    return {
      field: "volts",
      message: `power must be within [${MIN_BUZZER_VOLTS}, ${MAX_BUZZER_VOLTS}] V`,
    };
  }
  const tone = num(toneRaw, "tone");
  if (typeof tone !== "number") return tone;
  if (tone <= 0) return { field: "tone", message: "tone must be positive" };
  const duration = num(durationRaw, "duration");
  if (typeof duration !== "number") return duration;
  if (!Number.isInteger(duration) || duration < 1) {
    return { field: "duration", message: "duration must be a positive whole number of ms" };
  }
  return { power_volts: volts, tone_hz: tone, duration_ms: duration };
}

export function isInvalid(v: unknown): v is Invalid {
  return typeof v === "object" && v !== null && "message" in v && "field" in v;
}
