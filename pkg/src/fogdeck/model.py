"""Domain types and pure evaluation logic shared by every other module.

Everything here is an immutable value object; the operations are total
functions with no I/O, safe to call from any thread.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional, Union

_ID_RE = re.compile(r"^[A-Za-z0-9_-]{1,64}$")


class DeviceKind(str, Enum):
    TEMPERATURE_HUMIDITY_SENSOR = "temperature_humidity_sensor"
    CLOCK = "clock"
    BUZZER_ACTUATOR = "buzzer_actuator"


SENSOR_KINDS = frozenset({DeviceKind.TEMPERATURE_HUMIDITY_SENSOR})


class Unit(str, Enum):
    CELSIUS = "celsius"
    PERCENT_RH = "percent_rh"


class Evaluation(str, Enum):
    NORMAL = "normal"
    ABNORMAL = "abnormal"


class Indicator(str, Enum):
    GREEN = "green"
    RED = "red"
    GREY = "grey"


class HealthState(str, Enum):
    HEALTHY = "healthy"
    FAULTY = "faulty"
    UNREACHABLE = "unreachable"


class Mode(str, Enum):
    ONLINE = "online"
    OFFLINE = "offline"


class SecurityEventKind(str, Enum):
    UNKNOWN_CLIENT_CONNECTED = "unknown_client_connected"
    AUTH_FAILURE = "auth_failure"
    FRAME_TAMPERED = "frame_tampered"
    REPLAY_DETECTED = "replay_detected"


@dataclass(frozen=True, slots=True)
class DeviceId:
    """Globally unique device address: (fog node, device within that node).

    Charset/length rules are enforced where ids enter the system
    (descriptor registration, validate_reading), not at construction.
    """

    fog_id: str
    device_id: str

    def is_valid(self) -> bool:
        return bool(_ID_RE.match(self.fog_id) and _ID_RE.match(self.device_id))

    def __str__(self) -> str:
        return f"{self.fog_id}/{self.device_id}"

    def to_json(self) -> dict[str, Any]:
        return {"fog_id": self.fog_id, "device_id": self.device_id}

    @classmethod
    def from_json(cls, d: dict[str, Any]) -> "DeviceId":
        return cls(fog_id=d["fog_id"], device_id=d["device_id"])


@dataclass(frozen=True, slots=True)
class WorkingRange:
    """Operator-set inclusive [low, high] bounds in the sensor's unit."""

    low: float
    high: float

    def __post_init__(self) -> None:
        if not (self.low <= self.high):
            raise ValueError(f"working range low > high: {self.low} > {self.high}")

    def to_json(self) -> dict[str, Any]:
        return {"low": self.low, "high": self.high}

    @classmethod
    def from_json(cls, d: dict[str, Any]) -> "WorkingRange":
        return cls(low=float(d["low"]), high=float(d["high"]))


@dataclass(frozen=True, slots=True)
class Location:
    label: str = ""
    lat: Optional[float] = None
    lon: Optional[float] = None

    def to_json(self) -> dict[str, Any]:
        return {"label": self.label, "lat": self.lat, "lon": self.lon}

    @classmethod
    def from_json(cls, d: dict[str, Any]) -> "Location":
        return cls(label=d.get("label", ""), lat=d.get("lat"), lon=d.get("lon"))


MIN_PUSH_PERIOD_S = 1.0
MAX_PUSH_PERIOD_S = 3600.0


@dataclass(frozen=True, slots=True)
class DeviceDescriptor:
    """Identity, kind, location, and runtime config of one edge device."""

    id: DeviceId
    kind: DeviceKind
    location: Location = field(default_factory=Location)
    enabled: bool = True
    threshold: Optional[WorkingRange] = None
    push_period_s: float = 5.0
    email_alerts: bool = False

    def __post_init__(self) -> None:
        if not self.id.is_valid():
            raise ValueError(f"bad device id: {self.id}")
        if not (MIN_PUSH_PERIOD_S <= self.push_period_s <= MAX_PUSH_PERIOD_S):
            raise ValueError(f"push_period_s out of [1, 3600]: {self.push_period_s}")
        if self.threshold is not None and self.kind not in SENSOR_KINDS:
            raise ValueError(f"threshold not allowed on kind {self.kind.value}")

    def to_json(self) -> dict[str, Any]:
        return {
            "id": self.id.to_json(),
            "kind": self.kind.value,
            "location": self.location.to_json(),
            "enabled": self.enabled,
            "threshold": self.threshold.to_json() if self.threshold else None,
            "push_period_s": self.push_period_s,
            "email_alerts": self.email_alerts,
        }

    @classmethod
    def from_json(cls, d: dict[str, Any]) -> "DeviceDescriptor":
        thr = d.get("threshold")
        return cls(
            id=DeviceId.from_json(d["id"]),
            kind=DeviceKind(d["kind"]),
            location=Location.from_json(d.get("location") or {}),
            enabled=bool(d.get("enabled", True)),
            threshold=WorkingRange.from_json(thr) if thr else None,
            push_period_s=float(d.get("push_period_s", 5.0)),
            email_alerts=bool(d.get("email_alerts", False)),
        )


@dataclass(frozen=True, slots=True)
class SensorReading:
    """One timestamped measurement; (id, seq) is the idempotency key."""

    id: DeviceId
    value: float
    unit: Unit
    timestamp_ms: int
    seq: int

    def key(self) -> tuple[str, str, int]:
        return (self.id.fog_id, self.id.device_id, self.seq)

    def to_json(self) -> dict[str, Any]:
        return {
            "id": self.id.to_json(),
            "value": self.value,
            "unit": self.unit.value,
            "timestamp_ms": self.timestamp_ms,
            "seq": self.seq,
        }

    @classmethod
    def from_json(cls, d: dict[str, Any]) -> "SensorReading":
        return cls(
            id=DeviceId.from_json(d["id"]),
            value=float(d["value"]),
            unit=Unit(d["unit"]),
            timestamp_ms=int(d["timestamp_ms"]),
            seq=int(d["seq"]),
        )


@dataclass(frozen=True, slots=True)
class HealthStatus:
    """Health of one device or fog node; non-healthy states carry a reason."""

    fog_id: str
    device_id: Optional[str]
    state: HealthState
    reason: str = ""
    last_seen_ms: int = 0

    def __post_init__(self) -> None:
        if self.state is not HealthState.HEALTHY and not self.reason:
            raise ValueError("non-healthy status requires a reason")

    def to_json(self) -> dict[str, Any]:
        return {
            "fog_id": self.fog_id,
            "device_id": self.device_id,
            "state": self.state.value,
            "reason": self.reason,
            "last_seen_ms": self.last_seen_ms,
        }

    @classmethod
    def from_json(cls, d: dict[str, Any]) -> "HealthStatus":
        return cls(
            fog_id=d["fog_id"],
            device_id=d.get("device_id"),
            state=HealthState(d["state"]),
            reason=d.get("reason", ""),
            last_seen_ms=int(d.get("last_seen_ms", 0)),
        )


# --- instruction bodies -------------------------------------------------

@dataclass(frozen=True, slots=True)
class SetEnabled:
    enabled: bool


@dataclass(frozen=True, slots=True)
class SetThreshold:
    threshold: WorkingRange


@dataclass(frozen=True, slots=True)
class SetPushPeriod:
    push_period_s: float


@dataclass(frozen=True, slots=True)
class SetEmailAlerts:
    email_alerts: bool


@dataclass(frozen=True, slots=True)
class ActuatorCommand:
    power_volts: float
    tone_hz: float
    duration_ms: int


InstructionBody = Union[SetEnabled, SetThreshold, SetPushPeriod, SetEmailAlerts, ActuatorCommand]

_BODY_KINDS = {
    SetEnabled: "set_enabled",
    SetThreshold: "set_threshold",
    SetPushPeriod: "set_push_period",
    SetEmailAlerts: "set_email_alerts",
    ActuatorCommand: "actuator_command",
}


def body_to_json(body: InstructionBody) -> dict[str, Any]:
    kind = _BODY_KINDS[type(body)]
    if isinstance(body, SetEnabled):
        return {"kind": kind, "enabled": body.enabled}
    if isinstance(body, SetThreshold):
        return {"kind": kind, "threshold": body.threshold.to_json()}
    if isinstance(body, SetPushPeriod):
        return {"kind": kind, "push_period_s": body.push_period_s}
    if isinstance(body, SetEmailAlerts):
        return {"kind": kind, "email_alerts": body.email_alerts}
    return {
        "kind": kind,
        "power_volts": body.power_volts,
        "tone_hz": body.tone_hz,
        "duration_ms": body.duration_ms,
    }


def body_from_json(d: dict[str, Any]) -> InstructionBody:
    kind = d["kind"]
    if kind == "set_enabled":
        return SetEnabled(enabled=bool(d["enabled"]))
    if kind == "set_threshold":
        return SetThreshold(threshold=WorkingRange.from_json(d["threshold"]))
    if kind == "set_push_period":
        return SetPushPeriod(push_period_s=float(d["push_period_s"]))
    if kind == "set_email_alerts":
        return SetEmailAlerts(email_alerts=bool(d["email_alerts"]))
    if kind == "actuator_command":
        return ActuatorCommand(
            power_volts=float(d["power_volts"]),
            tone_hz=float(d["tone_hz"]),
            duration_ms=int(d["duration_ms"]),
        )
    raise ValueError(f"unknown instruction body kind: {kind!r}")


# A target is either a specific device or a whole fog node (device_id None).
Target = Union[DeviceId, str]


def target_to_json(target: Target) -> dict[str, Any]:
    if isinstance(target, DeviceId):
        return target.to_json()
    return {"fog_id": target, "device_id": None}


def target_from_json(d: dict[str, Any]) -> Target:
    if d.get("device_id") is None:
        return d["fog_id"]
    return DeviceId.from_json(d)


def target_fog_id(target: Target) -> str:
    return target.fog_id if isinstance(target, DeviceId) else target


@dataclass(frozen=True, slots=True)
class Instruction:
    """Durable command addressed to a fog node or edge device."""

    instr_id: int
    target: Target
    body: InstructionBody
    issued_at_ms: int

    def to_json(self) -> dict[str, Any]:
        return {
            "instr_id": self.instr_id,
            "target": target_to_json(self.target),
            "body": body_to_json(self.body),
            "issued_at_ms": self.issued_at_ms,
        }

    @classmethod
    def from_json(cls, d: dict[str, Any]) -> "Instruction":
        return cls(
            instr_id=int(d["instr_id"]),
            target=target_from_json(d["target"]),
            body=body_from_json(d["body"]),
            issued_at_ms=int(d["issued_at_ms"]),
        )


@dataclass(frozen=True, slots=True)
class NetworkMode:
    mode: Mode
    since_ms: int
    cause: str = ""

    def to_json(self) -> dict[str, Any]:
        return {"mode": self.mode.value, "since_ms": self.since_ms, "cause": self.cause}

    @classmethod
    def from_json(cls, d: dict[str, Any]) -> "NetworkMode":
        return cls(mode=Mode(d["mode"]), since_ms=int(d["since_ms"]), cause=d.get("cause", ""))


@dataclass(frozen=True, slots=True)
class SecurityEvent:
    fog_id: str
    kind: SecurityEventKind
    peer: str
    observed_at_ms: int

    def __post_init__(self) -> None:
        if not self.peer:
            raise ValueError("security event requires a peer address")

    def to_json(self) -> dict[str, Any]:
        return {
            "fog_id": self.fog_id,
            "kind": self.kind.value,
            "peer": self.peer,
            "observed_at_ms": self.observed_at_ms,
        }

    @classmethod
    def from_json(cls, d: dict[str, Any]) -> "SecurityEvent":
        return cls(
            fog_id=d["fog_id"],
            kind=SecurityEventKind(d["kind"]),
            peer=d["peer"],
            observed_at_ms=int(d["observed_at_ms"]),
        )


# --- pure evaluation ----------------------------------------------------

def evaluate_threshold(value: float, rng: WorkingRange) -> Evaluation:
    """Classify a value against an inclusive working range.

    Boundary values are Normal; only strictly outside [low, high] counts
    as Abnormal.
    """
    if value < rng.low or value > rng.high:
        return Evaluation.ABNORMAL
    return Evaluation.NORMAL


def indicator_color(latest: Optional[SensorReading], desc: DeviceDescriptor) -> Indicator:
    """Stats-panel dot for one device: Grey / Red / Green."""
    if not desc.enabled or latest is None:
        return Indicator.GREY
    if desc.threshold is not None:
        if evaluate_threshold(latest.value, desc.threshold) is Evaluation.ABNORMAL:
            return Indicator.RED
    return Indicator.GREEN


class Violation(str, Enum):
    EMPTY_ID = "empty_id"
    NON_FINITE_VALUE = "non_finite_value"
    UNIT_KIND_MISMATCH = "unit_kind_mismatch"
    BAD_SEQ = "bad_seq"
    BAD_TIMESTAMP = "bad_timestamp"


def validate_reading(r: SensorReading, kind: Optional[DeviceKind] = None) -> list[Violation]:
    """Return every invariant violation of a reading (empty list = ok).

    `kind` is the registered device kind when known; only sensor kinds
    may produce measurements.
    """
    violations: list[Violation] = []
    if not r.id.is_valid():
        violations.append(Violation.EMPTY_ID)
    if not math.isfinite(r.value):
        violations.append(Violation.NON_FINITE_VALUE)
    if kind is not None and kind not in SENSOR_KINDS:
        violations.append(Violation.UNIT_KIND_MISMATCH)
    if r.seq < 1:
        violations.append(Violation.BAD_SEQ)
    if r.timestamp_ms < 0:
        violations.append(Violation.BAD_TIMESTAMP)
    return violations
