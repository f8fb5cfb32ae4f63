"""Deterministic simulators standing in for the physical edge devices.

A DHT-11-style sensor becomes a seeded waveform plus Gaussian noise, the
battery-backed RTC becomes a drift formula, and the piezo buzzer becomes
a small state machine with a countdown. Two runs with the same seeds and
the same schedule produce bit-identical streams.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Union

from .model import ActuatorCommand, DeviceId, SensorReading, Unit

# Physical ranges of the simulated sensor family.
CELSIUS_RANGE = (0.0, 50.0)
PERCENT_RH_RANGE = (20.0, 90.0)

BUZZER_MIN_VOLTS = 3.3
BUZZER_MAX_VOLTS = 9.0


class SensorFailed(Exception):
    """Raised by sample() while failure injection is active."""


class RejectedCommand(Exception):
    """Actuator command with a degenerate tone or duration."""


class UnknownDevice(KeyError):
    """Failure injection or actuation aimed at an id nobody owns."""


# --- waveforms ------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class Constant:
    base: float


@dataclass(frozen=True, slots=True)
class Sine:
    base: float
    amplitude: float
    period_s: float


@dataclass(frozen=True, slots=True)
class RandomWalk:
    base: float
    step: float


@dataclass(frozen=True, slots=True)
class Piecewise:
    """Step function of scenario time: ((t_s, value), ...) sorted by t_s.

    Holds the last value at or before t; before the first point it holds
    the first value. Scripted threshold crossings use this.
    """

    points: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        if not self.points:
            raise ValueError("piecewise waveform needs at least one point")
        if list(self.points) != sorted(self.points, key=lambda p: p[0]):
            raise ValueError("piecewise points must be sorted by time")

    def value_at(self, sim_time_s: float) -> float:
        value = self.points[0][1]
        for t, v in self.points:
            if sim_time_s >= t:
                value = v
            else:
                break
        return value


Waveform = Union[Constant, Sine, RandomWalk, Piecewise]


def clamp(value: float, low: float, high: float) -> float:
    return min(max(value, low), high)


def unit_range(unit: Unit) -> tuple[float, float]:
    return CELSIUS_RANGE if unit is Unit.CELSIUS else PERCENT_RH_RANGE


@dataclass
class SensorSim:
    """One measured quantity: waveform + seeded noise, clamped to range.

    The noise and walk generators are private to the sensor, so failing
    or reconfiguring one device never perturbs another's stream.
    """

    id: DeviceId
    unit: Unit
    waveform: Waveform = Constant(25.0)
    noise_stddev: float = 0.0
    seed: int = 0
    failed: bool = False

    _seq: int = field(default=0, init=False, repr=False)
    _noise_rng: random.Random = field(init=False, repr=False)
    _walk_rng: random.Random = field(init=False, repr=False)
    _walk_pos: float = field(default=0.0, init=False, repr=False)

    def __post_init__(self) -> None:
        self._noise_rng = random.Random(self.seed ^ 0x5EED0001)
        self._walk_rng = random.Random(self.seed ^ 0x5EED0002)

    @property
    def seq(self) -> int:
        return self._seq

    def raw_value(self, sim_time_s: float) -> float:
        wf = self.waveform
        if isinstance(wf, Constant):
            return wf.base
        if isinstance(wf, Sine):
            return wf.base + wf.amplitude * math.sin(2.0 * math.pi * sim_time_s / wf.period_s)
        if isinstance(wf, Piecewise):
            return wf.value_at(sim_time_s)
        self._walk_pos += self._walk_rng.gauss(0.0, wf.step)
        return wf.base + self._walk_pos

    def sample(self, sim_time_s: float, timestamp_ms: int) -> SensorReading:
        """Produce the next reading, or raise SensorFailed.

        seq increments by exactly one per successful sample; a failed
        sample consumes nothing, so recovery resumes the same stream.
        """
        if self.failed:
            raise SensorFailed(str(self.id))
        value = self.raw_value(sim_time_s)
        if self.noise_stddev > 0.0:
            value += self._noise_rng.gauss(0.0, self.noise_stddev)
        low, high = unit_range(self.unit)
        value = clamp(value, low, high)
        self._seq += 1
        return SensorReading(
            id=self.id, value=value, unit=self.unit, timestamp_ms=timestamp_ms, seq=self._seq
        )


@dataclass(frozen=True, slots=True)
class RtcSim:
    """Battery-backed clock with a fixed ppm drift and epoch offset."""

    drift_ppm: float = 0.0
    epoch_offset_ms: int = 0

    def now(self, true_time_ms: int) -> int:
        drift = round(true_time_ms * self.drift_ppm * 1e-6)
        return true_time_ms + self.epoch_offset_ms + int(drift)


def rtc_now(rtc: RtcSim, true_time_ms: int) -> int:
    return rtc.now(true_time_ms)


@dataclass
class BuzzerSim:
    """Piezo buzzer: powered state, clamped drive voltage, tone, countdown."""

    id: DeviceId
    powered: bool = False
    power_volts: float = 0.0
    tone_hz: float = 0.0
    remaining_ms: int = 0

    def actuate(self, cmd: ActuatorCommand) -> None:
        if cmd.duration_ms <= 0 or cmd.tone_hz <= 0:
            raise RejectedCommand(f"duration_ms={cmd.duration_ms} tone_hz={cmd.tone_hz}")
        self.powered = True
        self.power_volts = clamp(cmd.power_volts, BUZZER_MIN_VOLTS, BUZZER_MAX_VOLTS)
        self.tone_hz = cmd.tone_hz
        self.remaining_ms = cmd.duration_ms

    def advance(self, elapsed_ms: int) -> None:
        """Run the countdown; at zero the buzzer powers off."""
        if not self.powered:
            return
        self.remaining_ms -= elapsed_ms
        if self.remaining_ms <= 0:
            self.powered = False
            self.power_volts = 0.0
            self.tone_hz = 0.0
            self.remaining_ms = 0

    def loudness(self) -> float:
        """Relative loudness, monotone in drive voltage."""
        if not self.powered:
            return 0.0
        return (self.power_volts - BUZZER_MIN_VOLTS) / (BUZZER_MAX_VOLTS - BUZZER_MIN_VOLTS)

    def state_json(self) -> dict:
        return {
            "device_id": self.id.device_id,
            "powered": self.powered,
            "power_volts": self.power_volts,
            "tone_hz": self.tone_hz,
            "remaining_ms": self.remaining_ms,
        }


def actuate(buzzer: BuzzerSim, cmd: ActuatorCommand) -> BuzzerSim:
    buzzer.actuate(cmd)
    return buzzer


@dataclass
class SimBank:
    """The simulators owned by one fog node, addressable for failure injection."""

    sensors: dict[str, SensorSim] = field(default_factory=dict)
    buzzers: dict[str, BuzzerSim] = field(default_factory=dict)

    def add_sensor(self, sim: SensorSim) -> None:
        self.sensors[sim.id.device_id] = sim

    def add_buzzer(self, sim: BuzzerSim) -> None:
        self.buzzers[sim.id.device_id] = sim

    def inject_failure(self, device_id: str, fail: bool) -> None:
        """Flip failure state; takes effect from the very next sample."""
        sim = self.sensors.get(device_id)
        if sim is None:
            raise UnknownDevice(device_id)
        sim.failed = fail
