from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fogdeck import model
from fogdeck.model import (
    ActuatorCommand,
    DeviceDescriptor,
    DeviceId,
    DeviceKind,
    Evaluation,
    HealthState,
    HealthStatus,
    Indicator,
    Instruction,
    SecurityEvent,
    SecurityEventKind,
    SensorReading,
    SetEmailAlerts,
    SetEnabled,
    SetPushPeriod,
    SetThreshold,
    Unit,
    Violation,
    WorkingRange,
    body_from_json,
    body_to_json,
    evaluate_threshold,
    indicator_color,
    validate_reading,
)

DID = DeviceId(fog_id="fog-0", device_id="temp-0")


def _reading(value: float = 25.0, seq: int = 1, ts: int = 0) -> SensorReading:
    return SensorReading(id=DID, value=value, unit=Unit.CELSIUS, timestamp_ms=ts, seq=seq)


class TestThreshold:
    def test_inside_is_normal(self):
        rng = WorkingRange(low=20.0, high=30.0)
        assert evaluate_threshold(25.0, rng) is Evaluation.NORMAL

    def test_bounds_inclusive(self):
        rng = WorkingRange(low=20.0, high=30.0)
        assert evaluate_threshold(20.0, rng) is Evaluation.NORMAL
        assert evaluate_threshold(30.0, rng) is Evaluation.NORMAL

    def test_strictly_outside_is_abnormal(self):
        rng = WorkingRange(low=20.0, high=30.0)
        assert evaluate_threshold(19.999, rng) is Evaluation.ABNORMAL
        assert evaluate_threshold(30.001, rng) is Evaluation.ABNORMAL

    def test_degenerate_range(self):
        rng = WorkingRange(low=22.0, high=22.0)
        assert evaluate_threshold(22.0, rng) is Evaluation.NORMAL
        assert evaluate_threshold(22.1, rng) is Evaluation.ABNORMAL

    def test_inverted_range_rejected(self):
        with pytest.raises(ValueError):
            WorkingRange(low=30.0, high=20.0)

    @settings(max_examples=60, deadline=None)
    @given(
        low=st.floats(min_value=-100, max_value=100, allow_nan=False),
        span=st.floats(min_value=0, max_value=100, allow_nan=False),
        value=st.floats(min_value=-300, max_value=300, allow_nan=False),
    )
    def test_classification_matches_interval_test(self, low, span, value):
        rng = WorkingRange(low=low, high=low + span)
        expected = Evaluation.NORMAL if low <= value <= low + span else Evaluation.ABNORMAL
        assert evaluate_threshold(value, rng) is expected


class TestIndicator:
    DESC = DeviceDescriptor(
        id=DID,
        kind=DeviceKind.TEMPERATURE_HUMIDITY_SENSOR,
        threshold=WorkingRange(low=20.0, high=30.0),
    )

    def test_green_when_normal(self):
        assert indicator_color(_reading(25.0), self.DESC) is Indicator.GREEN

    def test_red_when_abnormal(self):
        assert indicator_color(_reading(35.0), self.DESC) is Indicator.RED

    def test_grey_without_reading(self):
        assert indicator_color(None, self.DESC) is Indicator.GREY

    def test_grey_when_disabled(self):
        import dataclasses

        off = dataclasses.replace(self.DESC, enabled=False)
        assert indicator_color(_reading(25.0), off) is Indicator.GREY

    def test_green_without_threshold(self):
        bare = DeviceDescriptor(id=DID, kind=DeviceKind.TEMPERATURE_HUMIDITY_SENSOR)
        assert indicator_color(_reading(999.0), bare) is Indicator.GREEN


class TestValidateReading:
    def test_clean_reading(self):
        assert validate_reading(_reading(), DeviceKind.TEMPERATURE_HUMIDITY_SENSOR) == []

    def test_empty_id(self):
        bad = SensorReading(
            id=DeviceId(fog_id="", device_id="x"), value=1.0, unit=Unit.CELSIUS,
            timestamp_ms=0, seq=1,
        )
        assert Violation.EMPTY_ID in validate_reading(bad)

    def test_non_finite_value(self):
        assert Violation.NON_FINITE_VALUE in validate_reading(_reading(math.nan))
        assert Violation.NON_FINITE_VALUE in validate_reading(_reading(math.inf))

    def test_reading_from_actuator_kind(self):
        assert Violation.UNIT_KIND_MISMATCH in validate_reading(
            _reading(), DeviceKind.BUZZER_ACTUATOR
        )

    def test_bad_seq_and_timestamp(self):
        assert Violation.BAD_SEQ in validate_reading(_reading(seq=0))
        assert Violation.BAD_TIMESTAMP in validate_reading(_reading(ts=-5))

    def test_violations_accumulate(self):
        bad = SensorReading(
            id=DeviceId(fog_id="", device_id=""), value=math.nan, unit=Unit.CELSIUS,
            timestamp_ms=-1, seq=0,
        )
        found = set(validate_reading(bad, DeviceKind.BUZZER_ACTUATOR))
        assert found == {
            Violation.EMPTY_ID,
            Violation.NON_FINITE_VALUE,
            Violation.UNIT_KIND_MISMATCH,
            Violation.BAD_SEQ,
            Violation.BAD_TIMESTAMP,
        }


class TestDescriptor:
    def test_push_period_bounds(self):
        for bad in (0.5, 0.0, 3601.0, -2.0):
            with pytest.raises(ValueError):
                DeviceDescriptor(
                    id=DID, kind=DeviceKind.TEMPERATURE_HUMIDITY_SENSOR, push_period_s=bad
                )
        # bounds themselves are legal
        DeviceDescriptor(id=DID, kind=DeviceKind.TEMPERATURE_HUMIDITY_SENSOR, push_period_s=1.0)
        DeviceDescriptor(id=DID, kind=DeviceKind.TEMPERATURE_HUMIDITY_SENSOR, push_period_s=3600.0)

    def test_threshold_only_on_sensors(self):
        with pytest.raises(ValueError):
            DeviceDescriptor(
                id=DID, kind=DeviceKind.BUZZER_ACTUATOR,
                threshold=WorkingRange(low=0.0, high=1.0),
            )

    def test_bad_id_rejected(self):
        with pytest.raises(ValueError):
            DeviceDescriptor(
                id=DeviceId(fog_id="", device_id="x"),
                kind=DeviceKind.TEMPERATURE_HUMIDITY_SENSOR,
            )

    def test_json_roundtrip(self):
        desc = DeviceDescriptor(
            id=DID,
            kind=DeviceKind.TEMPERATURE_HUMIDITY_SENSOR,
            location=model.Location(label="bench", lat=1.5, lon=-2.5),
            enabled=False,
            threshold=WorkingRange(low=18.0, high=29.0),
            push_period_s=7.5,
            email_alerts=True,
        )
        assert DeviceDescriptor.from_json(desc.to_json()) == desc


class TestHealthStatus:
    def test_non_healthy_requires_reason(self):
        with pytest.raises(ValueError):
            HealthStatus(fog_id="fog-0", device_id=None, state=HealthState.FAULTY)
        ok = HealthStatus(
            fog_id="fog-0", device_id="d", state=HealthState.FAULTY, reason="sensor failed"
        )
        assert HealthStatus.from_json(ok.to_json()) == ok


BODIES = st.one_of(
    st.builds(SetEnabled, enabled=st.booleans()),
    st.builds(
        SetThreshold,
        threshold=st.builds(
            lambda lo, span: WorkingRange(low=lo, high=lo + span),
            st.floats(min_value=-50, max_value=50, allow_nan=False),
            st.floats(min_value=0, max_value=80, allow_nan=False),
        ),
    ),
    st.builds(
        SetPushPeriod,
        push_period_s=st.floats(min_value=1.0, max_value=3600.0, allow_nan=False),
    ),
    st.builds(SetEmailAlerts, email_alerts=st.booleans()),
    st.builds(
        ActuatorCommand,
        power_volts=st.floats(min_value=0, max_value=20, allow_nan=False),
        tone_hz=st.floats(min_value=1, max_value=20000, allow_nan=False),
        duration_ms=st.integers(min_value=1, max_value=60_000),
    ),
)


class TestInstructionEncoding:
    @settings(max_examples=80, deadline=None)
    @given(body=BODIES)
    def test_body_roundtrip(self, body):
        assert body_from_json(body_to_json(body)) == body

    def test_unknown_body_kind(self):
        with pytest.raises(ValueError):
            body_from_json({"kind": "self_destruct"})

    def test_device_target_roundtrip(self):
        instr = Instruction(
            instr_id=4, target=DID, body=SetEnabled(enabled=False), issued_at_ms=100
        )
        assert Instruction.from_json(instr.to_json()) == instr

    def test_node_target_roundtrip(self):
        instr = Instruction(
            instr_id=-2,
            target="fog-0",
            body=ActuatorCommand(power_volts=3.3, tone_hz=1000.0, duration_ms=500),
            issued_at_ms=100,
        )
        doc = instr.to_json()
        assert doc["target"] == {"fog_id": "fog-0", "device_id": None}
        assert Instruction.from_json(doc) == instr

    def test_target_fog_id(self):
        assert model.target_fog_id(DID) == "fog-0"
        assert model.target_fog_id("fog-9") == "fog-9"


class TestSecurityEvent:
    def test_requires_peer(self):
        with pytest.raises(ValueError):
            SecurityEvent(
                fog_id="fog-0", kind=SecurityEventKind.AUTH_FAILURE, peer="", observed_at_ms=0
            )

    def test_json_roundtrip(self):
        ev = SecurityEvent(
            fog_id="fog-0",
            kind=SecurityEventKind.REPLAY_DETECTED,
            peer="10.0.0.9:1234",
            observed_at_ms=17,
        )
        assert SecurityEvent.from_json(ev.to_json()) == ev


class TestReading:
    def test_idempotency_key(self):
        assert _reading(seq=9).key() == ("fog-0", "temp-0", 9)

    def test_json_roundtrip(self):
        r = _reading(value=24.25, seq=3, ts=1234)
        assert SensorReading.from_json(r.to_json()) == r
