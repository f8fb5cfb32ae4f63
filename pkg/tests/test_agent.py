from __future__ import annotations

import socket

import pytest
import requests

from conftest import wait_until
from fogdeck import agent as agent_mod
from fogdeck import wire
from fogdeck.agent import AgentConfig, CloudMode, FogAgent
from fogdeck.clock import SCENARIO_EPOCH_MS, VirtualClock
from fogdeck.edgesim import Constant, Piecewise
from fogdeck.httpkit import HttpApiError
from fogdeck.model import (
    ActuatorCommand,
    DeviceDescriptor,
    DeviceId,
    DeviceKind,
    Instruction,
    SecurityEventKind,
    SetEnabled,
    SetPushPeriod,
    Unit,
    WorkingRange,
)

KEY = wire.PresharedKey(bytes(range(32)))
DEAD_STORE = "http://127.0.0.1:9"  # discard port, nothing listens


class _StubStore:
    """Stands in for JsonClient; scripted failures, recorded puts."""

    def __init__(self):
        self.fail: Exception | None = None
        self.puts: list[dict] = []

    def put(self, path, body):
        if self.fail is not None:
            raise self.fail
        self.puts.append(body)
        return {"accepted": len(body["readings"])}

    def get(self, path, params=None):
        return {"instructions": []}

    def post(self, path, body):
        return {"ok": True}


def _desc(dev: str, fog: str = "f0", **kw) -> DeviceDescriptor:
    kind = kw.pop("kind", DeviceKind.TEMPERATURE_HUMIDITY_SENSOR)
    return DeviceDescriptor(id=DeviceId(fog_id=fog, device_id=dev), kind=kind, **kw)


@pytest.fixture
def ag(vclock):
    a = FogAgent(AgentConfig(fog_id="f0", store_url=DEAD_STORE, key=KEY), clock=vclock)
    a._store = _StubStore()
    yield a
    a.stop()


def _tick(a: FogAgent, vclock: VirtualClock, advance_ms: int = 0):
    if advance_ms:
        vclock.advance(advance_ms)
    return a.tick(vclock.now_ms())


class TestSampling:
    def test_period_schedule(self, ag, vclock):
        ag.add_sensor(_desc("t0", push_period_s=2.0), Unit.CELSIUS, Constant(25.0))
        ag.start()
        assert len(_tick(ag, vclock)) == 1          # due immediately at start
        assert len(_tick(ag, vclock, 1000)) == 0    # half a period: not due
        assert len(_tick(ag, vclock, 1000)) == 1    # full period elapsed
        assert ag.counters.emitted == 2

    def test_seq_and_timestamp_monotone(self, ag, vclock):
        ag.add_sensor(_desc("t0", push_period_s=1.0), Unit.CELSIUS, Constant(25.0))
        ag.start()
        rows = []
        for _ in range(4):
            rows += _tick(ag, vclock)
            vclock.advance(1000)
        assert [r.seq for r in rows] == [1, 2, 3, 4]
        assert all(b.timestamp_ms > a.timestamp_ms for a, b in zip(rows, rows[1:]))

    def test_missed_intervals_collapse(self, ag, vclock):
        ag.add_sensor(_desc("t0", push_period_s=1.0), Unit.CELSIUS, Constant(25.0))
        ag.start()
        _tick(ag, vclock)
        # a long stall must not burst out five catch-up samples
        assert len(_tick(ag, vclock, 5000)) == 1
        assert len(_tick(ag, vclock, 500)) == 0     # rescheduled from now, not from due
        assert len(_tick(ag, vclock, 500)) == 1

    def test_disabled_device_never_samples(self, ag, vclock):
        ag.add_sensor(_desc("t0", enabled=False), Unit.CELSIUS, Constant(25.0))
        ag.start()
        assert _tick(ag, vclock) == []
        assert _tick(ag, vclock, 5000) == []
        assert ag.counters.emitted == 0


class TestWindow:
    def test_sliding_mean(self, vclock):
        cfg = AgentConfig(fog_id="f0", store_url=DEAD_STORE, key=KEY, window=3)
        a = FogAgent(cfg, clock=vclock)
        a._store = _StubStore()
        ramp = Piecewise(points=tuple((float(i), float(i)) for i in range(5)))
        a.add_sensor(_desc("t0", push_period_s=1.0), Unit.CELSIUS, ramp)
        a.start()
        try:
            values = []
            for _ in range(5):
                values += [r.value for r in a.tick(vclock.now_ms())]
                vclock.advance(1000)
            # raw stream is 0,1,2,3,4; window of 3 smooths it
            assert values == [0.0, 0.5, 1.0, 2.0, 3.0]
        finally:
            a.stop()


class TestPushing:
    def test_buffer_cap_drops_oldest(self, ag, vclock, monkeypatch):
        monkeypatch.setattr(agent_mod, "MAX_PENDING", 5)
        ag._store.fail = requests.ConnectionError("down")
        ag.add_sensor(_desc("t0", push_period_s=1.0), Unit.CELSIUS, Constant(25.0))
        ag.start()
        for _ in range(8):
            _tick(ag, vclock)
            vclock.advance(1000)
        c = ag.counters_snapshot()
        assert c == {"emitted": 8, "pushed": 0, "buffered": 5, "dropped": 3}
        assert min(r.seq for r in ag._pending) == 4  # oldest went first

    def test_conservation_through_recovery(self, ag, vclock):
        ag.add_sensor(_desc("t0", push_period_s=1.0), Unit.CELSIUS, Constant(25.0))
        ag.start()
        ag._store.fail = requests.ConnectionError("down")
        for _ in range(4):
            _tick(ag, vclock)
            vclock.advance(1000)
        assert ag.counters_snapshot()["buffered"] == 4
        ag._store.fail = None
        _tick(ag, vclock)
        c = ag.counters_snapshot()
        assert c["pushed"] == c["emitted"] == 5 and c["buffered"] == 0
        # the whole backlog went up in one batch, in order
        batch = ag._store.puts[-1]["readings"]
        assert [r["seq"] for r in batch] == [1, 2, 3, 4, 5]

    def test_rejected_batch_dropped_but_reachable(self, ag, vclock):
        ag.add_sensor(_desc("t0", push_period_s=1.0), Unit.CELSIUS, Constant(25.0))
        ag.start()
        ag._store.fail = HttpApiError(400, "invalid reading")
        for _ in range(4):
            _tick(ag, vclock)
            vclock.advance(1000)
        c = ag.counters_snapshot()
        # a 4xx means the store will never take these rows: drop, don't loop
        assert c["dropped"] == c["emitted"] and c["buffered"] == 0
        assert ag.cloud_mode is CloudMode.REACHABLE

    def test_three_failures_flip_unreachable(self, ag, vclock):
        ag.add_sensor(_desc("t0", push_period_s=1.0), Unit.CELSIUS, Constant(25.0))
        ag.start()
        ag._store.fail = HttpApiError(503, "try later")
        _tick(ag, vclock)
        assert ag.cloud_mode is CloudMode.REACHABLE
        _tick(ag, vclock, 1000)
        assert ag.cloud_mode is CloudMode.REACHABLE
        _tick(ag, vclock, 1000)
        assert ag.cloud_mode is CloudMode.UNREACHABLE
        assert ag.counters_snapshot()["buffered"] == 3  # nothing lost meanwhile
        ag._store.fail = None
        _tick(ag, vclock, 1000)
        assert ag.cloud_mode is CloudMode.REACHABLE
        assert [e["mode"] for e in ag.cloud_log] == [
            "cloud_unreachable", "cloud_reachable",
        ]

    def test_timeout_counts_as_failure(self, ag, vclock):
        ag.add_sensor(_desc("t0", push_period_s=1.0), Unit.CELSIUS, Constant(25.0))
        ag.start()
        ag._store.fail = requests.Timeout("slow")
        for _ in range(3):
            _tick(ag, vclock, 1000)
        assert ag.cloud_mode is CloudMode.UNREACHABLE


class TestAutoActuation:
    def _rig(self, ag):
        ag.add_sensor(
            _desc("t0", push_period_s=2.0, threshold=WorkingRange(low=20.0, high=30.0)),
            Unit.CELSIUS,
            Constant(35.0),
        )
        ag.add_buzzer(_desc("buzz", kind=DeviceKind.BUZZER_ACTUATOR))
        ag.start()

    def test_breach_drives_buzzer(self, ag, vclock):
        self._rig(ag)
        _tick(ag, vclock)
        buzz = ag.bank.buzzers["buzz"]
        assert buzz.powered
        assert buzz.power_volts == agent_mod.AUTO_BUZZ_VOLTS == 5.0
        assert buzz.tone_hz == agent_mod.AUTO_BUZZ_TONE_HZ == 880.0
        # runs long enough to bridge to the next sample: two push periods
        assert buzz.remaining_ms == 4000

    def test_breach_log_is_edge_triggered(self, ag, vclock):
        self._rig(ag)
        for _ in range(3):
            _tick(ag, vclock)
            vclock.advance(2000)
        assert len(ag.breach_log) == 1  # still the same episode
        sim = ag.bank.sensors["t0"]
        sim.waveform = Constant(25.0)
        _tick(ag, vclock)               # back in range
        vclock.advance(2000)
        sim.waveform = Constant(40.0)
        _tick(ag, vclock)               # new excursion
        assert len(ag.breach_log) == 2
        assert ag.breach_log[1]["value"] == 40.0

    def test_minimum_buzz_duration(self, vclock):
        a = FogAgent(AgentConfig(fog_id="f0", store_url=DEAD_STORE, key=KEY), clock=vclock)
        a._store = _StubStore()
        a.add_sensor(
            _desc("t0", push_period_s=1.0, threshold=WorkingRange(low=0.0, high=1.0)),
            Unit.CELSIUS,
            Constant(50.0),
        )
        a.add_buzzer(_desc("buzz", kind=DeviceKind.BUZZER_ACTUATOR))
        a.start()
        try:
            a.tick(vclock.now_ms())
            # 2 periods would be 2000ms here; floor only binds below 1000
            assert a.bank.buzzers["buzz"].remaining_ms == 2000
        finally:
            a.stop()


class TestInstructions:
    def test_watermark_skips_redelivery(self, ag, vclock):
        ag.add_sensor(_desc("t0"), Unit.CELSIUS, Constant(25.0))
        ag.start()
        off = Instruction(
            instr_id=5, target=DeviceId(fog_id="f0", device_id="t0"),
            body=SetEnabled(enabled=False), issued_at_ms=0,
        )
        assert ag.apply_instructions([off]) == 1
        assert ag.last_applied_instr == 5
        replayed_on = Instruction(
            instr_id=5, target=off.target, body=SetEnabled(enabled=True), issued_at_ms=0
        )
        assert ag.apply_instructions([replayed_on]) == 0
        assert not ag.descriptors["t0"].enabled

    def test_direct_ids_never_advance_watermark(self, ag, vclock):
        ag.add_sensor(_desc("t0"), Unit.CELSIUS, Constant(25.0))
        ag.start()
        direct = Instruction(
            instr_id=-1, target=DeviceId(fog_id="f0", device_id="t0"),
            body=SetEnabled(enabled=False), issued_at_ms=0,
        )
        assert ag.apply_instructions([direct]) == 1
        assert ag.last_applied_instr == 0
        assert ag.apply_instructions([direct]) == 1  # direct path is at-most-once per send

    def test_node_wide_command_fans_out(self, ag, vclock):
        ag.add_buzzer(_desc("b0", kind=DeviceKind.BUZZER_ACTUATOR))
        ag.add_buzzer(_desc("b1", kind=DeviceKind.BUZZER_ACTUATOR))
        ag.start()
        cmd = Instruction(
            instr_id=1, target="f0",
            body=ActuatorCommand(power_volts=3.3, tone_hz=1000.0, duration_ms=500),
            issued_at_ms=0,
        )
        assert ag.apply_instructions([cmd]) == 1
        assert ag.bank.buzzers["b0"].powered and ag.bank.buzzers["b1"].powered

    def test_foreign_instruction_ignored(self, ag, vclock):
        ag.add_sensor(_desc("t0"), Unit.CELSIUS, Constant(25.0))
        ag.start()
        alien = Instruction(
            instr_id=9, target=DeviceId(fog_id="other", device_id="t0"),
            body=SetEnabled(enabled=False), issued_at_ms=0,
        )
        assert ag.apply_instructions([alien]) == 0
        assert ag.descriptors["t0"].enabled

    def test_set_push_period_reschedules(self, ag, vclock):
        ag.add_sensor(_desc("t0", push_period_s=1.0), Unit.CELSIUS, Constant(25.0))
        ag.start()
        _tick(ag, vclock)
        upd = Instruction(
            instr_id=1, target=DeviceId(fog_id="f0", device_id="t0"),
            body=SetPushPeriod(push_period_s=5.0), issued_at_ms=0,
        )
        ag.apply_instructions([upd])
        assert ag.descriptors["t0"].push_period_s == 5.0
        assert len(_tick(ag, vclock, 1000)) == 0    # old 1s cadence is gone
        assert len(_tick(ag, vclock, 4000)) == 1    # 5s after the last sample

    def test_invalid_period_rejected_but_acked_past(self, ag, vclock):
        ag.add_sensor(_desc("t0"), Unit.CELSIUS, Constant(25.0))
        ag.start()
        bad = Instruction(
            instr_id=3, target=DeviceId(fog_id="f0", device_id="t0"),
            body=SetPushPeriod(push_period_s=0.25), issued_at_ms=0,
        )
        assert ag.apply_instructions([bad]) == 0
        # a permanently invalid instruction must not wedge the queue
        assert ag.last_applied_instr == 3
        assert ag.descriptors["t0"].push_period_s == 5.0  # default untouched


class TestHealth:
    def test_failed_sensor_reports_faulty(self, ag, vclock):
        ag.add_sensor(_desc("t0", push_period_s=1.0), Unit.CELSIUS, Constant(25.0))
        ag.start()
        _tick(ag, vclock)
        ag.inject_failure("t0", True)
        _tick(ag, vclock, 1000)
        row = [h for h in ag.health_snapshot(vclock.now_ms()) if h.device_id == "t0"][0]
        assert row.state.value == "faulty" and row.reason == "sensor failed"
        ag.inject_failure("t0", False)
        _tick(ag, vclock, 1000)
        row = [h for h in ag.health_snapshot(vclock.now_ms()) if h.device_id == "t0"][0]
        assert row.state.value == "healthy"

    def test_silence_backstop(self, ag, vclock):
        ag.add_sensor(_desc("t0", push_period_s=1.0), Unit.CELSIUS, Constant(25.0))
        ag.start()
        # never ticked: after 2 push periods of silence the device is suspect
        now = vclock.now_ms()
        healthy = [h for h in ag.health_snapshot(now + 1500) if h.device_id == "t0"][0]
        assert healthy.state.value == "healthy"
        silent = [h for h in ag.health_snapshot(now + 2500) if h.device_id == "t0"][0]
        assert silent.state.value == "faulty" and silent.reason == "no sample"

    def test_node_row_present(self, ag, vclock):
        ag.start()
        rows = ag.health_snapshot(vclock.now_ms())
        assert rows[0].device_id is None and rows[0].fog_id == "f0"


class TestDirectServing:
    def _connect(self, ag, client_id: str, key=KEY) -> wire.Session:
        sock = socket.create_connection(("127.0.0.1", ag.port), timeout=2)
        return wire.client_handshake(sock, key, client_id)

    def test_known_client_no_event(self, ag, vclock):
        ag.start()
        session = self._connect(ag, "control-plane")
        try:
            assert wait_until(lambda: len(ag.active_clients()) == 1)
            assert ag.active_clients()[0][0] == "control-plane"
            assert len(ag.security_events) == 0
        finally:
            session.channel.close()
        assert wait_until(lambda: len(ag.active_clients()) == 0)

    def test_unknown_client_flagged_but_served(self, ag, vclock):
        ag.start()
        session = self._connect(ag, "mystery")
        try:
            assert wait_until(lambda: len(ag.security_events) == 1)
            _, ev = ag.security_events[0]
            assert ev.kind is SecurityEventKind.UNKNOWN_CLIENT_CONNECTED
            assert ev.peer.startswith("mystery@")
            assert wait_until(lambda: len(ag.active_clients()) == 1)
        finally:
            session.channel.close()

    def test_wrong_key_records_auth_failure(self, ag, vclock):
        ag.start()
        bad = wire.PresharedKey(bytes(32))
        sock = socket.create_connection(("127.0.0.1", ag.port), timeout=2)
        with pytest.raises(wire.WireError):
            wire.client_handshake(sock, bad, "control-plane")
        sock.close()
        assert wait_until(lambda: len(ag.security_events) == 1)
        assert ag.security_events[0][1].kind is SecurityEventKind.AUTH_FAILURE

    def test_instruction_over_wire(self, ag, vclock):
        ag.add_sensor(_desc("t0"), Unit.CELSIUS, Constant(25.0))
        ag.start()
        session = self._connect(ag, "control-plane")
        try:
            instr = Instruction(
                instr_id=-7, target=DeviceId(fog_id="f0", device_id="t0"),
                body=SetEnabled(enabled=False), issued_at_ms=0,
            )
            session.channel.send_json(wire.MsgType.INSTRUCTION, instr.to_json())
            while True:
                msg_type, payload = session.channel.recv()
                if msg_type == wire.MsgType.ACK:
                    break
            import json

            ack = json.loads(payload.decode())
            assert ack == {"instr_id": -7, "ok": True}
            assert not ag.descriptors["t0"].enabled
            assert ag.last_applied_instr == 0
        finally:
            session.channel.close()
