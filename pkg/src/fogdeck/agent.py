"""Fog node daemon: samples edge devices, pushes to the cloud, applies
instructions, auto-drives actuators, and serves authenticated clients
directly over the wire protocol when (or before) the cloud path fails.

One FogAgent owns all state for one node. The tick loop is the only
writer of device state; connection handler threads route instructions
through the same lock and never touch simulators directly.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import queue
import socket
import threading
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Any, Optional

import requests

from . import edgesim, wire
from .clock import Clock, RealClock
from .httpkit import HttpApiError, JsonClient
from .model import (
    ActuatorCommand,
    DeviceDescriptor,
    Evaluation,
    HealthState,
    HealthStatus,
    Instruction,
    InstructionBody,
    SecurityEvent,
    SecurityEventKind,
    SensorReading,
    SetEmailAlerts,
    SetEnabled,
    SetPushPeriod,
    SetThreshold,
    Target,
    Unit,
    evaluate_threshold,
)

log = logging.getLogger(__name__)

MAX_PENDING = 10_000
CLOUD_FAILURE_THRESHOLD = 3
SILENCE_PERIODS = 2.0  # faulty after this many push periods without a sample
AUTO_BUZZ_VOLTS = 5.0
AUTO_BUZZ_TONE_HZ = 880.0
EVENT_LOG_LIMIT = 256
OUTBOX_LIMIT = 64


class CloudMode(str, Enum):
    REACHABLE = "cloud_reachable"
    UNREACHABLE = "cloud_unreachable"


@dataclass
class Counters:
    """Reading accounting; pushed + buffered + dropped = emitted, always."""

    emitted: int = 0
    pushed: int = 0
    dropped: int = 0


@dataclass(frozen=True, slots=True)
class PushReport:
    attempted: int
    pushed: int
    error: Optional[str] = None


@dataclass(frozen=True)
class AgentConfig:
    fog_id: str
    store_url: str
    key: wire.PresharedKey
    listen_host: str = "127.0.0.1"
    listen_port: int = 0  # 0 = ephemeral; fleets assign 7707 + index
    known_clients: frozenset = frozenset({"control-plane"})
    heartbeat_s: float = 2.0
    instr_poll_s: float = 1.0
    window: int = 1  # sliding-window mean width; 1 = pass-through
    rtc_drift_ppm: float = 0.0
    store_token: Optional[str] = None


class _ClientConn:
    """One authenticated inbound connection with its own writer thread.

    Outbound frames go through a bounded queue so a slow or stalled
    client can never block the agent loop; overflow drops frames for
    that client only.
    """

    def __init__(self, session: wire.Session):
        self.session = session
        self.outbox: queue.Queue = queue.Queue(maxsize=OUTBOX_LIMIT)
        self.alive = True
        self.writer = threading.Thread(target=self._drain, daemon=True)
        self.writer.start()

    def _drain(self) -> None:
        while True:
            item = self.outbox.get()
            if item is None:
                return
            msg_type, obj = item
            try:
                self.session.channel.send_json(msg_type, obj)
            except (OSError, wire.WireError):
                self.alive = False
                return

    def offer(self, msg_type: int, obj: Any) -> None:
        if not self.alive:
            return
        try:
            self.outbox.put_nowait((msg_type, obj))
        except queue.Full:
            pass

    def close(self) -> None:
        self.alive = False
        try:
            self.outbox.put_nowait(None)
        except queue.Full:
            pass
        self.session.channel.close()


class FogAgent:
    def __init__(self, config: AgentConfig, clock: Optional[Clock] = None):
        self.config = config
        self.fog_id = config.fog_id
        self.clock: Clock = clock or RealClock()
        self.bank = edgesim.SimBank()
        self.rtc = edgesim.RtcSim(drift_ppm=config.rtc_drift_ppm, epoch_offset_ms=0)
        self.descriptors: dict[str, DeviceDescriptor] = {}
        self.units: dict[str, Unit] = {}
        self.counters = Counters()
        self.cloud_mode = CloudMode.REACHABLE
        self.cloud_log: list[dict[str, Any]] = []
        self.last_applied_instr = 0
        self.breach_log: list[dict[str, Any]] = []
        self.security_events: deque = deque(maxlen=EVENT_LOG_LIMIT)
        self._event_seq = 0
        self._store = JsonClient(config.store_url, token=config.store_token)
        self._lock = threading.RLock()
        self._pending: deque[SensorReading] = deque()
        self._consecutive_failures = 0
        self._next_due: dict[str, int] = {}
        self._last_sample_ms: dict[str, int] = {}
        self._silence_base: dict[str, int] = {}
        self._fail_reason: dict[str, str] = {}
        self._windows: dict[str, deque] = {}
        self._last_eval: dict[str, Evaluation] = {}
        self._conns: dict[str, _ClientConn] = {}
        self._listener: Optional[socket.socket] = None
        self._accept_thread: Optional[threading.Thread] = None
        self._started = False
        self._start_ms = 0
        self._last_tick_ms = 0
        self._last_heartbeat_ms: Optional[int] = None
        self._last_poll_ms: Optional[int] = None

    # --- fleet composition -------------------------------------------------

    def add_sensor(
        self,
        desc: DeviceDescriptor,
        unit: Unit,
        waveform,
        noise_stddev: float = 0.0,
        seed: int = 0,
    ) -> None:
        with self._lock:
            self.descriptors[desc.id.device_id] = desc
            self.units[desc.id.device_id] = unit
            self.bank.add_sensor(
                edgesim.SensorSim(
                    id=desc.id,
                    unit=unit,
                    waveform=waveform,
                    noise_stddev=noise_stddev,
                    seed=seed,
                )
            )

    def add_buzzer(self, desc: DeviceDescriptor) -> None:
        with self._lock:
            self.descriptors[desc.id.device_id] = desc
            self.bank.add_buzzer(edgesim.BuzzerSim(id=desc.id))

    def inject_failure(self, device_id: str, fail: bool) -> None:
        with self._lock:
            self.bank.inject_failure(device_id, fail)
            if not fail:
                # resample on the next tick so recovery is visible within one
                self._next_due[device_id] = self.clock.now_ms()

    def counters_snapshot(self) -> dict[str, int]:
        with self._lock:
            return {
                "emitted": self.counters.emitted,
                "pushed": self.counters.pushed,
                "buffered": len(self._pending),
                "dropped": self.counters.dropped,
            }

    # --- lifecycle -----------------------------------------------------------

    @property
    def port(self) -> int:
        if self._listener is None:
            return self.config.listen_port
        return self._listener.getsockname()[1]

    def start(self) -> None:
        with self._lock:
            if self._started:
                return
            self._listener = socket.create_server(
                (self.config.listen_host, self.config.listen_port)
            )
            self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
            self._accept_thread.start()
            now = self.clock.now_ms()
            self._start_ms = now
            self._last_tick_ms = now
            for dev_id in self.descriptors:
                self._next_due[dev_id] = now
                self._silence_base[dev_id] = now
            self._started = True
        self._heartbeat(now)  # best-effort registration

    def stop(self) -> None:
        with self._lock:
            self._started = False
            listener, self._listener = self._listener, None
            conns = list(self._conns.values())
            self._conns.clear()
        if listener is not None:
            try:
                listener.close()
            except OSError:
                pass
        for conn in conns:
            conn.close()

    # --- tick loop -------------------------------------------------------------

    def tick(self, now_ms: Optional[int] = None) -> list[SensorReading]:
        """One scheduler step: advance actuators, sample due sensors,
        push, poll instructions, heartbeat, stream to direct clients."""
        now = self.clock.now_ms() if now_ms is None else now_ms
        with self._lock:
            elapsed = max(0, now - self._last_tick_ms)
            self._last_tick_ms = now
            for buzzer in self.bank.buzzers.values():
                buzzer.advance(elapsed)
            emitted = self._sample_due(now)
            if self._pending:
                self.push_cycle(now)
            if self.cloud_mode is CloudMode.REACHABLE:
                if self._last_poll_ms is None or now - self._last_poll_ms >= int(
                    self.config.instr_poll_s * 1000
                ):
                    self._last_poll_ms = now
                    self._pull_instructions(now)
            if self._last_heartbeat_ms is None or now - self._last_heartbeat_ms >= int(
                self.config.heartbeat_s * 1000
            ):
                self._heartbeat(now)
            self._stream_to_clients(now, emitted)
        return emitted

    def _sample_due(self, now: int) -> list[SensorReading]:
        emitted: list[SensorReading] = []
        for dev_id in sorted(self.descriptors):
            desc = self.descriptors[dev_id]
            sim = self.bank.sensors.get(dev_id)
            if sim is None or not desc.enabled:
                continue
            due = self._next_due.get(dev_id)
            if due is None or now < due:
                continue
            period_ms = int(desc.push_period_s * 1000)
            nxt = due + period_ms
            if nxt <= now:  # missed intervals collapse, no bursting
                nxt = now + period_ms
            self._next_due[dev_id] = nxt
            sim_time_s = (now - self._start_ms) / 1000.0
            try:
                raw = sim.sample(sim_time_s, self._timestamp(now))
            except edgesim.SensorFailed:
                self._fail_reason[dev_id] = "sensor failed"
                continue
            self._fail_reason.pop(dev_id, None)
            self._last_sample_ms[dev_id] = now
            reading = self._process(dev_id, raw)
            emitted.append(reading)
            self.counters.emitted += 1
            self._pending.append(reading)
            if len(self._pending) > MAX_PENDING:
                self._pending.popleft()
                self.counters.dropped += 1
            self._evaluate(dev_id, desc, reading, now)
        return emitted

    def _process(self, dev_id: str, raw: SensorReading) -> SensorReading:
        if self.config.window <= 1:
            return raw
        window = self._windows.setdefault(dev_id, deque(maxlen=self.config.window))
        window.append(raw.value)
        return dataclasses.replace(raw, value=sum(window) / len(window))

    def _timestamp(self, now: int) -> int:
        return self._start_ms + self.rtc.now(now - self._start_ms)

    def _evaluate(self, dev_id: str, desc: DeviceDescriptor, reading: SensorReading, now: int) -> None:
        if desc.threshold is None:
            return
        ev = evaluate_threshold(reading.value, desc.threshold)
        prev = self._last_eval.get(dev_id, Evaluation.NORMAL)
        self._last_eval[dev_id] = ev
        if ev is not Evaluation.ABNORMAL:
            return
        if prev is not Evaluation.ABNORMAL:
            self.breach_log.append(
                {"device_id": dev_id, "t_ms": now, "value": reading.value}
            )
        duration_ms = max(1000, int(SILENCE_PERIODS * desc.push_period_s * 1000))
        cmd = ActuatorCommand(
            power_volts=AUTO_BUZZ_VOLTS, tone_hz=AUTO_BUZZ_TONE_HZ, duration_ms=duration_ms
        )
        for buzzer in self.bank.buzzers.values():
            buzzer.actuate(cmd)

    # --- cloud path ---------------------------------------------------------------

    def push_cycle(self, now: Optional[int] = None) -> PushReport:
        now = self.clock.now_ms() if now is None else now
        with self._lock:
            batch = list(self._pending)
            if not batch:
                return PushReport(0, 0)
            try:
                self._store.put(
                    "/v1/readings", {"readings": [r.to_json() for r in batch]}
                )
            except HttpApiError as exc:
                if exc.status < 500:
                    # the store will never accept this batch; drop it
                    self._drop_pending(len(batch))
                    log.warning("%s: batch rejected: %s", self.fog_id, exc)
                    return PushReport(len(batch), 0, f"rejected: {exc}")
                return self._push_failed(now, len(batch), f"http {exc.status}")
            except requests.RequestException as exc:
                return self._push_failed(now, len(batch), type(exc).__name__)
            for _ in range(len(batch)):
                self._pending.popleft()
            self.counters.pushed += len(batch)
            self._consecutive_failures = 0
            self._set_cloud_mode(CloudMode.REACHABLE, now, "push succeeded")
            return PushReport(len(batch), len(batch))

    def _drop_pending(self, n: int) -> None:
        for _ in range(n):
            self._pending.popleft()
        self.counters.dropped += n

    def _push_failed(self, now: int, attempted: int, cause: str) -> PushReport:
        self._consecutive_failures += 1
        if self._consecutive_failures >= CLOUD_FAILURE_THRESHOLD:
            self._set_cloud_mode(CloudMode.UNREACHABLE, now, cause)
        return PushReport(attempted, 0, cause)

    def _set_cloud_mode(self, mode: CloudMode, now: int, cause: str) -> None:
        if mode is self.cloud_mode:
            return
        self.cloud_mode = mode
        self.cloud_log.append({"t_ms": now, "mode": mode.value, "cause": cause})
        log.info("%s: cloud %s (%s)", self.fog_id, mode.value, cause)

    def _pull_instructions(self, now: int) -> None:
        try:
            resp = self._store.get(
                "/v1/instructions",
                params={"fog": self.fog_id, "since": self.last_applied_instr},
            )
        except (HttpApiError, requests.RequestException):
            return
        instrs = [Instruction.from_json(d) for d in resp.get("instructions", [])]
        if instrs:
            self.apply_instructions(instrs, now)

    def _heartbeat(self, now: int) -> None:
        self._last_heartbeat_ms = now
        try:
            self._store.post("/v1/nodes", self.node_doc(now))
        except (HttpApiError, requests.RequestException):
            pass

    # --- instructions ---------------------------------------------------------------

    def apply_instructions(self, instrs: list[Instruction], now: Optional[int] = None) -> int:
        """Apply an ascending batch exactly once; re-deliveries are no-ops."""
        now = self.clock.now_ms() if now is None else now
        applied = 0
        with self._lock:
            for instr in instrs:
                if 0 < instr.instr_id <= self.last_applied_instr:
                    continue
                if self._apply_body(instr.target, instr.body, now):
                    applied += 1
                if instr.instr_id > 0:
                    self.last_applied_instr = max(self.last_applied_instr, instr.instr_id)
        return applied

    def _apply_body(self, target: Target, body: InstructionBody, now: int) -> bool:
        if isinstance(target, str):
            if target != self.fog_id:
                log.warning("%s: instruction for %s ignored", self.fog_id, target)
                return False
            if isinstance(body, ActuatorCommand):
                ids = [d for d in self.descriptors if d in self.bank.buzzers]
            else:
                ids = [d for d in self.descriptors if d in self.bank.sensors]
            results = [self._apply_device(d, body, now) for d in ids]
            return bool(results) and all(results)
        if target.fog_id != self.fog_id:
            log.warning("%s: instruction for %s ignored", self.fog_id, target)
            return False
        return self._apply_device(target.device_id, body, now)

    def _apply_device(self, dev_id: str, body: InstructionBody, now: int) -> bool:
        desc = self.descriptors.get(dev_id)
        if desc is None:
            log.warning("%s: unknown instruction target %r", self.fog_id, dev_id)
            return False
        try:
            if isinstance(body, SetEnabled):
                self.descriptors[dev_id] = dataclasses.replace(desc, enabled=body.enabled)
                if body.enabled and dev_id in self.bank.sensors:
                    self._next_due[dev_id] = now
                    self._silence_base[dev_id] = now
            elif isinstance(body, SetThreshold):
                self.descriptors[dev_id] = dataclasses.replace(desc, threshold=body.threshold)
            elif isinstance(body, SetPushPeriod):
                self.descriptors[dev_id] = dataclasses.replace(
                    desc, push_period_s=body.push_period_s
                )
                base = self._last_sample_ms.get(dev_id, now)
                self._next_due[dev_id] = max(now, base + int(body.push_period_s * 1000))
            elif isinstance(body, SetEmailAlerts):
                self.descriptors[dev_id] = dataclasses.replace(
                    desc, email_alerts=body.email_alerts
                )
            elif isinstance(body, ActuatorCommand):
                buzzer = self.bank.buzzers.get(dev_id)
                if buzzer is None:
                    log.warning("%s: %r is not an actuator", self.fog_id, dev_id)
                    return False
                buzzer.actuate(body)
            else:
                return False
        except (ValueError, edgesim.RejectedCommand) as exc:
            log.warning("%s: instruction rejected for %r: %s", self.fog_id, dev_id, exc)
            return False
        return True

    # --- health and reporting -------------------------------------------------------

    def health_snapshot(self, now: Optional[int] = None) -> list[HealthStatus]:
        now = self.clock.now_ms() if now is None else now
        with self._lock:
            rows = [
                HealthStatus(
                    fog_id=self.fog_id, device_id=None,
                    state=HealthState.HEALTHY, last_seen_ms=now,
                )
            ]
            for dev_id in sorted(self.descriptors):
                desc = self.descriptors[dev_id]
                last = self._last_sample_ms.get(dev_id, 0)
                state, reason = HealthState.HEALTHY, ""
                if dev_id in self._fail_reason:
                    state, reason = HealthState.FAULTY, self._fail_reason[dev_id]
                elif desc.enabled and dev_id in self.bank.sensors:
                    base = max(last, self._silence_base.get(dev_id, self._start_ms))
                    if now - base > SILENCE_PERIODS * desc.push_period_s * 1000:
                        state, reason = HealthState.FAULTY, "no sample"
                rows.append(
                    HealthStatus(
                        fog_id=self.fog_id, device_id=dev_id,
                        state=state, reason=reason, last_seen_ms=last,
                    )
                )
        return rows

    def active_clients(self) -> list[tuple[str, str]]:
        with self._lock:
            return sorted(
                (c.session.client_id, c.session.peer) for c in self._conns.values()
            )

    def node_doc(self, now: Optional[int] = None) -> dict[str, Any]:
        now = self.clock.now_ms() if now is None else now
        with self._lock:
            actuators = [
                {"id": self.bank.buzzers[d].id.to_json(), **self.bank.buzzers[d].state_json()}
                for d in sorted(self.bank.buzzers)
            ]
            return {
                "fog_id": self.fog_id,
                "endpoint": {"host": self.config.listen_host, "port": self.port},
                "devices": [self.descriptors[d].to_json() for d in sorted(self.descriptors)],
                "health": [h.to_json() for h in self.health_snapshot(now)],
                "security_events": [
                    {"seq": seq, **event.to_json()} for seq, event in self.security_events
                ],
                "actuators": actuators,
                "active_clients": len(self._conns),
                "client_list": [list(c) for c in self.active_clients()],
                "counters": {
                    "emitted": self.counters.emitted,
                    "pushed": self.counters.pushed,
                    "buffered": len(self._pending),
                    "dropped": self.counters.dropped,
                },
                "cloud_mode": self.cloud_mode.value,
                "last_applied_instr": self.last_applied_instr,
                "breaches": self.breach_log[-20:],
            }

    def _record_event(self, kind: SecurityEventKind, peer: str) -> None:
        with self._lock:
            self._event_seq += 1
            event = SecurityEvent(
                fog_id=self.fog_id, kind=kind, peer=peer,
                observed_at_ms=self.clock.now_ms(),
            )
            self.security_events.append((self._event_seq, event))
        log.info("%s: security event %s from %s", self.fog_id, kind.value, peer)

    # --- direct serving ----------------------------------------------------------

    def _accept_loop(self) -> None:
        listener = self._listener
        while listener is not None:
            try:
                sock, addr = listener.accept()
            except OSError:
                return
            threading.Thread(
                target=self._serve_conn, args=(sock, addr), daemon=True
            ).start()
            listener = self._listener

    def _serve_conn(self, sock: socket.socket, addr) -> None:
        peer = f"{addr[0]}:{addr[1]}"
        try:
            session = wire.server_handshake(sock, self.config.key)
        except wire.HandshakeTimeout:
            sock.close()
            return
        except (wire.WireError, ConnectionError, OSError, ValueError):
            self._record_event(SecurityEventKind.AUTH_FAILURE, peer)
            sock.close()
            return
        conn = _ClientConn(session)
        with self._lock:
            if session.client_id not in self.config.known_clients:
                self._record_event(
                    SecurityEventKind.UNKNOWN_CLIENT_CONNECTED,
                    f"{session.client_id}@{peer}",
                )
            self._conns[session.peer] = conn
        try:
            self._session_loop(session, conn)
        finally:
            with self._lock:
                self._conns.pop(session.peer, None)
            conn.close()

    def _session_loop(self, session: wire.Session, conn: _ClientConn) -> None:
        while True:
            try:
                msg_type, payload = session.channel.recv()
            except wire.ReplayDetected:
                self._record_event(SecurityEventKind.REPLAY_DETECTED, session.peer)
                return
            except wire.AuthFailure:
                self._record_event(SecurityEventKind.FRAME_TAMPERED, session.peer)
                return
            except (wire.WireError, ConnectionError, OSError):
                return
            if msg_type != wire.MsgType.INSTRUCTION:
                continue
            try:
                instr = Instruction.from_json(json.loads(payload.decode()))
            except (ValueError, KeyError, TypeError) as exc:
                conn.offer(wire.MsgType.ERROR, {"error": f"bad instruction: {exc}"})
                continue
            with self._lock:
                ok = self._apply_body(instr.target, instr.body, self.clock.now_ms())
                if instr.instr_id > 0:
                    self.last_applied_instr = max(self.last_applied_instr, instr.instr_id)
            conn.offer(wire.MsgType.ACK, {"instr_id": instr.instr_id, "ok": ok})

    def _stream_to_clients(self, now: int, emitted: list[SensorReading]) -> None:
        if not self._conns:
            return
        batch = {"fog_id": self.fog_id, "readings": [r.to_json() for r in emitted]}
        health = self.node_doc(now)
        health["t_ms"] = now  # step marker for lockstep readers
        for conn in list(self._conns.values()):
            if emitted:
                conn.offer(wire.MsgType.READING_BATCH, batch)
            conn.offer(wire.MsgType.HEALTH, health)
