"""Application-layer backend: polls the cloud, fails over to direct fog
links, tracks breach episodes and alerts, routes operator commands, and
serves the panel HTTP API.

One supervisor owns NetworkMode and the direct-session set. Store polls
and direct-stream readers publish into the shared state under one lock;
API handlers read the last assembled snapshot.
"""

from __future__ import annotations

import json
import logging
import mimetypes
import queue
import socket
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

import requests

from . import wire
from .clock import Clock, RealClock
from .httpkit import HttpApiError, JsonClient, JsonHttpServer
from .model import (
    ActuatorCommand,
    DeviceDescriptor,
    DeviceId,
    DeviceKind,
    Evaluation,
    HealthState,
    InstructionBody,
    Instruction,
    Mode,
    NetworkMode,
    SENSOR_KINDS,
    SensorReading,
    SetThreshold,
    body_from_json,
    body_to_json,
    evaluate_threshold,
    indicator_color,
    target_to_json,
)

log = logging.getLogger(__name__)

DEFAULT_PORT = 7900
DIAL_TIMEOUT_S = 2.0
ACK_TIMEOUT_S = 2.0
SELF_TEST_CMD = ActuatorCommand(power_volts=3.3, tone_hz=1000.0, duration_ms=500)


# --- alert sinks -----------------------------------------------------------

class NullNotifier:
    def notify(self, alert: dict[str, Any]) -> bool:
        return True


class FileLogNotifier:
    """Default sink: appends one JSON line per alert to a log file."""

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def notify(self, alert: dict[str, Any]) -> bool:
        try:
            with open(self.path, "a") as fh:
                fh.write(json.dumps(alert, separators=(",", ":")) + "\n")
            return True
        except OSError:
            return False


class SmtpNotifier:
    def __init__(self, host: str, port: int, sender: str, recipients: list[str]):
        self.host = host
        self.port = port
        self.sender = sender
        self.recipients = recipients

    def notify(self, alert: dict[str, Any]) -> bool:
        import smtplib
        from email.message import EmailMessage

        msg = EmailMessage()
        msg["From"] = self.sender
        msg["To"] = ", ".join(self.recipients)
        msg["Subject"] = (
            f"working-range breach: {alert['fog_id']}/{alert['device_id']}"
        )
        msg.set_content(json.dumps(alert, indent=2))
        try:
            with smtplib.SMTP(self.host, self.port, timeout=5) as smtp:
                smtp.send_message(msg)
            return True
        except (OSError, smtplib.SMTPException):
            return False


def notifier_from_config(cfg: Optional[dict[str, Any]]):
    if not cfg or cfg.get("kind", "file_log") == "null":
        return NullNotifier() if cfg and cfg.get("kind") == "null" else FileLogNotifier("alerts.log")
    kind = cfg.get("kind", "file_log")
    if kind == "file_log":
        return FileLogNotifier(cfg.get("path", "alerts.log"))
    if kind == "smtp":
        return SmtpNotifier(
            host=cfg["host"],
            port=int(cfg.get("port", 25)),
            sender=cfg.get("sender", "fogdeck@localhost"),
            recipients=list(cfg.get("recipients", ["operator@localhost"])),
        )
    raise ValueError(f"unknown notifier kind: {kind!r}")


# --- direct fog links ---------------------------------------------------------

class _NodeLink:
    """One dialed offline session; a reader thread feeds frames back into
    the control plane and wakes waiters on Health markers and Acks."""

    def __init__(
        self,
        fog_id: str,
        session: wire.Session,
        on_batch: Callable[[str, dict], None],
        on_health: Callable[[str, dict], None],
        on_dead: Callable[[str], None],
    ):
        self.fog_id = fog_id
        self.session = session
        self.alive = True
        self.last_marker_ms = 0
        self._acks: dict[int, dict] = {}
        self._cond = threading.Condition()
        self._on_batch = on_batch
        self._on_health = on_health
        self._on_dead = on_dead
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def _read_loop(self) -> None:
        while True:
            try:
                msg_type, obj = self.session.channel.recv_json()
            except (wire.WireError, ConnectionError, OSError, ValueError):
                break
            if msg_type == wire.MsgType.READING_BATCH:
                self._on_batch(self.fog_id, obj)
            elif msg_type == wire.MsgType.HEALTH:
                self._on_health(self.fog_id, obj)
                with self._cond:
                    self.last_marker_ms = max(self.last_marker_ms, int(obj.get("t_ms", 0)))
                    self._cond.notify_all()
            elif msg_type == wire.MsgType.ACK:
                with self._cond:
                    self._acks[int(obj.get("instr_id", 0))] = obj
                    self._cond.notify_all()
        self.alive = False
        with self._cond:
            self._cond.notify_all()
        self._on_dead(self.fog_id)

    def send_instruction(self, instr: Instruction) -> None:
        self.session.channel.send_json(wire.MsgType.INSTRUCTION, instr.to_json())

    def await_ack(self, instr_id: int, timeout_s: float) -> Optional[dict]:
        with self._cond:
            self._cond.wait_for(
                lambda: instr_id in self._acks or not self.alive, timeout=timeout_s
            )
            return self._acks.pop(instr_id, None)

    def await_marker(self, t_ms: int, timeout_s: float) -> bool:
        """Block until a Health marker for step t_ms arrived (lockstep mode)."""
        with self._cond:
            return self._cond.wait_for(
                lambda: self.last_marker_ms >= t_ms or not self.alive, timeout=timeout_s
            )

    def close(self) -> None:
        self.alive = False
        self.session.channel.close()


# --- the control plane ------------------------------------------------------------

@dataclass(frozen=True)
class ControlPlaneConfig:
    store_url: str
    keys: dict[str, wire.PresharedKey] = field(default_factory=dict)
    host: str = "127.0.0.1"
    port: int = DEFAULT_PORT
    client_id: str = "control-plane"
    poll_timeout_s: float = 2.0
    fail_threshold: int = 3
    stale_after_s: float = 5.0  # node unreachable when last_seen older than this
    pending_timeout_s: float = 10.0
    info: dict = field(
        default_factory=lambda: {
            "operator": "operator",
            "application": "fogdeck",
            "area": "test field",
        }
    )
    store_token: Optional[str] = None
    lockstep: bool = False  # wait for per-step Health markers (virtual clock runs)
    static_dir: Optional[str] = None


class ControlPlane:
    def __init__(
        self,
        config: ControlPlaneConfig,
        notifier=None,
        clock: Optional[Clock] = None,
    ):
        self.config = config
        self.clock: Clock = clock or RealClock()
        self.notifier = notifier if notifier is not None else NullNotifier()
        self._store = JsonClient(
            config.store_url, token=config.store_token, timeout_s=config.poll_timeout_s
        )
        self._lock = threading.RLock()
        now = self.clock.now_ms()
        self.mode = NetworkMode(mode=Mode.ONLINE, since_ms=now, cause="startup")
        self.mode_log: list[NetworkMode] = [self.mode]
        self._poll_failures = 0
        self._nodes: dict[str, dict[str, Any]] = {}
        self._node_fresh: dict[str, bool] = {}
        self._node_reason: dict[str, str] = {}
        self._descs: dict[tuple[str, str], DeviceDescriptor] = {}
        self._latest: dict[tuple[str, str], SensorReading] = {}
        self._links: dict[str, _NodeLink] = {}
        self._seen_events: set[tuple[str, int]] = set()
        self.security_feed: list[dict[str, Any]] = []
        self.episodes: list[dict[str, Any]] = []
        self._open_episode: dict[tuple[str, str], dict[str, Any]] = {}
        self.alerts: list[dict[str, Any]] = []
        self.pending: list[dict[str, Any]] = []
        self._direct_seq = 0
        self._snapshot: dict[str, Any] = {}
        self._subs: list[queue.Queue] = []
        self.http = JsonHttpServer(config.host, config.port, name="control-plane")
        self._routes()

    # --- lifecycle ------------------------------------------------------------

    def start(self) -> None:
        self.http.start()

    def stop(self) -> None:
        self.http.stop()
        with self._lock:
            links = list(self._links.values())
            self._links.clear()
        for link in links:
            link.close()
        self._store.close()

    @property
    def port(self) -> int:
        return self.http.port

    # --- refresh loop ------------------------------------------------------------

    def refresh(self, now_ms: Optional[int] = None) -> dict[str, Any]:
        """One supervision step: poll or drain, reconcile mode, assemble panel."""
        now = self.clock.now_ms() if now_ms is None else now_ms
        polled = self._poll_store(now)
        with self._lock:
            if self.mode.mode is Mode.ONLINE:
                if polled:
                    self._poll_failures = 0
                else:
                    self._poll_failures += 1
                    if self._poll_failures >= self.config.fail_threshold:
                        self._enter_offline(now, "datastore unreachable")
            else:
                if polled:
                    self._enter_online(now, "datastore poll succeeded")
                else:
                    self._ensure_links(now)
        if self.mode.mode is Mode.OFFLINE and self.config.lockstep:
            # wait outside the lock; reader threads need it to deliver
            for link in list(self._links.values()):
                link.await_marker(now, timeout_s=2.0)
        with self._lock:
            self._update_breaches(now)
            self._prune_pending(now)
            snapshot = self._assemble(now)
            self._snapshot = snapshot
            subs = list(self._subs)
        for q in subs:
            try:
                q.put_nowait(snapshot)
            except queue.Full:
                pass
        return snapshot

    def _poll_store(self, now: int) -> bool:
        try:
            stats = self._store.get("/v1/stats")
            nodes = self._store.get("/v1/nodes")
        except (HttpApiError, requests.RequestException):
            return False
        with self._lock:
            for d in stats.get("latest", []):
                self._ingest_reading(SensorReading.from_json(d))
            stale_ms = int(self.config.stale_after_s * 1000)
            for doc in nodes.get("nodes", []):
                fog_id = doc["fog_id"]
                self._set_node_doc(fog_id, doc)
                fresh = now - int(doc.get("last_seen_ms", 0)) <= stale_ms
                self._node_fresh[fog_id] = fresh
                self._node_reason[fog_id] = "" if fresh else "no recent contact"
        return True

    def _ingest_reading(self, r: SensorReading) -> None:
        key = (r.id.fog_id, r.id.device_id)
        cur = self._latest.get(key)
        if cur is None or r.seq > cur.seq:
            self._latest[key] = r

    def _set_node_doc(self, fog_id: str, doc: dict[str, Any]) -> None:
        self._nodes[fog_id] = doc
        for d in doc.get("devices", []):
            try:
                desc = DeviceDescriptor.from_json(d)
            except (ValueError, KeyError):
                continue
            self._descs[(desc.id.fog_id, desc.id.device_id)] = desc
        for e in doc.get("security_events", []):
            key = (fog_id, int(e.get("seq", 0)))
            if key in self._seen_events:
                continue
            self._seen_events.add(key)
            self.security_feed.append({k: v for k, v in e.items()})
        self.security_feed.sort(key=lambda e: (e["observed_at_ms"], e["fog_id"], e["seq"]))

    # direct-link callbacks (reader threads)

    def _on_batch(self, fog_id: str, obj: dict[str, Any]) -> None:
        with self._lock:
            for d in obj.get("readings", []):
                try:
                    self._ingest_reading(SensorReading.from_json(d))
                except (ValueError, KeyError):
                    continue

    def _on_health(self, fog_id: str, doc: dict[str, Any]) -> None:
        with self._lock:
            self._set_node_doc(fog_id, doc)
            self._node_fresh[fog_id] = True
            self._node_reason[fog_id] = ""

    def _on_link_dead(self, fog_id: str) -> None:
        with self._lock:
            if self.mode.mode is Mode.OFFLINE:
                self._node_fresh[fog_id] = False
                self._node_reason[fog_id] = "direct link lost"

    # --- mode transitions -----------------------------------------------------------

    def _enter_offline(self, now: int, cause: str) -> None:
        self.mode = NetworkMode(mode=Mode.OFFLINE, since_ms=now, cause=cause)
        self.mode_log.append(self.mode)
        log.info("network mode offline (%s)", cause)
        self._ensure_links(now)

    def _enter_online(self, now: int, cause: str) -> None:
        self.mode = NetworkMode(mode=Mode.ONLINE, since_ms=now, cause=cause)
        self.mode_log.append(self.mode)
        self._poll_failures = 0
        log.info("network mode online (%s)", cause)
        links, self._links = list(self._links.values()), {}
        for link in links:
            link.close()

    def _ensure_links(self, now: int) -> None:
        """Dial any registered node we do not hold a live session to."""
        for fog_id in sorted(self._nodes):
            link = self._links.get(fog_id)
            if link is not None and link.alive:
                continue
            endpoint = self._nodes[fog_id].get("endpoint") or {}
            key = self.config.keys.get(fog_id)
            if not endpoint.get("port") or key is None:
                self._node_fresh[fog_id] = False
                self._node_reason[fog_id] = "no offline endpoint or key"
                continue
            try:
                sock = socket.create_connection(
                    (endpoint.get("host", "127.0.0.1"), int(endpoint["port"])),
                    timeout=DIAL_TIMEOUT_S,
                )
                session = wire.client_handshake(sock, key, self.config.client_id)
            except (OSError, wire.WireError) as exc:
                self._node_fresh[fog_id] = False
                self._node_reason[fog_id] = f"offline dial failed: {type(exc).__name__}"
                continue
            self._links[fog_id] = _NodeLink(
                fog_id, session, self._on_batch, self._on_health, self._on_link_dead
            )
            self._node_fresh[fog_id] = True
            self._node_reason[fog_id] = ""

    # --- breach episodes -----------------------------------------------------------

    @staticmethod
    def _deviation(value: float, desc: DeviceDescriptor) -> float:
        rng = desc.threshold
        return max(value - rng.high, rng.low - value)

    def _update_breaches(self, now: int) -> None:
        for key in sorted(self._latest):
            fog_id, device_id = key
            reading = self._latest[key]
            desc = self._descs.get(key)
            open_ep = self._open_episode.get(key)
            if desc is None or desc.threshold is None or not desc.enabled:
                if open_ep is not None:
                    open_ep["ended_at_ms"] = now
                    del self._open_episode[key]
                continue
            ev = evaluate_threshold(reading.value, desc.threshold)
            if ev is Evaluation.ABNORMAL:
                if open_ep is None:
                    ep = {
                        "fog_id": fog_id,
                        "device_id": device_id,
                        "started_at_ms": reading.timestamp_ms,
                        "ended_at_ms": None,
                        "peak_value": reading.value,
                        "alert_sent": False,
                    }
                    self._open_episode[key] = ep
                    self.episodes.append(ep)
                    if desc.email_alerts:
                        self._dispatch_alert(ep, desc, reading, now)
                elif self._deviation(reading.value, desc) > self._deviation(
                    open_ep["peak_value"], desc
                ):
                    open_ep["peak_value"] = reading.value
            else:
                if open_ep is not None:
                    open_ep["ended_at_ms"] = reading.timestamp_ms
                    del self._open_episode[key]

    def _dispatch_alert(
        self, ep: dict, desc: DeviceDescriptor, reading: SensorReading, now: int
    ) -> None:
        alert = {
            "fog_id": ep["fog_id"],
            "device_id": ep["device_id"],
            "value": reading.value,
            "threshold": desc.threshold.to_json(),
            "episode_started_at_ms": ep["started_at_ms"],
            "dispatched_at_ms": now,
        }
        alert["delivered"] = bool(self.notifier.notify(alert))
        self.alerts.append(alert)
        ep["alert_sent"] = True

    # --- operator commands -----------------------------------------------------------

    def set_control(self, fog_id: str, device_id: str, body_json: dict[str, Any]) -> dict:
        try:
            body = body_from_json(body_json)
        except (ValueError, KeyError, TypeError) as exc:
            raise HttpApiError(400, f"bad instruction body: {exc}")
        now = self.clock.now_ms()
        with self._lock:
            desc = self._descs.get((fog_id, device_id))
            if desc is None:
                raise HttpApiError(404, f"unknown device {fog_id}/{device_id}")
            self._check_body_kind(desc, body)
            mode = self.mode.mode
        target = DeviceId(fog_id=fog_id, device_id=device_id)
        if mode is Mode.ONLINE:
            try:
                resp = self._store.post(
                    "/v1/instructions",
                    {"target": target_to_json(target), "body": body_json},
                )
            except requests.RequestException:
                raise HttpApiError(503, "datastore unreachable; retry after failover")
            instr_id = int(resp["instr_id"])
            with self._lock:
                self.pending.append(
                    {
                        "fog_id": fog_id,
                        "device_id": device_id,
                        "body": body_json,
                        "instr_id": instr_id,
                        "issued_at_ms": now,
                        "via": "store",
                    }
                )
            return {"via": "store", "instr_id": instr_id, "pending": True}
        with self._lock:
            link = self._links.get(fog_id)
            self._direct_seq -= 1
            instr_id = self._direct_seq
        if link is None or not link.alive:
            raise HttpApiError(503, f"fog node {fog_id} unreachable in offline mode")
        instr = Instruction(instr_id=instr_id, target=target, body=body, issued_at_ms=now)
        try:
            link.send_instruction(instr)
        except (OSError, wire.WireError):
            raise HttpApiError(503, f"fog node {fog_id} link write failed")
        ack = link.await_ack(instr_id, timeout_s=ACK_TIMEOUT_S)
        if ack is None:
            raise HttpApiError(504, f"no ack from fog node {fog_id}")
        return {"via": "direct", "instr_id": instr_id, "ok": bool(ack.get("ok"))}

    @staticmethod
    def _check_body_kind(desc: DeviceDescriptor, body: InstructionBody) -> None:
        if isinstance(body, ActuatorCommand) and desc.kind is not DeviceKind.BUZZER_ACTUATOR:
            raise HttpApiError(400, f"actuator command on {desc.kind.value}")
        if isinstance(body, SetThreshold) and desc.kind not in SENSOR_KINDS:
            raise HttpApiError(400, f"threshold on {desc.kind.value}")

    def check_all_actuators(self) -> list[dict[str, Any]]:
        with self._lock:
            buzzers = sorted(
                key for key, desc in self._descs.items()
                if desc.kind is DeviceKind.BUZZER_ACTUATOR
            )
        results = []
        for fog_id, device_id in buzzers:
            row = {"fog_id": fog_id, "device_id": device_id}
            try:
                detail = self.set_control(fog_id, device_id, body_to_json(SELF_TEST_CMD))
                row.update(ok=True, detail=detail)
            except HttpApiError as exc:
                row.update(ok=False, error=exc.message)
            results.append(row)
        return results

    def _prune_pending(self, now: int) -> None:
        timeout_ms = int(self.config.pending_timeout_s * 1000)
        keep = []
        for p in self.pending:
            node = self._nodes.get(p["fog_id"], {})
            if p["via"] == "store" and int(node.get("last_applied_instr", 0)) >= p["instr_id"]:
                continue  # confirmed applied
            if now - p["issued_at_ms"] > timeout_ms:
                continue
            keep.append(p)
        self.pending = keep

    # --- panel assembly ---------------------------------------------------------------

    def _assemble(self, now: int) -> dict[str, Any]:
        health_rows: list[dict] = []
        stats_rows: list[dict] = []
        controls: list[dict] = []
        actuators: list[dict] = []
        node_rows: list[dict] = []
        pending_by_dev: dict[tuple[str, str], dict] = {
            (p["fog_id"], p["device_id"]): p["body"] for p in self.pending
        }
        for fog_id in sorted(self._nodes):
            doc = self._nodes[fog_id]
            reachable = self._node_fresh.get(fog_id, False)
            if reachable:
                health_rows.extend(doc.get("health", []))
            else:
                reason = self._node_reason.get(fog_id) or "fog node unreachable"
                health_rows.append(
                    {
                        "fog_id": fog_id,
                        "device_id": None,
                        "state": HealthState.UNREACHABLE.value,
                        "reason": reason,
                        "last_seen_ms": int(doc.get("last_seen_ms", 0)),
                    }
                )
                for d in doc.get("devices", []):
                    health_rows.append(
                        {
                            "fog_id": fog_id,
                            "device_id": d["id"]["device_id"],
                            "state": HealthState.UNREACHABLE.value,
                            "reason": "fog node unreachable",
                            "last_seen_ms": int(doc.get("last_seen_ms", 0)),
                        }
                    )
            for d in doc.get("devices", []):
                key = (fog_id, d["id"]["device_id"])
                desc = self._descs.get(key)
                if desc is None:
                    continue
                if desc.kind in SENSOR_KINDS:
                    latest = self._latest.get(key)
                    stats_rows.append(
                        {
                            "id": desc.id.to_json(),
                            "location": desc.location.to_json(),
                            "value": latest.value if latest else None,
                            "unit": latest.unit.value if latest else None,
                            "timestamp_ms": latest.timestamp_ms if latest else None,
                            "seq": latest.seq if latest else None,
                            "indicator": indicator_color(latest, desc).value,
                        }
                    )
                controls.append({**desc.to_json(), "pending": pending_by_dev.get(key)})
            actuators.extend(doc.get("actuators", []))
            node_rows.append(
                {
                    "fog_id": fog_id,
                    "reachable": reachable,
                    "reason": self._node_reason.get(fog_id, ""),
                    "cloud_mode": doc.get("cloud_mode"),
                    "active_clients": doc.get("active_clients", 0),
                    "client_list": doc.get("client_list", []),
                    "counters": doc.get("counters", {}),
                    "last_seen_ms": int(doc.get("last_seen_ms", 0)),
                    "last_applied_instr": int(doc.get("last_applied_instr", 0)),
                }
            )
        return {
            "info": {**self.config.info, "refreshed_at_ms": now},
            "network": self.mode.to_json(),
            "mode_log": [m.to_json() for m in self.mode_log],
            "health": health_rows,
            "stats": stats_rows,
            "controls": controls,
            "actuators": actuators,
            "nodes": node_rows,
            "security": list(self.security_feed),
            "breaches": [dict(e) for e in self.episodes],
            "alerts": list(self.alerts),
            "pending": [dict(p) for p in self.pending],
        }

    def snapshot(self) -> dict[str, Any]:
        with self._lock:
            return self._snapshot or self._assemble(self.clock.now_ms())

    # --- HTTP API ------------------------------------------------------------------------

    def _routes(self) -> None:
        self.http.route("GET", r"/api/panel", lambda m, q, b: (200, self.snapshot()))
        self.http.route("GET", r"/api/health", self._api_health)
        self.http.route("GET", r"/api/network", self._api_network)
        self.http.route("GET", r"/api/security", self._api_security)
        self.http.route("POST", r"/api/devices/([^/]+)/([^/]+)/control", self._api_control)
        self.http.route("POST", r"/api/actuators/check-all", self._api_check_all)
        self.http.raw_route("GET", r"/api/stream", self._api_stream)
        if self.config.static_dir:
            self.http.raw_route("GET", r"/(?!api/).*", self._api_static)

    def _api_health(self, match, query, body):
        snap = self.snapshot()
        return 200, {"health": snap.get("health", []), "nodes": snap.get("nodes", [])}

    def _api_network(self, match, query, body):
        snap = self.snapshot()
        return 200, {"network": snap.get("network"), "mode_log": snap.get("mode_log", [])}

    def _api_security(self, match, query, body):
        snap = self.snapshot()
        return 200, {"events": snap.get("security", [])}

    def _api_control(self, match, query, body):
        if body is None:
            raise HttpApiError(400, "missing instruction body")
        return 200, self.set_control(match.group(1), match.group(2), body)

    def _api_check_all(self, match, query, body):
        return 200, {"results": self.check_all_actuators()}

    def _api_stream(self, handler, match, query) -> None:
        """Newline-delimited JSON: one full panel snapshot per refresh."""
        q: queue.Queue = queue.Queue(maxsize=16)
        with self._lock:
            self._subs.append(q)
            first = self._snapshot
        try:
            handler.send_response(200)
            handler.send_header("Content-Type", "application/x-ndjson")
            handler.send_header("Cache-Control", "no-store")
            handler.send_header("Connection", "close")
            handler.end_headers()
            if first:
                handler.wfile.write(json.dumps(first).encode() + b"\n")
                handler.wfile.flush()
            while True:
                try:
                    snap = q.get(timeout=15.0)
                except queue.Empty:
                    snap = {"keepalive": True}
                handler.wfile.write(json.dumps(snap).encode() + b"\n")
                handler.wfile.flush()
        except (BrokenPipeError, ConnectionResetError, OSError):
            pass
        finally:
            with self._lock:
                if q in self._subs:
                    self._subs.remove(q)

    def _api_static(self, handler, match, query) -> None:
        root = Path(self.config.static_dir).resolve()
        rel = handler.path.split("?", 1)[0].lstrip("/") or "index.html"
        path = (root / rel).resolve()
        if root not in path.parents and path != root:
            path = root / "index.html"
        if path.is_dir():
            path = path / "index.html"
        if not path.is_file():
            path = root / "index.html"  # SPA fallback
        try:
            data = path.read_bytes()
        except OSError:
            handler.send_response(404)
            handler.send_header("Content-Length", "0")
            handler.end_headers()
            return
        ctype = mimetypes.guess_type(str(path))[0] or "application/octet-stream"
        handler.send_response(200)
        handler.send_header("Content-Type", ctype)
        handler.send_header("Content-Length", str(len(data)))
        handler.end_headers()
        try:
            handler.wfile.write(data)
        except (BrokenPipeError, ConnectionResetError):
            pass
