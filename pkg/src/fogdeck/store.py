"""Self-hosted cloud layer: readings and instructions tables over HTTP.

Ingest is idempotent on (device, seq) and atomic per batch; instruction
ids are assigned gap-free at insert. Durability comes from append-only
JSONL logs replayed at startup, compacted into a snapshot on graceful
shutdown. A hard stop (crash) skips compaction and must lose nothing
that was committed.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from pathlib import Path
from typing import Any, Optional

from .httpkit import HttpApiError, JsonHttpServer
from .model import (
    ActuatorCommand,
    DeviceDescriptor,
    DeviceKind,
    Instruction,
    InstructionBody,
    SENSOR_KINDS,
    SensorReading,
    SetThreshold,
    Target,
    body_from_json,
    target_fog_id,
    target_from_json,
    validate_reading,
)

log = logging.getLogger(__name__)

DEFAULT_PORT = 7800


class ValidationError(ValueError):
    pass


class NotFound(KeyError):
    pass


class Datastore:
    """In-memory tables with an append-only persistence log.

    All writes are serialized through one lock; readers snapshot under
    the same lock, which is plenty for a single-host testbed.
    """

    def __init__(self, data_dir: Optional[str | Path] = None, fsync: bool = False):
        self._lock = threading.RLock()
        self._readings: dict[tuple[str, str, int], SensorReading] = {}
        self._latest: dict[tuple[str, str], SensorReading] = {}
        self._instructions: dict[int, Instruction] = {}
        self._next_instr_id = 1
        self._nodes: dict[str, dict[str, Any]] = {}
        self._last_seen: dict[str, int] = {}
        self.fsync = fsync
        self.data_dir = Path(data_dir) if data_dir else None
        self._readings_log = None
        self._instructions_log = None
        if self.data_dir:
            self.data_dir.mkdir(parents=True, exist_ok=True)
            self._load()
            self._readings_log = open(self.data_dir / "readings.log", "a")
            self._instructions_log = open(self.data_dir / "instructions.log", "a")

    # --- persistence ---------------------------------------------------

    def _load(self) -> None:
        snap_path = self.data_dir / "snapshot.json"
        if snap_path.exists():
            snap = json.loads(snap_path.read_text())
            for d in snap.get("readings", []):
                self._insert_reading(SensorReading.from_json(d))
            for d in snap.get("instructions", []):
                instr = Instruction.from_json(d)
                self._instructions[instr.instr_id] = instr
            self._next_instr_id = int(snap.get("next_instr_id", 1))
        for line in self._read_log("readings.log"):
            self._insert_reading(SensorReading.from_json(line))
        for line in self._read_log("instructions.log"):
            instr = Instruction.from_json(line)
            if instr.instr_id not in self._instructions:
                self._instructions[instr.instr_id] = instr
                self._next_instr_id = max(self._next_instr_id, instr.instr_id + 1)
        nodes_path = self.data_dir / "nodes.json"
        if nodes_path.exists():
            doc = json.loads(nodes_path.read_text())
            self._nodes = doc.get("nodes", {})
            self._last_seen = {k: int(v) for k, v in doc.get("last_seen", {}).items()}

    def _read_log(self, name: str):
        path = self.data_dir / name
        if not path.exists():
            return
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    yield json.loads(line)
                except ValueError:
                    # torn tail write from a crash; everything before it is intact
                    log.warning("dropping torn log line in %s", name)
                    return

    def _append_log(self, fh, objs: list[dict]) -> None:
        if fh is None:
            return
        for obj in objs:
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")
        fh.flush()
        if self.fsync:
            os.fsync(fh.fileno())

    def _save_nodes(self) -> None:
        if not self.data_dir:
            return
        doc = {"nodes": self._nodes, "last_seen": self._last_seen}
        tmp = self.data_dir / "nodes.json.tmp"
        tmp.write_text(json.dumps(doc))
        tmp.replace(self.data_dir / "nodes.json")

    def compact(self) -> None:
        """Write a snapshot and truncate the logs (graceful shutdown path)."""
        with self._lock:
            if not self.data_dir:
                return
            snap = {
                "readings": [r.to_json() for r in self._readings.values()],
                "instructions": [i.to_json() for i in self._instructions.values()],
                "next_instr_id": self._next_instr_id,
            }
            tmp = self.data_dir / "snapshot.json.tmp"
            tmp.write_text(json.dumps(snap))
            tmp.replace(self.data_dir / "snapshot.json")
            for fh, name in ((self._readings_log, "readings.log"),
                             (self._instructions_log, "instructions.log")):
                if fh is not None:
                    fh.truncate(0)
                    fh.seek(0)
            self._save_nodes()

    def close(self, compact: bool = True) -> None:
        with self._lock:
            if compact:
                self.compact()
            for fh in (self._readings_log, self._instructions_log):
                if fh is not None:
                    fh.close()
            self._readings_log = None
            self._instructions_log = None

    # --- readings --------------------------------------------------------

    def _insert_reading(self, r: SensorReading) -> bool:
        key = r.key()
        if key in self._readings:
            return False
        self._readings[key] = r
        dev_key = (r.id.fog_id, r.id.device_id)
        latest = self._latest.get(dev_key)
        if latest is None or r.seq > latest.seq:
            self._latest[dev_key] = r
        return True

    def _device_kind(self, fog_id: str, device_id: str) -> Optional[DeviceKind]:
        node = self._nodes.get(fog_id)
        if not node:
            return None
        for d in node.get("devices", []):
            if d["id"]["device_id"] == device_id:
                return DeviceKind(d["kind"])
        return None

    def put_readings(self, batch: list[SensorReading], received_at_ms: int) -> int:
        """Insert a batch atomically; duplicates are skipped, not errors.

        Any invalid reading rejects the whole batch with nothing written.
        Returns the count of newly inserted rows.
        """
        if not batch:
            raise ValidationError("empty batch")
        with self._lock:
            for r in batch:
                kind = self._device_kind(r.id.fog_id, r.id.device_id)
                violations = validate_reading(r, kind)
                if violations:
                    raise ValidationError(
                        f"invalid reading {r.id}/{r.seq}: "
                        + ",".join(v.value for v in violations)
                    )
            inserted = [r for r in batch if self._insert_reading(r)]
            for fog_id in {r.id.fog_id for r in batch}:
                self._last_seen[fog_id] = received_at_ms
                self._nodes.setdefault(fog_id, {"fog_id": fog_id, "devices": []})
            self._append_log(self._readings_log, [r.to_json() for r in inserted])
            return len(inserted)

    def query_latest(self, fog_id: str, device_id: str) -> SensorReading:
        with self._lock:
            reading = self._latest.get((fog_id, device_id))
            if reading is None:
                raise NotFound(f"{fog_id}/{device_id}")
            return reading

    def query_stats(self, fog_id: Optional[str] = None) -> list[SensorReading]:
        """Latest reading per device, sorted by id for stable output."""
        with self._lock:
            rows = [
                r for (f, _d), r in self._latest.items()
                if fog_id is None or f == fog_id
            ]
        return sorted(rows, key=lambda r: (r.id.fog_id, r.id.device_id))

    def reading_count(self) -> int:
        with self._lock:
            return len(self._readings)

    def all_reading_keys(self) -> set[tuple[str, str, int]]:
        with self._lock:
            return set(self._readings.keys())

    def dump_readings(self) -> list[dict]:
        with self._lock:
            rows = sorted(self._readings.values(), key=lambda r: r.key())
        return [r.to_json() for r in rows]

    # --- instructions ----------------------------------------------------

    def _validate_body(self, target: Target, body: InstructionBody) -> None:
        fog_id = target_fog_id(target)
        node = self._nodes.get(fog_id)
        if node is None:
            raise ValidationError(f"unknown fog node {fog_id!r}")
        if not isinstance(target, str):
            kind = self._device_kind(target.fog_id, target.device_id)
            if kind is None:
                raise ValidationError(f"unknown device {target}")
            if isinstance(body, ActuatorCommand) and kind is not DeviceKind.BUZZER_ACTUATOR:
                raise ValidationError(f"actuator command targets {kind.value}")
            if isinstance(body, SetThreshold) and kind not in SENSOR_KINDS:
                raise ValidationError(f"threshold on non-sensor {kind.value}")
        elif isinstance(body, SetThreshold):
            raise ValidationError("threshold requires a device target")

    def append_instruction(self, target: Target, body: InstructionBody, issued_at_ms: int) -> int:
        with self._lock:
            self._validate_body(target, body)
            instr = Instruction(
                instr_id=self._next_instr_id,
                target=target,
                body=body,
                issued_at_ms=issued_at_ms,
            )
            self._instructions[instr.instr_id] = instr
            self._next_instr_id += 1
            self._append_log(self._instructions_log, [instr.to_json()])
            return instr.instr_id

    def fetch_instructions(self, fog_id: str, since: int) -> list[Instruction]:
        """All instructions with id > since addressed to this node, ascending."""
        with self._lock:
            rows = [
                i for i in self._instructions.values()
                if i.instr_id > since and target_fog_id(i.target) == fog_id
            ]
        return sorted(rows, key=lambda i: i.instr_id)

    # --- node registry ----------------------------------------------------

    def register_node(self, doc: dict[str, Any], received_at_ms: int) -> None:
        fog_id = doc.get("fog_id")
        if not fog_id:
            raise ValidationError("node doc missing fog_id")
        for d in doc.get("devices", []):
            DeviceDescriptor.from_json(d)  # raises on malformed descriptors
        with self._lock:
            self._nodes[fog_id] = doc
            # heartbeats count as liveness, same as reading pushes
            self._last_seen[fog_id] = max(self._last_seen.get(fog_id, 0), received_at_ms)
            self._save_nodes()

    def nodes(self) -> list[dict[str, Any]]:
        with self._lock:
            out = []
            for fog_id in sorted(self._nodes):
                doc = dict(self._nodes[fog_id])
                doc["last_seen_ms"] = self._last_seen.get(fog_id, 0)
                out.append(doc)
        return out


class DatastoreServer:
    """HTTP facade for a Datastore (the fog nodes' cloud endpoint)."""

    def __init__(
        self,
        store: Datastore,
        host: str = "127.0.0.1",
        port: int = DEFAULT_PORT,
        token: Optional[str] = None,
        clock=None,
    ):
        from .clock import RealClock

        self.store = store
        self.clock = clock or RealClock()
        self.http = JsonHttpServer(host, port, token=token, name="datastore")
        self.http.route("GET", r"/v1/ping", self._ping)
        self.http.route("PUT", r"/v1/readings", self._put_readings)
        self.http.route("GET", r"/v1/readings/latest", self._latest)
        self.http.route("GET", r"/v1/stats", self._stats)
        self.http.route("POST", r"/v1/instructions", self._post_instruction)
        self.http.route("GET", r"/v1/instructions", self._get_instructions)
        self.http.route("GET", r"/v1/nodes", self._get_nodes)
        self.http.route("POST", r"/v1/nodes", self._post_node)

    @property
    def port(self) -> int:
        return self.http.port

    def start(self) -> None:
        self.http.start()

    def stop(self, compact: bool = True) -> None:
        """Graceful stop compacts; compact=False models a crash."""
        self.http.stop()
        self.store.close(compact=compact)

    # --- handlers --------------------------------------------------------

    def _ping(self, match, query, body) -> tuple[int, Any]:
        return 200, {"ok": True}

    def _put_readings(self, match, query, body) -> tuple[int, Any]:
        if not body or "readings" not in body:
            raise HttpApiError(400, "body must be {'readings': [...]}")
        try:
            batch = [SensorReading.from_json(d) for d in body["readings"]]
        except (KeyError, ValueError, TypeError) as exc:
            raise HttpApiError(400, f"malformed reading: {exc}")
        try:
            accepted = self.store.put_readings(batch, self.clock.now_ms())
        except ValidationError as exc:
            raise HttpApiError(400, str(exc))
        return 200, {"accepted": accepted}

    def _latest(self, match, query, body) -> tuple[int, Any]:
        fog, device = query.get("fog"), query.get("device")
        if not fog or not device:
            raise HttpApiError(400, "fog and device query params required")
        try:
            return 200, self.store.query_latest(fog, device).to_json()
        except NotFound:
            raise HttpApiError(404, f"no readings for {fog}/{device}")

    def _stats(self, match, query, body) -> tuple[int, Any]:
        rows = self.store.query_stats(query.get("fog"))
        return 200, {"latest": [r.to_json() for r in rows]}

    def _post_instruction(self, match, query, body) -> tuple[int, Any]:
        if not body:
            raise HttpApiError(400, "missing body")
        try:
            target = target_from_json(body["target"])
            instr_body = body_from_json(body["body"])
        except (KeyError, ValueError, TypeError) as exc:
            raise HttpApiError(400, f"malformed instruction: {exc}")
        try:
            instr_id = self.store.append_instruction(target, instr_body, self.clock.now_ms())
        except ValidationError as exc:
            raise HttpApiError(400, str(exc))
        return 200, {"instr_id": instr_id}

    def _get_instructions(self, match, query, body) -> tuple[int, Any]:
        fog = query.get("fog")
        if not fog:
            raise HttpApiError(400, "fog query param required")
        since = int(query.get("since", 0))
        rows = self.store.fetch_instructions(fog, since)
        return 200, {"instructions": [i.to_json() for i in rows]}

    def _get_nodes(self, match, query, body) -> tuple[int, Any]:
        return 200, {"nodes": self.store.nodes()}

    def _post_node(self, match, query, body) -> tuple[int, Any]:
        if not body:
            raise HttpApiError(400, "missing body")
        try:
            self.store.register_node(body, self.clock.now_ms())
        except (ValidationError, ValueError) as exc:
            raise HttpApiError(400, str(exc))
        return 200, {"ok": True}
