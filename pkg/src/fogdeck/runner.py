"""Scenario executor: spins up store, fleet, and control plane in one
process, drives them in lockstep off a virtual clock, injects timeline
actions, and evaluates assertions over the machine-readable event log.

Determinism contract: two runs of the same scenario produce identical
event logs. Everything ordered by virtual time; peers are canonicalized
(ephemeral ports never reach the log); actions that trigger work on
background threads block until the expected effect is visible before
the clock advances.
"""

from __future__ import annotations

import json
import logging
import socket
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

from . import wire
from .agent import AgentConfig, FogAgent
from .clock import SCENARIO_EPOCH_MS, VirtualClock
from .control import ControlPlane, ControlPlaneConfig, notifier_from_config
from .httpkit import HttpApiError, JsonClient
from .model import DeviceKind, SENSOR_KINDS
from .scenario import Scenario, build_waveform, DEFAULT_BASE
from .store import Datastore, DatastoreServer

log = logging.getLogger(__name__)

DRAIN_MAX_STEPS = 400
SETTLE_TIMEOUT_S = 2.0  # real-time budget for cross-thread effects per wait


def _free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def _wait_for(cond: Callable[[], bool], timeout_s: float = SETTLE_TIMEOUT_S) -> bool:
    deadline = time.monotonic() + timeout_s
    while time.monotonic() < deadline:
        if cond():
            return True
        time.sleep(0.002)
    return cond()


def _canon_peer(peer: str) -> str:
    # strip ephemeral addresses so event logs compare across runs
    return peer.split("@", 1)[0] if "@" in peer else "peer"


class RogueClient:
    """Test-harness wire client for intrusion scenarios."""

    def __init__(self, host: str, port: int, key: wire.PresharedKey, client_id: str):
        self.key = key
        self.client_id = client_id
        self.alive = False
        self.sock = socket.create_connection((host, port), timeout=2.0)
        self.session = wire.client_handshake(self.sock, key, client_id)
        self.alive = True
        import threading

        self._reader = threading.Thread(target=self._drain, daemon=True)
        self._reader.start()

    def _drain(self) -> None:
        # consume the node's stream so its writer never backs up
        while True:
            try:
                self.session.channel.recv()
            except (wire.WireError, ConnectionError, OSError):
                return

    def tamper(self) -> None:
        ch = self.session.channel
        with ch._send_lock:
            ch.send_counter += 1
            frame = bytearray(
                wire.encode_frame(wire.MsgType.ACK, b"{}", self.key, ch.send_counter)
            )
            frame[-1] ^= 0x01  # corrupt the tag; AEAD must reject
            ch.sock.sendall(bytes(frame))
        self.alive = False  # the node closes tampered connections

    def replay(self) -> None:
        ch = self.session.channel
        with ch._send_lock:
            ch.send_counter += 1
            frame = wire.encode_frame(wire.MsgType.ACK, b"{}", self.key, ch.send_counter)
            ch.sock.sendall(frame)
            ch.sock.sendall(frame)  # identical bytes: counter reuse
        self.alive = False

    def close(self) -> None:
        self.alive = False
        try:
            self.sock.close()
        except OSError:
            pass


@dataclass
class RunResult:
    name: str
    ok: bool
    failures: list[str]
    events: list[dict[str, Any]]
    store_rows: list[dict[str, Any]]
    counters: dict[str, dict[str, int]]
    final_panel: dict[str, Any]
    security_http: list[dict[str, Any]]
    run_dir: Optional[Path]
    duration_real_s: float

    def reading_events(self) -> list[dict[str, Any]]:
        return [e for e in self.events if e["kind"] == "reading"]


class ScenarioRunner:
    def __init__(self, scenario: Scenario, run_dir: Optional[str | Path] = None):
        self.scenario = scenario
        self.run_dir = Path(run_dir) if run_dir else Path(tempfile.mkdtemp(prefix="fogdeck-run-"))
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.clock = VirtualClock(start_ms=SCENARIO_EPOCH_MS)
        self.keys = {
            n.fog_id: wire.derive_key(str(scenario.seed), n.fog_id) for n in scenario.fleet
        }
        self.events: list[dict[str, Any]] = []
        self.failures: list[str] = []
        self.agents: dict[str, FogAgent] = {}
        self.killed: set[str] = set()
        self.rogues: dict[str, RogueClient] = {}
        self.store: Optional[Datastore] = None
        self.store_server: Optional[DatastoreServer] = None
        self.store_up = False
        self.store_port = _free_port()
        self.cp: Optional[ControlPlane] = None
        self.cp_client: Optional[JsonClient] = None
        # diff cursors for event extraction
        self._mode_len = 0
        self._cloud_len: dict[str, int] = {}
        self._agent_health: dict[tuple[str, Optional[str]], tuple[str, str]] = {}
        self._panel_health: dict[tuple[str, Optional[str]], tuple[str, str]] = {}
        self._stats_ts: dict[tuple[str, str], int] = {}
        self._buzzer_state: dict[tuple[str, str], bool] = {}
        self._episodes_len = 0
        self._alerts_len = 0
        self._seen_security: set[tuple[str, int]] = set()

    # --- setup / teardown -------------------------------------------------

    def _setup(self) -> None:
        sc = self.scenario
        store_dir = self.run_dir / "store"
        self.store = Datastore(data_dir=store_dir)
        self.store_server = DatastoreServer(
            self.store, port=self.store_port, token=sc.store_token, clock=self.clock
        )
        self.store_server.start()
        self.store_up = True
        store_url = f"http://127.0.0.1:{self.store_port}"

        for node in sc.fleet:
            agent = FogAgent(
                AgentConfig(
                    fog_id=node.fog_id,
                    store_url=store_url,
                    key=self.keys[node.fog_id],
                    listen_port=_free_port(),
                    heartbeat_s=sc.heartbeat_s,
                    instr_poll_s=sc.instr_poll_s,
                    window=sc.window,
                    rtc_drift_ppm=node.rtc_drift_ppm,
                    store_token=sc.store_token,
                ),
                clock=self.clock,
            )
            for dev in node.devices:
                desc = dev.descriptor(node.fog_id)
                if dev.kind is DeviceKind.BUZZER_ACTUATOR:
                    agent.add_buzzer(desc)
                else:
                    base = DEFAULT_BASE[dev.unit]
                    agent.add_sensor(
                        desc,
                        unit=dev.unit,
                        waveform=build_waveform(dev.waveform, base),
                        noise_stddev=dev.noise_stddev,
                        seed=dev.seed,
                    )
            agent.start()
            self.agents[node.fog_id] = agent
            self._cloud_len[node.fog_id] = 0

        notifier_cfg = dict(sc.notifier) if sc.notifier else {"kind": "file_log"}
        if notifier_cfg.get("kind", "file_log") == "file_log":
            path = Path(notifier_cfg.get("path", "alerts.log"))
            if not path.is_absolute():
                notifier_cfg["path"] = str(self.run_dir / path)
        info = {"operator": "operator", "application": "fogdeck", "area": "test field"}
        info.update(sc.info)
        self.cp = ControlPlane(
            ControlPlaneConfig(
                store_url=store_url,
                keys=self.keys,
                port=_free_port(),
                stale_after_s=sc.stale_after_s,
                info=info,
                store_token=sc.store_token,
                lockstep=True,
            ),
            notifier=notifier_from_config(notifier_cfg),
            clock=self.clock,
        )
        self.cp.start()
        self.cp_client = JsonClient(f"http://127.0.0.1:{self.cp.port}", timeout_s=5.0)

    def _teardown(self) -> None:
        for rogue in self.rogues.values():
            rogue.close()
        if self.cp is not None:
            self.cp.stop()
        for agent in self.agents.values():
            agent.stop()
        if self.store_server is not None and self.store_up:
            self.store_server.stop(compact=True)

    # --- event helpers ------------------------------------------------------

    def _log(self, kind: str, t_ms: int, **fields: Any) -> None:
        self.events.append({"t_ms": t_ms, "kind": kind, **fields})

    def _fail(self, message: str) -> None:
        self.failures.append(message)
        log.warning("scenario failure: %s", message)

    # --- the run loop ------------------------------------------------------------

    def run(self) -> RunResult:
        started = time.monotonic()
        sc = self.scenario
        try:
            self._setup()
            timeline = list(sc.timeline)
            n_steps = int(sc.duration_s * 1000) // sc.step_ms + 1
            for step in range(n_steps):
                now = self.clock.now_ms()
                elapsed_ms = now - SCENARIO_EPOCH_MS
                while timeline and float(timeline[0]["t_s"]) * 1000 <= elapsed_ms:
                    self._execute(timeline.pop(0), now)
                self._step(now)
                if sc.speed_factor > 0:
                    time.sleep(sc.step_ms / 1000.0 / sc.speed_factor)
                if step < n_steps - 1:
                    self.clock.advance(sc.step_ms)
            for entry in timeline:  # actions past the end still owe execution
                self._execute(entry, self.clock.now_ms())
            self._drain()
        except Exception as exc:  # any escape is a scenario crash
            log.exception("scenario crashed")
            self._fail(f"crash: {type(exc).__name__}: {exc}")
        result = self._finish(time.monotonic() - started)
        self._teardown()
        self._write_artifacts(result)
        return result

    def _step(self, now: int) -> None:
        for fog_id in sorted(self.agents):
            if fog_id in self.killed:
                continue
            agent = self.agents[fog_id]
            try:
                emitted = agent.tick(now)
            except Exception as exc:
                self._fail(f"agent {fog_id} crashed: {type(exc).__name__}: {exc}")
                continue
            if self.scenario.log_readings:
                for r in emitted:
                    self._log(
                        "reading",
                        now,
                        fog=fog_id,
                        device=r.id.device_id,
                        value=r.value,
                        unit=r.unit.value,
                        seq=r.seq,
                        timestamp_ms=r.timestamp_ms,
                    )
        try:
            snapshot = self.cp.refresh(now)
        except Exception as exc:
            self._fail(f"control plane crashed: {type(exc).__name__}: {exc}")
            return
        self._collect(now, snapshot)
        self._check_invariants(now)

    def _collect(self, now: int, snapshot: dict[str, Any]) -> None:
        sc = self.scenario
        mode_log = snapshot.get("mode_log", [])
        for entry in mode_log[self._mode_len:]:
            self._log("mode", entry["since_ms"], mode=entry["mode"], cause=entry["cause"])
        self._mode_len = len(mode_log)

        for fog_id, agent in self.agents.items():
            for entry in agent.cloud_log[self._cloud_len[fog_id]:]:
                self._log("cloud_mode", entry["t_ms"], fog=fog_id, mode=entry["mode"])
            self._cloud_len[fog_id] = len(agent.cloud_log)

            if fog_id not in self.killed:
                for h in agent.health_snapshot(now):
                    key = (fog_id, h.device_id)
                    state = (h.state.value, h.reason)
                    if self._agent_health.get(key) != state:
                        self._agent_health[key] = state
                        self._log(
                            "health", now, fog=fog_id, device=h.device_id,
                            state=h.state.value, reason=h.reason,
                        )
                for dev_id, buzzer in agent.bank.buzzers.items():
                    key = (fog_id, dev_id)
                    powered = bool(buzzer.powered)
                    if self._buzzer_state.get(key, False) != powered:
                        self._buzzer_state[key] = powered
                        self._log("actuator", now, fog=fog_id, device=dev_id, powered=powered)

        for row in snapshot.get("health", []):
            key = (row["fog_id"], row.get("device_id"))
            state = (row["state"], row.get("reason", ""))
            if self._panel_health.get(key) != state:
                self._panel_health[key] = state
                self._log(
                    "panel_health", now, fog=key[0], device=key[1],
                    state=row["state"], reason=row.get("reason", ""),
                )

        if sc.log_readings:
            for row in snapshot.get("stats", []):
                if row.get("timestamp_ms") is None:
                    continue
                key = (row["id"]["fog_id"], row["id"]["device_id"])
                ts = int(row["timestamp_ms"])
                if ts > self._stats_ts.get(key, -1):
                    self._stats_ts[key] = ts
                    self._log(
                        "stats_advance", now, fog=key[0], device=key[1], timestamp_ms=ts,
                        indicator=row.get("indicator"),
                    )

        episodes = snapshot.get("breaches", [])
        for ep in episodes[self._episodes_len:]:
            self._log(
                "episode_start", now, fog=ep["fog_id"], device=ep["device_id"],
                started_at_ms=ep["started_at_ms"],
            )
        self._episodes_len = len(episodes)

        alerts = snapshot.get("alerts", [])
        for alert in alerts[self._alerts_len:]:
            self._log(
                "alert", alert["dispatched_at_ms"], fog=alert["fog_id"],
                device=alert["device_id"], value=alert["value"],
                delivered=alert["delivered"],
            )
        self._alerts_len = len(alerts)

        new_events = []
        for e in snapshot.get("security", []):
            key = (e["fog_id"], int(e.get("seq", 0)))
            if key in self._seen_security:
                continue
            self._seen_security.add(key)
            new_events.append(e)
        new_events.sort(key=lambda e: (e["observed_at_ms"], e["fog_id"], e["seq"]))
        for e in new_events:
            self._log(
                "security", e["observed_at_ms"], fog=e["fog_id"], event=e["kind"],
                peer=_canon_peer(e["peer"]),
            )

    def _check_invariants(self, now: int) -> None:
        for fog_id, agent in self.agents.items():
            c = agent.counters_snapshot()
            if c["pushed"] + c["buffered"] + c["dropped"] != c["emitted"]:
                self._fail(f"t={now}: counter conservation broken on {fog_id}: {c}")
            expected = self._expected_clients(fog_id)
            if not _wait_for(lambda: len(self.agents[fog_id].active_clients()) == expected):
                actual = len(agent.active_clients())
                self._fail(
                    f"t={now}: active_clients on {fog_id}: expected {expected}, saw {actual}"
                )

    def _expected_clients(self, fog_id: str) -> int:
        if fog_id in self.killed:
            return 0
        n = sum(1 for r in self.rogues.values() if r.alive and getattr(r, "fog_id", None) == fog_id)
        link = self.cp._links.get(fog_id) if self.cp else None
        if link is not None and link.alive:
            n += 1
        return n

    # --- timeline actions ------------------------------------------------------

    def _execute(self, entry: dict[str, Any], now: int) -> None:
        action = entry["action"]
        self._log("action", now, action=action,
                  detail={k: v for k, v in entry.items() if k not in {"action", "t_s"}})
        try:
            getattr(self, f"_act_{action}")(entry, now)
        except Exception as exc:
            self._fail(f"t={now}: action {action} failed: {type(exc).__name__}: {exc}")

    def _act_fail_sensor(self, entry: dict, now: int) -> None:
        self.agents[entry["fog"]].inject_failure(entry["device"], True)

    def _act_restore_sensor(self, entry: dict, now: int) -> None:
        self.agents[entry["fog"]].inject_failure(entry["device"], False)

    def _act_kill_node(self, entry: dict, now: int) -> None:
        fog_id = entry["fog"]
        self.agents[fog_id].stop()
        self.killed.add(fog_id)
        for rogue in self.rogues.values():
            if getattr(rogue, "fog_id", None) == fog_id:
                rogue.alive = False

    def _act_restore_node(self, entry: dict, now: int) -> None:
        fog_id = entry["fog"]
        self.killed.discard(fog_id)
        self.agents[fog_id].start()

    def _act_stop_datastore(self, entry: dict, now: int) -> None:
        self.store_server.stop(compact=True)
        self.store_up = False

    def _act_crash_datastore(self, entry: dict, now: int) -> None:
        # hard stop: no snapshot compaction; recovery must replay the logs
        self.store_server.stop(compact=False)
        self.store_up = False

    def _act_restore_datastore(self, entry: dict, now: int) -> None:
        self.store = Datastore(data_dir=self.run_dir / "store")
        self.store_server = DatastoreServer(
            self.store, port=self.store_port, token=self.scenario.store_token,
            clock=self.clock,
        )
        self.store_server.start()
        self.store_up = True

    def _act_rogue_connect(self, entry: dict, now: int) -> None:
        fog_id = entry["fog"]
        rogue_id = str(entry.get("rogue_id", "rogue"))
        client_id = str(entry.get("client_id", rogue_id))
        agent = self.agents[fog_id]
        wrong_key = entry.get("key") == "wrong"
        key = wire.PresharedKey(bytes(32)) if wrong_key else self.keys[fog_id]
        before = self._event_count(agent)
        try:
            rogue = RogueClient("127.0.0.1", agent.port, key, client_id)
        except (wire.WireError, OSError):
            if not wrong_key:
                raise
            # expected: server records the auth failure, nothing registers
            self._await_event(agent, before)
            return
        if wrong_key:
            rogue.close()
            self._fail(f"t={now}: wrong-key rogue {rogue_id} was accepted")
            return
        rogue.fog_id = fog_id
        self.rogues[rogue_id] = rogue
        if client_id not in agent.config.known_clients:
            # the node flags the stranger before the clock moves again
            self._await_event(agent, before)

    def _act_rogue_disconnect(self, entry: dict, now: int) -> None:
        rogue = self.rogues[str(entry.get("rogue_id", "rogue"))]
        rogue.close()

    def _act_rogue_tamper(self, entry: dict, now: int) -> None:
        rogue = self.rogues[str(entry.get("rogue_id", "rogue"))]
        agent = self.agents[rogue.fog_id]
        before = self._event_count(agent)
        rogue.tamper()
        self._await_event(agent, before)

    def _act_rogue_replay(self, entry: dict, now: int) -> None:
        rogue = self.rogues[str(entry.get("rogue_id", "rogue"))]
        agent = self.agents[rogue.fog_id]
        before = self._event_count(agent)
        rogue.replay()
        self._await_event(agent, before)

    def _act_set_control(self, entry: dict, now: int) -> None:
        try:
            resp = self.cp_client.post(
                f"/api/devices/{entry['fog']}/{entry['device']}/control", entry["body"]
            )
            self._log("control_result", now, fog=entry["fog"], device=entry["device"],
                      result=resp)
        except HttpApiError as exc:
            if entry.get("expect_error"):
                self._log("control_result", now, fog=entry["fog"], device=entry["device"],
                          error=exc.message, status=exc.status)
            else:
                raise

    def _act_check_all(self, entry: dict, now: int) -> None:
        resp = self.cp_client.post("/api/actuators/check-all")
        self._log("check_all", now, results=resp.get("results", []))

    @staticmethod
    def _event_count(agent: FogAgent) -> int:
        return agent._event_seq

    @staticmethod
    def _await_event(agent: FogAgent, before: int) -> None:
        if not _wait_for(lambda: agent._event_seq > before):
            raise TimeoutError("expected security event never recorded")

    # --- drain and finish -------------------------------------------------------

    def _drain(self) -> None:
        """Run extra steps until agent buffers empty so table-vs-emitted
        accounting is checkable; no-op when the store is down."""
        if not self.store_up:
            return
        for _ in range(DRAIN_MAX_STEPS):
            live = [a for f, a in self.agents.items() if f not in self.killed]
            if all(a.counters_snapshot()["buffered"] == 0 for a in live):
                break
            self.clock.advance(self.scenario.step_ms)
            now = self.clock.now_ms()
            for fog_id in sorted(self.agents):
                if fog_id in self.killed:
                    continue
                try:
                    self.agents[fog_id].tick(now)
                except Exception as exc:
                    self._fail(f"drain: agent {fog_id} crashed: {exc}")
                    return
            snapshot = self.cp.refresh(now)
            self._collect(now, snapshot)

    def _finish(self, duration_real_s: float) -> RunResult:
        counters = {f: a.counters_snapshot() for f, a in self.agents.items()}
        store_rows = self.store.dump_readings() if self.store else []
        final_panel: dict[str, Any] = {}
        security_http: list[dict[str, Any]] = []
        if self.cp_client is not None:
            try:
                final_panel = self.cp_client.get("/api/panel")
                security_http = self.cp_client.get("/api/security").get("events", [])
            except Exception as exc:
                self._fail(f"panel API unavailable at finish: {exc}")
        self._evaluate_assertions(counters, store_rows, final_panel, security_http)
        return RunResult(
            name=self.scenario.name,
            ok=not self.failures,
            failures=list(self.failures),
            events=list(self.events),
            store_rows=store_rows,
            counters=counters,
            final_panel=final_panel,
            security_http=security_http,
            run_dir=self.run_dir,
            duration_real_s=duration_real_s,
        )

    def _write_artifacts(self, result: RunResult) -> None:
        with open(self.run_dir / "events.jsonl", "w") as fh:
            for e in result.events:
                fh.write(json.dumps(e, separators=(",", ":")) + "\n")
        summary = {
            "name": result.name,
            "ok": result.ok,
            "failures": result.failures,
            "counters": result.counters,
            "store_row_count": len(result.store_rows),
            "duration_real_s": round(result.duration_real_s, 3),
        }
        (self.run_dir / "result.json").write_text(json.dumps(summary, indent=2))

    # --- assertions ----------------------------------------------------------------

    def _evaluate_assertions(self, counters, store_rows, final_panel, security_http) -> None:
        for a in self.scenario.assertions:
            try:
                err = self._assert_one(a, counters, store_rows, final_panel, security_http)
            except Exception as exc:
                err = f"assertion {a.get('kind')} errored: {type(exc).__name__}: {exc}"
            if err:
                self._fail(f"assert[{a.get('kind')}]: {err}")

    def _events_of(self, kind: str, **match: Any) -> list[dict[str, Any]]:
        out = []
        for e in self.events:
            if e["kind"] != kind:
                continue
            if all(e.get(k) == v for k, v in match.items()):
                out.append(e)
        return out

    def _assert_one(self, a, counters, store_rows, final_panel, security_http) -> Optional[str]:
        kind = a["kind"]
        epoch = SCENARIO_EPOCH_MS

        if kind == "no_crash":
            crashes = [f for f in self.failures if "crash" in f]
            return f"crashes recorded: {crashes}" if crashes else None

        if kind == "mode_sequence":
            seen = [e["mode"] for e in self._events_of("mode")]
            expect = list(a["expect"])
            return None if seen == expect else f"mode log {seen} != {expect}"

        if kind in ("offline_within", "online_within"):
            want = "offline" if kind == "offline_within" else "online"
            after = epoch + int(float(a["after_s"]) * 1000)
            budget = int(float(a["budget_s"]) * 1000)
            hits = [e for e in self._events_of("mode", mode=want) if e["t_ms"] >= after]
            if not hits:
                return f"no {want} transition at/after t={a['after_s']}s"
            t = hits[0]["t_ms"]
            if t > after + budget:
                return f"{want} at +{(t - after) / 1000}s, budget {a['budget_s']}s"
            return None

        if kind == "stats_fresh_during":
            lo = epoch + int(float(a["from_s"]) * 1000)
            hi = epoch + int(float(a["to_s"]) * 1000)
            max_gap = int(float(a["max_gap_s"]) * 1000)
            devices = a.get("devices")
            if devices is None:
                devices = [
                    [n.fog_id, d.device_id]
                    for n in self.scenario.fleet
                    for d in n.devices
                    if d.kind in SENSOR_KINDS
                ]
            for fog_id, device_id in devices:
                ts = sorted(
                    e["t_ms"]
                    for e in self._events_of("stats_advance", fog=fog_id, device=device_id)
                    if lo <= e["t_ms"] <= hi
                )
                edges = [lo] + ts + [hi]
                worst = max(b - a2 for a2, b in zip(edges, edges[1:]))
                if worst > max_gap:
                    return (
                        f"{fog_id}/{device_id}: stats gap {worst / 1000}s "
                        f"in [{a['from_s']}, {a['to_s']}]s exceeds {a['max_gap_s']}s"
                    )
            return None

        if kind == "device_state_within":
            state = a["state"]
            after = epoch + int(float(a["after_s"]) * 1000)
            budget = int(float(a["budget_s"]) * 1000)
            source = "panel_health" if state == "unreachable" else "health"
            hits = [
                e
                for e in self._events_of(source, fog=a["fog"], state=state)
                if (e.get("device") == a.get("device")) and e["t_ms"] >= after
            ]
            if not hits:
                return f"{a['fog']}/{a.get('device')} never {state} after t={a['after_s']}s"
            t = hits[0]["t_ms"]
            if t > after + budget:
                return f"{state} at +{(t - after) / 1000}s, budget {a['budget_s']}s"
            return None

        if kind == "breach_episodes":
            eps = final_panel.get("breaches", [])
            eps = [
                e
                for e in eps
                if (a.get("fog") is None or e["fog_id"] == a["fog"])
                and (a.get("device") is None or e["device_id"] == a["device"])
            ]
            if len(eps) != int(a["expect"]):
                return f"{len(eps)} episodes, expected {a['expect']}"
            return None

        if kind == "alerts":
            rows = final_panel.get("alerts", [])
            rows = [
                r
                for r in rows
                if (a.get("fog") is None or r["fog_id"] == a["fog"])
                and (a.get("device") is None or r["device_id"] == a["device"])
            ]
            if len(rows) != int(a["expect"]):
                return f"{len(rows)} alerts, expected {a['expect']}"
            if a.get("delivered") is not None and any(
                r["delivered"] != a["delivered"] for r in rows
            ):
                return "alert delivery flags off"
            return None

        if kind == "buzzer_on_at_edges":
            fog_id = a["fog"]
            starts = [e for e in self._events_of("episode_start", fog=fog_id)]
            if a.get("device"):
                starts = [e for e in starts if e["device"] == a["device"]]
            if not starts:
                return "no breach episodes recorded, nothing to check"
            transitions = self._events_of("actuator", fog=fog_id)
            for s in starts:
                powered = False
                for tr in transitions:
                    if tr["t_ms"] <= s["t_ms"]:
                        powered = tr["powered"]
                if not powered:
                    return f"buzzer off at episode edge t={s['t_ms'] - epoch}ms"
            return None

        if kind == "security_sequence":
            fog_id = a["fog"]
            agent = self.agents[fog_id]
            kinds = [ev.kind.value for _seq, ev in agent.security_events]
            expect = list(a["expect"])
            if kinds != expect:
                return f"node event kinds {kinds} != {expect}"
            via_http = [e["kind"] for e in security_http if e["fog_id"] == fog_id]
            missing = [k for k in expect if k not in via_http]
            if missing:
                return f"panel security feed missing {missing}"
            return None

        if kind == "drops_zero":
            bad = {f: c["dropped"] for f, c in counters.items() if c["dropped"]}
            return f"dropped readings: {bad}" if bad else None

        if kind == "store_rows_match":
            emitted = sum(c["emitted"] for c in counters.values())
            dropped = sum(c["dropped"] for c in counters.values())
            buffered = sum(c["buffered"] for c in counters.values())
            if buffered:
                return f"{buffered} readings still buffered after drain"
            if len(store_rows) != emitted - dropped:
                return f"store has {len(store_rows)} rows, expected {emitted - dropped}"
            return None

        if kind == "final_descriptor":
            agent = self.agents[a["fog"]]
            desc = agent.descriptors.get(a["device"])
            if desc is None:
                return f"unknown device {a['fog']}/{a['device']}"
            doc = desc.to_json()
            for key, want in a["expect"].items():
                if doc.get(key) != want:
                    return f"{key}={doc.get(key)!r}, expected {want!r}"
            return None

        if kind == "check_all_results":
            runs = self._events_of("check_all")
            if not runs:
                return "check_all never ran"
            results = runs[-1]["results"]
            ok = sum(1 for r in results if r.get("ok"))
            failed = len(results) - ok
            if ok != int(a.get("expect_ok", ok)):
                return f"{ok} ok results, expected {a['expect_ok']}"
            if failed != int(a.get("expect_failed", failed)):
                return f"{failed} failed results, expected {a['expect_failed']}"
            return None

        if kind == "active_clients_zero_failures":
            bad = [f for f in self.failures if "active_clients" in f]
            return f"count mismatches: {bad}" if bad else None

        return f"unhandled assertion kind {kind!r}"


def run_scenario(scenario: Scenario, run_dir: Optional[str | Path] = None) -> RunResult:
    return ScenarioRunner(scenario, run_dir=run_dir).run()
