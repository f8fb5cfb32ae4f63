"""Scenario documents: declarative fleet + timeline + assertions.

A scenario is a YAML file describing the fleet to spin up, a timeline
of actions at virtual times, and post-run assertions. Validation is
strict: unknown actions, unknown assertion kinds, or references to
devices that do not exist all fail before anything starts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from . import edgesim
from .model import (
    DeviceDescriptor,
    DeviceId,
    DeviceKind,
    Location,
    Unit,
    WorkingRange,
)


class ScenarioError(ValueError):
    """Invalid scenario document (exit code 2 territory)."""


ACTIONS = frozenset(
    {
        "fail_sensor",
        "restore_sensor",
        "kill_node",
        "restore_node",
        "stop_datastore",
        "crash_datastore",
        "restore_datastore",
        "rogue_connect",
        "rogue_disconnect",
        "rogue_tamper",
        "rogue_replay",
        "set_control",
        "check_all",
    }
)

ASSERTIONS = frozenset(
    {
        "no_crash",
        "mode_sequence",
        "offline_within",
        "online_within",
        "stats_fresh_during",
        "device_state_within",
        "breach_episodes",
        "alerts",
        "buzzer_on_at_edges",
        "security_sequence",
        "drops_zero",
        "store_rows_match",
        "final_descriptor",
        "check_all_results",
        "active_clients_zero_failures",
    }
)


@dataclass(frozen=True)
class DeviceSpec:
    device_id: str
    kind: DeviceKind
    unit: Optional[Unit] = None  # sensors only
    waveform: Optional[dict[str, Any]] = None
    noise_stddev: float = 0.0
    threshold: Optional[WorkingRange] = None
    push_period_s: float = 5.0
    email_alerts: bool = False
    location: Location = field(default_factory=Location)
    seed: int = 0

    def descriptor(self, fog_id: str) -> DeviceDescriptor:
        return DeviceDescriptor(
            id=DeviceId(fog_id=fog_id, device_id=self.device_id),
            kind=self.kind,
            location=self.location,
            enabled=True,
            threshold=self.threshold,
            push_period_s=self.push_period_s,
            email_alerts=self.email_alerts,
        )


@dataclass(frozen=True)
class NodeSpec:
    fog_id: str
    devices: tuple[DeviceSpec, ...]
    rtc_drift_ppm: float = 0.0


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    duration_s: float
    step_ms: int
    speed_factor: float
    log_readings: bool
    fleet: tuple[NodeSpec, ...]
    timeline: tuple[dict[str, Any], ...]
    assertions: tuple[dict[str, Any], ...]
    info: dict[str, Any]
    notifier: Optional[dict[str, Any]]
    heartbeat_s: float = 2.0
    instr_poll_s: float = 1.0
    window: int = 1
    stale_after_s: float = 5.0
    store_token: Optional[str] = None

    def node(self, fog_id: str) -> NodeSpec:
        for n in self.fleet:
            if n.fog_id == fog_id:
                return n
        raise ScenarioError(f"unknown fog node {fog_id!r}")

    def device(self, fog_id: str, device_id: str) -> DeviceSpec:
        for d in self.node(fog_id).devices:
            if d.device_id == device_id:
                return d
        raise ScenarioError(f"unknown device {fog_id}/{device_id}")


def build_waveform(cfg: Optional[dict[str, Any]], default_base: float):
    if not cfg:
        return edgesim.Constant(base=default_base)
    kind = cfg.get("kind", "constant")
    if kind == "constant":
        return edgesim.Constant(base=float(cfg.get("base", default_base)))
    if kind == "sine":
        return edgesim.Sine(
            base=float(cfg.get("base", default_base)),
            amplitude=float(cfg.get("amplitude", 1.0)),
            period_s=float(cfg.get("period_s", 60.0)),
        )
    if kind == "random_walk":
        return edgesim.RandomWalk(
            base=float(cfg.get("base", default_base)),
            step=float(cfg.get("step", 0.5)),
        )
    if kind == "piecewise":
        # [[t_s, value], ...] step function of scenario time, for scripted
        # threshold crossings
        points = [(float(t), float(v)) for t, v in cfg["points"]]
        return edgesim.Piecewise(points=tuple(points))
    raise ScenarioError(f"unknown waveform kind {kind!r}")


DEFAULT_BASE = {Unit.CELSIUS: 25.0, Unit.PERCENT_RH: 55.0}


def _device_seed(base_seed: int, node_index: int, device_index: int) -> int:
    # stable, collision-free for desk-scale fleets
    return (base_seed * 1_000_003 + node_index * 8191 + device_index) & 0xFFFFFFFF


def generate_fleet(
    n_nodes: int,
    devices_per_node: int,
    base_seed: int,
    defaults: Optional[dict[str, Any]] = None,
) -> tuple[NodeSpec, ...]:
    """Deterministic fleet: same (n, m, seed) always yields the same specs.

    Device i of each node: every fourth device is a buzzer, the rest
    alternate temperature / humidity. A 4-device node therefore matches
    the reference prototype shape (2 temperature, 1 humidity, 1 buzzer).
    """
    if n_nodes < 1 or devices_per_node < 1:
        raise ScenarioError("fleet needs at least 1 node with 1 device")
    defaults = defaults or {}
    push_period_s = float(defaults.get("push_period_s", 5.0))
    noise = float(defaults.get("noise_stddev", 0.2))
    nodes = []
    for j in range(n_nodes):
        devices = []
        for i in range(devices_per_node):
            if i % 4 == 3:
                devices.append(
                    DeviceSpec(
                        device_id=f"dev-{i}",
                        kind=DeviceKind.BUZZER_ACTUATOR,
                        push_period_s=push_period_s,
                    )
                )
                continue
            unit = Unit.CELSIUS if i % 2 == 0 else Unit.PERCENT_RH
            base = DEFAULT_BASE[unit]
            devices.append(
                DeviceSpec(
                    device_id=f"dev-{i}",
                    kind=DeviceKind.TEMPERATURE_HUMIDITY_SENSOR,
                    unit=unit,
                    waveform={
                        "kind": "sine",
                        "base": base,
                        "amplitude": 3.0,
                        "period_s": 120.0,
                    },
                    noise_stddev=noise,
                    push_period_s=push_period_s,
                    location=Location(label=f"rack {j} slot {i}"),
                    seed=_device_seed(base_seed, j, i),
                )
            )
        nodes.append(NodeSpec(fog_id=f"fog-{j}", devices=tuple(devices)))
    return tuple(nodes)


def _parse_device(d: dict[str, Any], fog_index: int, dev_index: int, base_seed: int) -> DeviceSpec:
    try:
        kind = DeviceKind(d.get("kind", "temperature_humidity_sensor"))
    except ValueError as exc:
        raise ScenarioError(str(exc))
    unit = None
    if kind is not DeviceKind.BUZZER_ACTUATOR:
        try:
            unit = Unit(d.get("unit", "celsius"))
        except ValueError as exc:
            raise ScenarioError(str(exc))
    threshold = None
    if d.get("threshold"):
        threshold = WorkingRange.from_json(d["threshold"])
    loc = Location.from_json(d.get("location") or {})
    return DeviceSpec(
        device_id=str(d["device_id"]),
        kind=kind,
        unit=unit,
        waveform=d.get("waveform"),
        noise_stddev=float(d.get("noise_stddev", 0.0)),
        threshold=threshold,
        push_period_s=float(d.get("push_period_s", 5.0)),
        email_alerts=bool(d.get("email_alerts", False)),
        location=loc,
        seed=int(d.get("seed", _device_seed(base_seed, fog_index, dev_index))),
    )


def parse_scenario(doc: dict[str, Any], name: str = "scenario") -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a mapping")
    seed = int(doc.get("seed", 1))
    duration_s = float(doc.get("duration_s", 10))
    if duration_s <= 0:
        raise ScenarioError("duration_s must be positive")
    step_ms = int(doc.get("step_ms", 250))
    if step_ms <= 0:
        raise ScenarioError("step_ms must be positive")

    fleet_cfg = doc.get("fleet") or {}
    if "explicit" in fleet_cfg:
        nodes = []
        for j, n in enumerate(fleet_cfg["explicit"]):
            devices = tuple(
                _parse_device(d, j, i, seed) for i, d in enumerate(n.get("devices", []))
            )
            if not devices:
                raise ScenarioError(f"node {n.get('fog_id')!r} has no devices")
            nodes.append(
                NodeSpec(
                    fog_id=str(n["fog_id"]),
                    devices=devices,
                    rtc_drift_ppm=float(n.get("rtc_drift_ppm", 0.0)),
                )
            )
        fleet = tuple(nodes)
    else:
        fleet = generate_fleet(
            int(fleet_cfg.get("nodes", 1)),
            int(fleet_cfg.get("devices_per_node", 4)),
            seed,
            fleet_cfg.get("defaults"),
        )
    ids = {(n.fog_id, d.device_id) for n in fleet for d in n.devices}
    fogs = {n.fog_id for n in fleet}
    if len(fogs) != len(fleet):
        raise ScenarioError("duplicate fog_id in fleet")

    timeline = []
    rogues: set[str] = set()
    for entry in doc.get("timeline") or []:
        action = entry.get("action")
        if action not in ACTIONS:
            raise ScenarioError(f"unknown timeline action {action!r}")
        t_s = entry.get("t_s")
        if t_s is None or float(t_s) < 0:
            raise ScenarioError(f"timeline entry missing t_s: {entry}")
        fog = entry.get("fog")
        dev = entry.get("device")
        if action in {"fail_sensor", "restore_sensor", "set_control"}:
            if (fog, dev) not in ids:
                raise ScenarioError(f"{action} references unknown device {fog}/{dev}")
        if action in {"kill_node", "restore_node", "rogue_connect"} and fog not in fogs:
            raise ScenarioError(f"{action} references unknown node {fog!r}")
        if action == "rogue_connect":
            rogues.add(str(entry.get("rogue_id", "rogue")))
        if action in {"rogue_disconnect", "rogue_tamper", "rogue_replay"}:
            if str(entry.get("rogue_id", "rogue")) not in rogues:
                raise ScenarioError(f"{action} before rogue_connect: {entry}")
        if action == "set_control" and not isinstance(entry.get("body"), dict):
            raise ScenarioError(f"set_control needs a body mapping: {entry}")
        timeline.append(dict(entry))
    timeline.sort(key=lambda e: (float(e["t_s"]), str(e.get("action"))))

    assertions = []
    for a in doc.get("assertions") or []:
        if a.get("kind") not in ASSERTIONS:
            raise ScenarioError(f"unknown assertion kind {a.get('kind')!r}")
        assertions.append(dict(a))

    return Scenario(
        name=str(doc.get("name", name)),
        seed=seed,
        duration_s=duration_s,
        step_ms=step_ms,
        speed_factor=float(doc.get("speed_factor", 0)),
        log_readings=bool(doc.get("log_readings", True)),
        fleet=fleet,
        timeline=tuple(timeline),
        assertions=tuple(assertions),
        info=dict(doc.get("info") or {}),
        notifier=doc.get("notifier"),
        heartbeat_s=float(doc.get("heartbeat_s", 2.0)),
        instr_poll_s=float(doc.get("instr_poll_s", 1.0)),
        window=int(doc.get("window", 1)),
        stale_after_s=float(doc.get("stale_after_s", 5.0)),
        store_token=doc.get("store_token"),
    )


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc}")
    except yaml.YAMLError as exc:
        raise ScenarioError(f"bad YAML in {path}: {exc}")
    return parse_scenario(doc or {}, name=path.stem)
