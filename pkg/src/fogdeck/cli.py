"""Operator entry point.

Subcommands:
  run    execute a scenario file against the virtual clock, exit 0/1/2
  fleet  spawn a generated fleet (store + N nodes + control plane) live
  panel  fetch and print the control plane's panel state
  store  run a standalone datastore
  node   run a standalone fog agent from a config file
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import signal
import sys
import threading
from pathlib import Path
from typing import Any, Optional

import yaml

from . import wire
from .agent import AgentConfig, FogAgent
from .clock import RealClock, Ticker
from .control import ControlPlane, ControlPlaneConfig, notifier_from_config
from .httpkit import JsonClient
from .model import DeviceKind
from .runner import run_scenario
from .scenario import (
    DEFAULT_BASE,
    Scenario,
    ScenarioError,
    build_waveform,
    generate_fleet,
    load_scenario,
)
from .store import DEFAULT_PORT as STORE_PORT
from .store import Datastore, DatastoreServer

log = logging.getLogger(__name__)


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fogdeck", description=__doc__.strip().splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a scenario file")
    run.add_argument("scenario", help="path to a scenario YAML file")
    run.add_argument("--speed", type=float, default=None,
                     help="real-time pacing factor; 0 or omitted runs flat out")
    run.add_argument("--out", default=None, help="directory for event log and result")

    fleet = sub.add_parser("fleet", help="spawn a live generated fleet")
    fleet.add_argument("--nodes", type=int, required=True)
    fleet.add_argument("--devices", type=int, required=True)
    fleet.add_argument("--seed", type=int, default=1)
    fleet.add_argument("--duration", type=float, default=0.0,
                       help="seconds to run; 0 runs until interrupted")
    fleet.add_argument("--store-port", type=int, default=STORE_PORT)
    fleet.add_argument("--panel-port", type=int, default=7900)
    fleet.add_argument("--data-dir", default=None)
    fleet.add_argument("--static-dir", default=None,
                       help="serve a built web panel from this directory")

    panel = sub.add_parser("panel", help="print the operator panel")
    panel.add_argument("--endpoint", required=True, help="control plane base URL")
    panel.add_argument("--json", action="store_true", dest="as_json")

    store = sub.add_parser("store", help="run a standalone datastore")
    store.add_argument("--port", type=int, default=STORE_PORT)
    store.add_argument("--data-dir", default="fogdeck-data")
    store.add_argument("--token", default=None)

    node = sub.add_parser("node", help="run a standalone fog agent")
    node.add_argument("--config", required=True, help="node config YAML")
    return p


# --- run -----------------------------------------------------------------


def _cmd_run(args: argparse.Namespace) -> int:
    try:
        scenario = load_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return 2
    if args.speed is not None:
        scenario = dataclasses.replace(scenario, speed_factor=args.speed)
    result = run_scenario(scenario, run_dir=args.out)
    print(f"scenario {result.name}: {'PASS' if result.ok else 'FAIL'} "
          f"({len(result.events)} events, {result.duration_real_s:.1f}s real, "
          f"log in {result.run_dir})")
    for failure in result.failures:
        print(f"  FAIL {failure}", file=sys.stderr)
    return 0 if result.ok else 1


# --- fleet ---------------------------------------------------------------


def _cmd_fleet(args: argparse.Namespace) -> int:
    if args.nodes < 1 or args.devices < 1:
        print("fleet needs --nodes >= 1 and --devices >= 1", file=sys.stderr)
        return 2
    if wire.DEFAULT_PORT + args.nodes > 65535:
        print("port range exhausted for that many nodes", file=sys.stderr)
        return 2
    clock = RealClock()
    fleet = generate_fleet(args.nodes, args.devices, args.seed)
    keys = {n.fog_id: wire.derive_key(str(args.seed), n.fog_id) for n in fleet}

    data_dir = Path(args.data_dir) if args.data_dir else None
    datastore = Datastore(data_dir=data_dir)
    store_server = DatastoreServer(datastore, port=args.store_port, clock=clock)
    store_server.start()
    store_url = f"http://127.0.0.1:{args.store_port}"

    agents: list[FogAgent] = []
    tickers: list[Ticker] = []
    for index, node in enumerate(fleet):
        agent = FogAgent(
            AgentConfig(
                fog_id=node.fog_id,
                store_url=store_url,
                key=keys[node.fog_id],
                listen_port=wire.DEFAULT_PORT + index,
            ),
            clock=clock,
        )
        for dev in node.devices:
            desc = dev.descriptor(node.fog_id)
            if dev.kind is DeviceKind.BUZZER_ACTUATOR:
                agent.add_buzzer(desc)
            else:
                agent.add_sensor(
                    desc,
                    unit=dev.unit,
                    waveform=build_waveform(dev.waveform, DEFAULT_BASE[dev.unit]),
                    noise_stddev=dev.noise_stddev,
                    seed=dev.seed,
                )
        agent.start()
        agents.append(agent)
        ticker = Ticker(clock, 0.25, agent.tick, name=f"tick-{node.fog_id}")
        ticker.start()
        tickers.append(ticker)

    cp = ControlPlane(
        ControlPlaneConfig(store_url=store_url, keys=keys, port=args.panel_port,
                           static_dir=args.static_dir),
        notifier=notifier_from_config(None),
        clock=clock,
    )
    cp.start()
    refresh = Ticker(clock, 1.0, lambda _now: cp.refresh(), name="cp-refresh")
    refresh.start()

    total_devices = sum(len(n.devices) for n in fleet)
    print(f"fleet up: {len(fleet)} nodes, {total_devices} devices, "
          f"store :{args.store_port}, panel http://127.0.0.1:{cp.port}/")
    stop = threading.Event()
    signal.signal(signal.SIGINT, lambda *_: stop.set())
    signal.signal(signal.SIGTERM, lambda *_: stop.set())
    stop.wait(timeout=args.duration if args.duration > 0 else None)

    refresh.stop()
    cp.stop()
    for ticker in tickers:
        ticker.stop()
    for agent in agents:
        agent.stop()
    store_server.stop(compact=True)
    return 0


# --- panel ----------------------------------------------------------------


def _fmt_ts(ms: Optional[int]) -> str:
    if ms is None:
        return "-"
    import datetime

    return datetime.datetime.fromtimestamp(ms / 1000, tz=datetime.timezone.utc).strftime(
        "%Y-%m-%d %H:%M:%S"
    )


def _cmd_panel(args: argparse.Namespace) -> int:
    client = JsonClient(args.endpoint, timeout_s=5.0)
    try:
        panel = client.get("/api/panel")
    except Exception as exc:  # connection refused, HTTP error: all exit 1
        print(f"cannot reach control plane at {args.endpoint}: {exc}", file=sys.stderr)
        return 1
    if args.as_json:
        print(json.dumps(panel, indent=2))
        return 0

    net = panel.get("network", {})
    print(f"network: {net.get('mode', '?')} (since {_fmt_ts(net.get('since_ms'))}, "
          f"cause: {net.get('cause', '?')})")
    info = panel.get("info", {})
    if info:
        meta = ", ".join(f"{k}={v}" for k, v in sorted(info.items()) if k != "refreshed_at_ms")
        print(f"info: {meta}")
    print()
    rows = panel.get("stats", [])
    print(f"{'device':24} {'location':20} {'value':>10} {'unit':10} "
          f"{'timestamp':19} {'ind':5}")
    for r in rows:
        dev = f"{r['id']['fog_id']}/{r['id']['device_id']}"
        value = "-" if r.get("value") is None else f"{r['value']:.2f}"
        loc = r.get("location") or {}
        label = (loc.get("label", "") if isinstance(loc, dict) else str(loc)) or "-"
        print(f"{dev:24} {label:20} {value:>10} {r.get('unit') or '':10} "
              f"{_fmt_ts(r.get('timestamp_ms')):19} {r.get('indicator', '?'):5}")
    print()
    unhealthy = [h for h in panel.get("health", []) if h["state"] != "healthy"]
    print(f"health: {len(panel.get('health', []))} rows, {len(unhealthy)} not healthy")
    for h in unhealthy:
        where = h["fog_id"] if h.get("device_id") is None else f"{h['fog_id']}/{h['device_id']}"
        print(f"  {where}: {h['state']} ({h.get('reason', '')})")
    events = panel.get("security", [])
    if events:
        print(f"security events: {len(events)} (latest: {events[-1]['kind']} on "
              f"{events[-1]['fog_id']})")
    return 0


# --- store -----------------------------------------------------------------


def _cmd_store(args: argparse.Namespace) -> int:
    datastore = Datastore(data_dir=Path(args.data_dir))
    server = DatastoreServer(datastore, port=args.port, token=args.token)
    server.start()
    print(f"datastore on http://127.0.0.1:{args.port} (data in {args.data_dir})")
    stop = threading.Event()
    signal.signal(signal.SIGINT, lambda *_: stop.set())
    signal.signal(signal.SIGTERM, lambda *_: stop.set())
    stop.wait()
    server.stop(compact=True)
    return 0


# --- node ----------------------------------------------------------------------


def _load_node_config(path: str) -> dict[str, Any]:
    doc = yaml.safe_load(Path(path).read_text())
    if not isinstance(doc, dict) or "fog_id" not in doc:
        raise ValueError("node config must be a mapping with a fog_id")
    return doc


def _cmd_node(args: argparse.Namespace) -> int:
    try:
        cfg = _load_node_config(args.config)
    except (OSError, ValueError, yaml.YAMLError) as exc:
        print(f"bad node config: {exc}", file=sys.stderr)
        return 2
    fog_id = str(cfg["fog_id"])
    keys = wire.keys_from_env()
    if fog_id in keys:
        key = keys[fog_id]
    elif "key_hex" in cfg:
        key = wire.PresharedKey(bytes.fromhex(cfg["key_hex"]))
    else:
        print(f"no key for {fog_id}: set {wire.KEY_FILE_ENV} or key_hex", file=sys.stderr)
        return 2

    from .scenario import _parse_device  # shared device schema

    clock = RealClock()
    agent = FogAgent(
        AgentConfig(
            fog_id=fog_id,
            store_url=str(cfg.get("store_url", f"http://127.0.0.1:{STORE_PORT}")),
            key=key,
            listen_host=str(cfg.get("listen_host", "127.0.0.1")),
            listen_port=int(cfg.get("listen_port", wire.DEFAULT_PORT)),
            heartbeat_s=float(cfg.get("heartbeat_s", 2.0)),
            instr_poll_s=float(cfg.get("instr_poll_s", 1.0)),
            window=int(cfg.get("window", 1)),
            rtc_drift_ppm=float(cfg.get("rtc_drift_ppm", 0.0)),
            store_token=cfg.get("store_token"),
        ),
        clock=clock,
    )
    for index, raw in enumerate(cfg.get("devices", [])):
        dev = _parse_device(raw, 0, index, int(cfg.get("seed", 1)))
        desc = dev.descriptor(fog_id)
        if dev.kind is DeviceKind.BUZZER_ACTUATOR:
            agent.add_buzzer(desc)
        else:
            agent.add_sensor(
                desc,
                unit=dev.unit,
                waveform=build_waveform(dev.waveform, DEFAULT_BASE[dev.unit]),
                noise_stddev=dev.noise_stddev,
                seed=dev.seed,
            )
    agent.start()
    ticker = Ticker(clock, float(cfg.get("tick_s", 0.25)), agent.tick, name=f"tick-{fog_id}")
    ticker.start()
    print(f"fog node {fog_id} up on :{agent.port}, pushing to {agent.config.store_url}")
    stop = threading.Event()
    signal.signal(signal.SIGINT, lambda *_: stop.set())
    signal.signal(signal.SIGTERM, lambda *_: stop.set())
    stop.wait()
    ticker.stop()
    agent.stop()
    return 0


def main(argv: Optional[list[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    handler = {
        "run": _cmd_run,
        "fleet": _cmd_fleet,
        "panel": _cmd_panel,
        "store": _cmd_store,
        "node": _cmd_node,
    }[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
