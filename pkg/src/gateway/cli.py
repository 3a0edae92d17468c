"""Command line front end.

    gateway run --config gateway.conf      # engine + control API, foreground
    gateway register w http://host/hook --owner alice
    gateway status
    gateway simulate [--script demo.txt]   # scripted run on the simulator
    gateway botkit [--port 8420]           # serve the example webhooks
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import requests

from .botkit import BotkitServer
from .chatbot import default_rules, load_rules
from .config import DEFAULT_CONTROL_PORT, load_config
from .controlapi import ControlApiServer
from .dispatch import Dispatcher
from .pipeline import Engine
from .registry import RegistryStore
from .scenario import run_scenario_file
from .simulator import SimTransport, SimWorld
from .transport import HttpTransport

DEFAULT_CONTROL_URL = f"http://127.0.0.1:{DEFAULT_CONTROL_PORT}"


def cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if config.transport == "simulated":
        transport = SimTransport(SimWorld())
    else:
        transport = HttpTransport(config.transport)
    registry = RegistryStore.load(config.journal_path)
    registry.compact()
    rules = default_rules()
    if config.rules_path is not None:
        rules = load_rules(Path(config.rules_path).read_bytes())
    engine = Engine(
        transport,
        registry,
        Dispatcher(),
        rules,
        base_account=config.base_account,
        mode=config.mode,
        poll_interval_seconds=config.poll_interval_seconds,
        rest_capacity=config.rest_capacity,
        rest_window_seconds=config.rest_window_seconds,
        stream_capacity=config.stream_capacity,
        state_path=config.resolved_state_path(),
    )
    engine.start()
    api = ControlApiServer(engine, registry, port=config.control_port)
    print(f"gateway running as @{config.base_account}; control API on {api.base_url}")
    try:
        api.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        engine.stop()
    return 0


def cmd_register(args: argparse.Namespace) -> int:
    resp = requests.post(
        f"{args.url}/admin/services",
        json={"key": args.key, "webhook": args.webhook, "owner": args.owner},
        timeout=10,
    )
    print(json.dumps(resp.json(), indent=2))
    return 0 if resp.status_code == 201 else 1


def cmd_status(args: argparse.Namespace) -> int:
    resp = requests.get(f"{args.url}/control/status", timeout=10)
    print(json.dumps(resp.json(), indent=2))
    return 0 if resp.ok else 1


def cmd_simulate(args: argparse.Namespace) -> int:
    result = run_scenario_file(args.script, base_account=args.base_account)
    for line in result.log:
        print(line)
    print(f"{result.checks} expectation(s) checked: {'PASS' if result.ok else 'FAIL'}")
    return 0 if result.ok else 1


def cmd_botkit(args: argparse.Namespace) -> int:
    server = BotkitServer(port=args.port).start()
    print(f"example webhooks on {server.base_url} (/quote /weather /echo)")
    try:
        server._thread.join()
    except KeyboardInterrupt:
        server.stop()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gateway", description="Microblog auto-responder gateway")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run the engine and control API")
    run_p.add_argument("--config", required=True, help="path to key=value config file")
    run_p.set_defaults(func=cmd_run)

    reg_p = sub.add_parser("register", help="reserve a key via the control API")
    reg_p.add_argument("key")
    reg_p.add_argument("webhook")
    reg_p.add_argument("--owner", required=True)
    reg_p.add_argument("--url", default=DEFAULT_CONTROL_URL, help="control API base URL")
    reg_p.set_defaults(func=cmd_register)

    status_p = sub.add_parser("status", help="engine status via the control API")
    status_p.add_argument("--url", default=DEFAULT_CONTROL_URL)
    status_p.set_defaults(func=cmd_status)

    sim_p = sub.add_parser("simulate", help="run a scenario script on the simulator")
    sim_p.add_argument("--script", default=None, help="script path (default: packaged demo)")
    sim_p.add_argument("--base-account", default="t411")
    sim_p.set_defaults(func=cmd_simulate)

    bot_p = sub.add_parser("botkit", help="serve the example webhooks")
    bot_p.add_argument("--port", type=int, default=8420)
    bot_p.set_defaults(func=cmd_botkit)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except requests.ConnectionError:
        print("error: control API not reachable (is `gateway run` active?)", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
