"""Scripted end-to-end runs on the simulator.

Script format, one command per line (``#`` comments allowed):

    REGISTER <key> <webhook-url> [owner]
    INJECT <mention|direct_message> <author> <text...>
    ADVANCE <seconds>
    EXPECT_REPLY <author> <expected reply text...>

``{botkit}`` inside a REGISTER url expands to the base URL of a local
example-webhook server started for the run. Execution stops at the first
failed EXPECT_REPLY.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .botkit import BotkitServer
from .chatbot import default_rules
from .dispatch import Dispatcher
from .domain import Channel
from .pipeline import Engine
from .registry import RegistryStore
from .simulator import SimTransport, SimWorld

DEFAULT_OWNER = "operator"


@dataclass
class ScenarioResult:
    ok: bool = True
    checks: int = 0
    log: list[str] = field(default_factory=list)

    def say(self, line: str) -> None:
        self.log.append(line)


def packaged_demo_script() -> str:
    return resources.files("gateway.data").joinpath("demo_scenario.txt").read_text(encoding="utf-8")


def run_scenario(script: str, base_account: str = "t411") -> ScenarioResult:
    """Execute a scenario script against a fresh simulated world."""
    result = ScenarioResult()
    world = SimWorld()
    transport = SimTransport(world)
    registry = RegistryStore()
    engine = Engine(
        transport,
        registry,
        Dispatcher(),
        default_rules(),
        base_account=base_account,
        poll_interval_seconds=0,
        rest_capacity=1_000_000,
        parallelism=1,
    )
    engine.start()
    consumed: set[int] = set()
    with BotkitServer() as botkit:
        for line_number, raw in enumerate(script.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            command = parts[0]
            try:
                if command == "REGISTER":
                    key, url = parts[1], parts[2].replace("{botkit}", botkit.base_url)
                    owner = parts[3] if len(parts) > 3 else DEFAULT_OWNER
                    registry.register(key, url, owner)
                    result.say(f"registered {key} -> {url}")
                elif command == "INJECT":
                    channel = Channel(parts[1])
                    author = parts[2]
                    text = raw.strip().split(None, 3)[3] if len(parts) > 3 else ""
                    message_id = world.inject(author, text, channel)
                    result.say(f"injected #{message_id} on {channel.value} from {author}: {text}")
                elif command == "ADVANCE":
                    world.advance_clock(float(parts[1]))
                    result.say(f"clock advanced {parts[1]}s")
                elif command == "EXPECT_REPLY":
                    author = parts[1]
                    expected = raw.strip().split(None, 2)[2] if len(parts) > 2 else ""
                    _quiesce(engine)
                    result.checks += 1
                    match = _find_reply(world, consumed, author, expected)
                    if match is None:
                        result.ok = False
                        result.say(f"FAIL line {line_number}: no reply to {author} matching {expected!r}")
                        _dump_outbox(world, result)
                        return result
                    consumed.add(match)
                    result.say(f"ok: reply to {author}: {expected}")
                else:
                    raise ValueError(f"unknown command {command!r}")
            except (IndexError, ValueError) as exc:
                result.ok = False
                result.say(f"FAIL line {line_number}: malformed command ({exc})")
                return result
    engine.stop()
    return result


def run_scenario_file(path: str | Path | None, base_account: str = "t411") -> ScenarioResult:
    script = packaged_demo_script() if path is None else Path(path).read_text(encoding="utf-8")
    return run_scenario(script, base_account=base_account)


def _quiesce(engine: Engine) -> None:
    # two rounds: keyed replies land within two poll intervals even when
    # the first round parked something on the retry queue
    for _ in range(2):
        engine.tick()
        engine.drain()


def _find_reply(world: SimWorld, consumed: set[int], author: str, expected: str) -> int | None:
    for posted in world.read_outbox():
        if posted.id in consumed:
            continue
        if posted.reply.recipient == author and posted.reply.text == expected:
            return posted.id
    return None


def _dump_outbox(world: SimWorld, result: ScenarioResult) -> None:
    entries = world.read_outbox()
    if not entries:
        result.say("outbox is empty")
        return
    result.say("outbox contents:")
    for posted in entries:
        result.say(f"  #{posted.id} [{posted.reply.channel.value}] -> {posted.reply.recipient}: {posted.reply.text}")
