"""Shared test infrastructure: scriptable webhook stub and stack builder."""
from __future__ import annotations

import threading
import time
from collections import deque
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from gateway.chatbot import default_rules
from gateway.dispatch import Dispatcher
from gateway.pipeline import Engine
from gateway.registry import RegistryStore
from gateway.simulator import SimTransport, SimWorld


@dataclass
class StubResponse:
    status: int = 200
    body: str = "ok"
    delay: float = 0.0


class StubWebhook:
    """Records every GET and serves scripted responses.

    ``script`` responses are consumed in order; afterwards ``default`` is
    served. ``raw_queries`` keeps the query string exactly as received so
    tests can assert on wire bytes.
    """

    def __init__(self, default: StubResponse | None = None):
        self.default = default or StubResponse()
        self.script: deque[StubResponse] = deque()
        self.raw_queries: list[str] = []
        self.paths: list[str] = []
        self._lock = threading.Lock()
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_GET(self):  # noqa: N802
                path, _, query = self.path.partition("?")
                with stub._lock:
                    stub.paths.append(path)
                    stub.raw_queries.append(query)
                    response = stub.script.popleft() if stub.script else stub.default
                if response.delay:
                    time.sleep(response.delay)
                body = response.body.encode("utf-8")
                self.send_response(response.status)
                self.send_header("Content-Type", "text/plain; charset=utf-8")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def log_message(self, fmt, *args):
                pass

        self._httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}/hook"

    @property
    def hits(self) -> int:
        with self._lock:
            return len(self.raw_queries)

    def __enter__(self) -> "StubWebhook":
        self._thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()


@dataclass
class SimStack:
    """A full gateway wired to a simulator, ready to tick."""

    world: SimWorld
    transport: SimTransport
    registry: RegistryStore
    engine: Engine

    def run_once(self) -> None:
        self.engine.tick()
        self.engine.drain()


def build_stack(
    *,
    base_account: str = "t411",
    rest_capacity: int = 100_000,
    rest_window_seconds: int = 900,
    stream_capacity: int = 3,
    parallelism: int = 1,
    poll_interval_seconds: int = 0,
    state_path=None,
    journal_path=None,
    start: bool = True,
    world: SimWorld | None = None,
    **engine_kwargs,
) -> SimStack:
    world = world or SimWorld()
    transport = SimTransport(world)
    registry = RegistryStore(journal_path)
    engine = Engine(
        transport,
        registry,
        Dispatcher(),
        default_rules(),
        base_account=base_account,
        rest_capacity=rest_capacity,
        rest_window_seconds=rest_window_seconds,
        stream_capacity=stream_capacity,
        parallelism=parallelism,
        poll_interval_seconds=poll_interval_seconds,
        state_path=state_path,
        **engine_kwargs,
    )
    if start:
        engine.start()
    return SimStack(world=world, transport=transport, registry=registry, engine=engine)


def wait_until(predicate, timeout: float = 5.0, step: float = 0.02) -> bool:
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        if predicate():
            return True
        time.sleep(step)
    return predicate()
