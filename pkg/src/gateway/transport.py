"""Platform abstraction: fetch new messages, post replies, enforce budgets.

Two ingestion modes exist. Polling makes discrete requests and pages
forward with a since_id cursor; streaming holds one long-lived connection
open and receives messages as they happen. The two API families are
rate-limited independently: draining one budget never touches the other.
"""
from __future__ import annotations

import json
import logging
import queue
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from typing import Protocol

import requests

from .domain import Channel, GatewayError, InboundMessage, OutboundReply, clamp_text

logger = logging.getLogger(__name__)

DEFAULT_REST_CAPACITY = 15
DEFAULT_REST_WINDOW = 900
DEFAULT_STREAM_CAPACITY = 3
DEFAULT_STREAM_WINDOW = 900


class RateLimited(GatewayError):
    """The relevant rate budget has no headroom in the current window."""


class TransportUnavailable(GatewayError):
    """The platform endpoint could not be reached."""


class AlreadyStreaming(GatewayError):
    """A stream is already open on this endpoint; close it first."""


class RateFamily(Enum):
    REST = "rest"
    STREAMING = "streaming"


class RateBudget:
    """A counted allowance of requests per fixed time window.

    REST and streaming budgets are always distinct objects with distinct
    counters. Mutation is serialized internally; callers need no locking.
    """

    def __init__(self, family: RateFamily, capacity: int, window_seconds: int, now: datetime):
        if capacity <= 0 or window_seconds <= 0:
            raise ValueError("capacity and window_seconds must be positive")
        self.family = family
        self.capacity = capacity
        self.window_seconds = window_seconds
        self.used = 0
        self.window_start = now
        self._lock = threading.Lock()

    def tick(self, now: datetime) -> None:
        """Reset the window iff it has fully elapsed."""
        with self._lock:
            self._tick_locked(now)

    def _tick_locked(self, now: datetime) -> None:
        if (now - self.window_start).total_seconds() >= self.window_seconds:
            self.used = 0
            self.window_start = now

    def try_acquire(self, now: datetime) -> bool:
        """Consume one unit if available; False when the window is spent."""
        with self._lock:
            self._tick_locked(now)
            if self.used >= self.capacity:
                return False
            self.used += 1
            return True

    def remaining(self, now: datetime) -> int:
        with self._lock:
            self._tick_locked(now)
            return self.capacity - self.used

    def snapshot(self) -> dict:
        with self._lock:
            return {"family": self.family.value, "used": self.used, "capacity": self.capacity}


def budget_tick(budget: RateBudget, now: datetime) -> RateBudget:
    """Reset ``budget`` if its window elapsed by ``now``; returns the budget."""
    budget.tick(now)
    return budget


@dataclass(frozen=True)
class PollCursor:
    """High-water mark of processed ids on one channel; 0 means none yet."""

    channel: Channel
    since_id: int = 0

    def advanced_to(self, new_since_id: int) -> "PollCursor":
        if new_since_id < self.since_id:
            raise ValueError("since_id is nondecreasing")
        return PollCursor(self.channel, new_since_id)


class StreamHandle(Protocol):
    """Live message feed. ``read`` returns whatever arrived since last read."""

    def read(self) -> list[InboundMessage]: ...

    def close(self) -> None: ...


class Transport(Protocol):
    """What the engine needs from a platform binding.

    The in-memory simulator is the reference implementation of this
    contract; HttpTransport binds it to the generic wire schema.
    """

    def now(self) -> datetime: ...

    def poll_new(
        self, channel: Channel, cursor: PollCursor, budget: RateBudget
    ) -> tuple[list[InboundMessage], PollCursor]: ...

    def open_stream(self, budget: RateBudget) -> StreamHandle: ...

    def post_reply(self, reply: OutboundReply, budget: RateBudget) -> int: ...


def _parse_wire_timestamp(value: str) -> datetime:
    # wire format is ISO 8601 with a trailing Z; Python 3.10 fromisoformat
    # does not accept the Z suffix
    return datetime.fromisoformat(value.replace("Z", "+00:00"))


def format_wire_timestamp(value: datetime) -> str:
    return value.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def message_from_wire(obj: dict, channel: Channel) -> InboundMessage:
    """Build an InboundMessage from one wire-schema message object."""
    author = str(obj["author"]).lstrip("@")
    return InboundMessage(
        id=int(obj["id"]),
        author=author,
        text=clamp_text(str(obj["text"])),
        channel=channel,
        received_at=_parse_wire_timestamp(str(obj["created_at"])),
    )


_CHANNEL_PATHS = {
    Channel.MENTION: "/mentions",
    Channel.DIRECT_MESSAGE: "/direct_messages",
}


class HttpTransport:
    """Adapter for the generic microblog wire schema over HTTP.

    All bodies are UTF-8 JSON. HTTP 429 maps to RateLimited, connection
    failures to TransportUnavailable. One poll call is one request and
    consumes one REST-budget unit; an open stream consumes one streaming
    unit at open time and none per delivered message.
    """

    def __init__(self, base_url: str, *, timeout: float = 10.0, session: requests.Session | None = None):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self._session = session or requests.Session()
        self._stream_lock = threading.Lock()
        self._stream: _HttpStreamHandle | None = None

    def now(self) -> datetime:
        return datetime.now(timezone.utc).replace(microsecond=0)

    def poll_new(
        self, channel: Channel, cursor: PollCursor, budget: RateBudget
    ) -> tuple[list[InboundMessage], PollCursor]:
        assert budget.family is RateFamily.REST
        if not budget.try_acquire(self.now()):
            raise RateLimited(f"REST budget exhausted ({budget.capacity}/{budget.window_seconds}s)")
        url = f"{self.base_url}{_CHANNEL_PATHS[channel]}"
        try:
            resp = self._session.get(url, params={"since_id": cursor.since_id}, timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportUnavailable(str(exc)) from exc
        if resp.status_code == 429:
            raise RateLimited(f"endpoint returned 429 for {url}")
        if resp.status_code != 200:
            raise TransportUnavailable(f"{url} returned {resp.status_code}")
        messages = [message_from_wire(obj, channel) for obj in resp.json()["messages"]]
        messages.sort(key=lambda m: m.id)
        new_cursor = cursor.advanced_to(messages[-1].id) if messages else cursor
        return messages, new_cursor

    def open_stream(self, budget: RateBudget) -> "_HttpStreamHandle":
        assert budget.family is RateFamily.STREAMING
        with self._stream_lock:
            if self._stream is not None and not self._stream.closed:
                raise AlreadyStreaming(self.base_url)
            if not budget.try_acquire(self.now()):
                raise RateLimited("streaming budget exhausted")
            try:
                resp = self._session.get(
                    f"{self.base_url}/stream", stream=True, timeout=(self.timeout, None)
                )
            except requests.RequestException as exc:
                raise TransportUnavailable(str(exc)) from exc
            if resp.status_code == 429:
                raise RateLimited("endpoint returned 429 for /stream")
            if resp.status_code != 200:
                raise TransportUnavailable(f"/stream returned {resp.status_code}")
            self._stream = _HttpStreamHandle(resp)
            return self._stream

    def post_reply(self, reply: OutboundReply, budget: RateBudget) -> int:
        assert budget.family is RateFamily.REST
        if not budget.try_acquire(self.now()):
            raise RateLimited("REST budget exhausted")
        if reply.channel is Channel.MENTION:
            url = f"{self.base_url}/statuses"
            body = {"text": reply.text, "in_reply_to": reply.in_reply_to}
        else:
            url = f"{self.base_url}/direct_messages"
            body = {"recipient": reply.recipient, "text": reply.text}
        try:
            resp = self._session.post(url, json=body, timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportUnavailable(str(exc)) from exc
        if resp.status_code == 429:
            raise RateLimited(f"endpoint returned 429 for {url}")
        if resp.status_code not in (200, 201):
            raise TransportUnavailable(f"{url} returned {resp.status_code}")
        return int(resp.json()["id"])


class _HttpStreamHandle:
    """Reader side of the newline-delimited JSON stream.

    A background thread parses lines into an internal queue so ``read``
    never blocks the caller.
    """

    def __init__(self, response: requests.Response):
        self._response = response
        self._queue: queue.Queue[InboundMessage] = queue.Queue()
        self.closed = False
        self._thread = threading.Thread(target=self._pump, daemon=True)
        self._thread.start()

    def _pump(self) -> None:
        try:
            for line in self._response.iter_lines(chunk_size=1):
                if not line:
                    continue
                obj = json.loads(line.decode("utf-8"))
                channel = Channel(obj["channel"])
                self._queue.put(message_from_wire(obj, channel))
        except Exception:
            # connection closed (by close() or by the server); reader drains
            # whatever already arrived
            pass

    def read(self) -> list[InboundMessage]:
        out: list[InboundMessage] = []
        while True:
            try:
                out.append(self._queue.get_nowait())
            except queue.Empty:
                return out

    def close(self) -> None:
        self.closed = True
        self._response.close()
        self._thread.join(timeout=2.0)
