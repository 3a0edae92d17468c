"""In-memory microblog world: the reference implementation of the transport
contract.

Everything is deterministic: ids come from a single monotone counter shared
by all logs, and time only moves when a test calls ``advance_clock``. The
whole gateway can therefore run end to end with no network and no wall
clock.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone

from .domain import Channel, InboundMessage, OutboundReply, clamp_text
from .transport import (
    AlreadyStreaming,
    PollCursor,
    RateBudget,
    RateFamily,
    RateLimited,
    TransportUnavailable,
)

SIM_EPOCH = datetime(2015, 9, 1, 12, 0, 0, tzinfo=timezone.utc)


@dataclass(frozen=True)
class PostedReply:
    """One outbox entry: the reply as posted plus its assigned id."""

    id: int
    reply: OutboundReply
    posted_at: datetime


class SimWorld:
    """Scriptable microblog: inboxes per channel, one outbox, virtual clock.

    Logs are append-only and ids are unique and strictly increasing across
    all of them (one shared id space). Mutations are serialized internally
    so tests may inject while the engine polls from another thread.
    """

    def __init__(self, start: datetime = SIM_EPOCH):
        self._lock = threading.RLock()
        self._next_id = 1
        self._logs: dict[Channel, list[InboundMessage]] = {
            Channel.MENTION: [],
            Channel.DIRECT_MESSAGE: [],
        }
        self._outbox: list[PostedReply] = []
        self._clock = start
        self.available = True

    @property
    def clock(self) -> datetime:
        with self._lock:
            return self._clock

    def inject(self, author: str, text: str, channel: Channel) -> int:
        """Append a message addressed to the base account; returns its id."""
        if not author:
            raise ValueError("author must be non-empty")
        with self._lock:
            msg = InboundMessage(
                id=self._next_id,
                author=author.lstrip("@"),
                text=clamp_text(text),
                channel=channel,
                received_at=self._clock,
            )
            self._next_id += 1
            self._logs[channel].append(msg)
            return msg.id

    def advance_clock(self, seconds: float) -> datetime:
        if seconds < 0:
            raise ValueError("clock only moves forward")
        with self._lock:
            self._clock += timedelta(seconds=seconds)
            return self._clock

    def read_outbox(self, channel: Channel | None = None) -> list[PostedReply]:
        """Snapshot of posted replies in post order; optionally per channel."""
        with self._lock:
            entries = list(self._outbox)
        if channel is None:
            return entries
        return [e for e in entries if e.reply.channel is channel]

    # internals used by SimTransport

    def _messages_after(self, channel: Channel, since_id: int) -> list[InboundMessage]:
        with self._lock:
            return [m for m in self._logs[channel] if m.id > since_id]

    def _all_after(self, since_id: int) -> list[InboundMessage]:
        with self._lock:
            merged = [m for log in self._logs.values() for m in log if m.id > since_id]
        merged.sort(key=lambda m: m.id)
        return merged

    def _post(self, reply: OutboundReply) -> int:
        with self._lock:
            posted = PostedReply(id=self._next_id, reply=reply, posted_at=self._clock)
            self._next_id += 1
            self._outbox.append(posted)
            return posted.id

    def _high_water(self) -> int:
        with self._lock:
            return self._next_id - 1


class SimTransport:
    """Transport contract over a SimWorld."""

    def __init__(self, world: SimWorld):
        self.world = world
        self._stream_lock = threading.Lock()
        self._stream: SimStreamHandle | None = None

    def now(self) -> datetime:
        return self.world.clock

    def poll_new(
        self, channel: Channel, cursor: PollCursor, budget: RateBudget
    ) -> tuple[list[InboundMessage], PollCursor]:
        assert budget.family is RateFamily.REST
        if not self.world.available:
            raise TransportUnavailable("simulated endpoint marked unavailable")
        if not budget.try_acquire(self.now()):
            raise RateLimited(f"REST budget exhausted ({budget.capacity}/{budget.window_seconds}s)")
        messages = self.world._messages_after(channel, cursor.since_id)
        new_cursor = cursor.advanced_to(messages[-1].id) if messages else cursor
        return messages, new_cursor

    def open_stream(self, budget: RateBudget) -> "SimStreamHandle":
        assert budget.family is RateFamily.STREAMING
        with self._stream_lock:
            if self._stream is not None and not self._stream.closed:
                raise AlreadyStreaming("a stream is already open on this endpoint")
            if not self.world.available:
                raise TransportUnavailable("simulated endpoint marked unavailable")
            if not budget.try_acquire(self.now()):
                raise RateLimited("streaming budget exhausted")
            self._stream = SimStreamHandle(self.world)
            return self._stream

    def post_reply(self, reply: OutboundReply, budget: RateBudget) -> int:
        assert budget.family is RateFamily.REST
        if not self.world.available:
            raise TransportUnavailable("simulated endpoint marked unavailable")
        if not budget.try_acquire(self.now()):
            raise RateLimited("REST budget exhausted")
        return self.world._post(reply)


class SimStreamHandle:
    """Yields messages injected after the stream was opened, in id order."""

    def __init__(self, world: SimWorld):
        self._world = world
        self._last_seen = world._high_water()
        self.closed = False

    def read(self) -> list[InboundMessage]:
        if self.closed:
            return []
        messages = self._world._all_after(self._last_seen)
        if messages:
            self._last_seen = messages[-1].id
        return messages

    def close(self) -> None:
        self.closed = True
