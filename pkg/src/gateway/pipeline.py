"""The gateway backbone: ingestion engine, message bus, processor, control.

A scheduler periodically ticks the engine; each tick polls both channels
and feeds unseen messages onto a bounded FIFO bus. The processor drains the
bus and runs the five-stage flow per message: detect -> find key -> find
webhook -> call it -> post the reply. Messages with no registered key go to
the chatbot instead. A seen-set makes processing at-most-once per message
id even across cursor resets and restarts.
"""
from __future__ import annotations

import json
import logging
import threading
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import chatbot as chatbot_mod
from .chatbot import RuleSet
from .dispatch import CallOutcome, Dispatcher, compose_reply
from .domain import Channel, InboundMessage, OutboundReply, parse_command, strip_base_mention
from .registry import RegistryStore
from .transport import (
    DEFAULT_REST_CAPACITY,
    DEFAULT_REST_WINDOW,
    DEFAULT_STREAM_CAPACITY,
    DEFAULT_STREAM_WINDOW,
    PollCursor,
    RateBudget,
    RateFamily,
    RateLimited,
    Transport,
    TransportUnavailable,
)

logger = logging.getLogger(__name__)

DEFAULT_BUS_CAPACITY = 1024
DEFAULT_SEEN_CAPACITY = 10_000
DEFAULT_POLL_INTERVAL = 60
RETRY_CAP = 3


class _SeenSet:
    """Bounded set of recently processed ids; oldest entries fall out first."""

    def __init__(self, capacity: int):
        self._capacity = capacity
        self._members: set[int] = set()
        self._order: deque[int] = deque()

    def __contains__(self, item: int) -> bool:
        return item in self._members

    def add(self, item: int) -> bool:
        """Add if absent; returns False when already present."""
        if item in self._members:
            return False
        self._members.add(item)
        self._order.append(item)
        while len(self._order) > self._capacity:
            self._members.discard(self._order.popleft())
        return True

    def items(self) -> list[int]:
        return list(self._order)


class MessageBus:
    """Bounded FIFO between ingestion and processing, with dedupe memory.

    A message id already seen on its channel is never enqueued again, and
    marking an id seen is atomic, so two consumers can never both process
    the same message. Safe for concurrent producers and consumers.
    """

    def __init__(self, capacity: int = DEFAULT_BUS_CAPACITY, seen_capacity: int = DEFAULT_SEEN_CAPACITY):
        self.capacity = capacity
        self._queue: deque[InboundMessage] = deque()
        self._seen: dict[Channel, _SeenSet] = {
            ch: _SeenSet(seen_capacity) for ch in Channel
        }
        self._lock = threading.Lock()

    def seen_contains(self, channel: Channel, message_id: int) -> bool:
        with self._lock:
            return message_id in self._seen[channel]

    def enqueue(self, message: InboundMessage) -> bool:
        """False when the message is a known duplicate or the bus is full."""
        with self._lock:
            if message.id in self._seen[message.channel]:
                return False
            if len(self._queue) >= self.capacity:
                return False
            self._queue.append(message)
            return True

    def dequeue(self) -> InboundMessage | None:
        with self._lock:
            return self._queue.popleft() if self._queue else None

    def mark_seen(self, channel: Channel, message_id: int) -> bool:
        """Record an id as processed; False if it already was (duplicate)."""
        with self._lock:
            return self._seen[channel].add(message_id)

    def depth(self) -> int:
        with self._lock:
            return len(self._queue)

    def seen_snapshot(self) -> list[str]:
        with self._lock:
            return [
                f"{channel.value}:{message_id}"
                for channel in Channel
                for message_id in self._seen[channel].items()
            ]

    def restore_seen(self, entries: list[str]) -> None:
        with self._lock:
            for entry in entries:
                channel_name, _, raw_id = entry.partition(":")
                self._seen[Channel(channel_name)].add(int(raw_id))


@dataclass
class _QueuedReply:
    reply: OutboundReply
    attempts: int = 0


@dataclass
class TickReport:
    """What one ingestion tick did."""

    fetched: int = 0
    enqueued: int = 0
    deduped: int = 0
    dropped: int = 0
    replies_retried: int = 0
    skipped: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class ProcessOutcome:
    """What happened to one dequeued message."""

    message_id: int
    channel: Channel
    route: str  # webhook | chatbot | duplicate
    replied: bool
    queued_for_retry: bool = False
    reply_text: str | None = None


class Engine:
    """Owns the ingestion/processing loop and its state.

    Drive it synchronously (``tick`` + ``drain``) for tests and scenarios,
    or call ``start``/``stop`` with a positive poll interval to run the
    scheduler and processor on background threads. The control surface is
    ``control('start'|'stop'|'status')``.
    """

    def __init__(
        self,
        transport: Transport,
        registry: RegistryStore,
        dispatcher: Dispatcher,
        rules: RuleSet | None = None,
        *,
        base_account: str,
        mode: str = "poll",
        poll_interval_seconds: int = DEFAULT_POLL_INTERVAL,
        rest_capacity: int = DEFAULT_REST_CAPACITY,
        rest_window_seconds: int = DEFAULT_REST_WINDOW,
        stream_capacity: int = DEFAULT_STREAM_CAPACITY,
        bus_capacity: int = DEFAULT_BUS_CAPACITY,
        seen_capacity: int = DEFAULT_SEEN_CAPACITY,
        state_path: str | Path | None = None,
        parallelism: int = 4,
        retry_cap: int = RETRY_CAP,
    ):
        if mode not in ("poll", "stream"):
            raise ValueError(f"mode must be 'poll' or 'stream', got {mode!r}")
        self.transport = transport
        self.registry = registry
        self.dispatcher = dispatcher
        self.rules = rules if rules is not None else chatbot_mod.default_rules()
        self.base_account = base_account
        self.mode = mode
        self.poll_interval_seconds = poll_interval_seconds
        self.parallelism = max(1, parallelism)
        self.retry_cap = retry_cap
        self.state_path = Path(state_path) if state_path is not None else None

        now = transport.now()
        self.rest_budget = RateBudget(RateFamily.REST, rest_capacity, rest_window_seconds, now)
        self.stream_budget = RateBudget(
            RateFamily.STREAMING, stream_capacity, DEFAULT_STREAM_WINDOW, now
        )
        self.bus = MessageBus(capacity=bus_capacity, seen_capacity=seen_capacity)
        self.cursors: dict[Channel, PollCursor] = {ch: PollCursor(ch) for ch in Channel}
        self.retry_queue: deque[_QueuedReply] = deque()
        self.running = False

        self._retry_lock = threading.Lock()
        self._threads: list[threading.Thread] = []
        self._stream_handle = None
        if self.state_path is not None and self.state_path.exists():
            self._restore_state()

    # ----- ingestion -----

    def tick(self) -> TickReport:
        """One poll cycle: fetch both channels, enqueue, drain retries.

        Rate limiting never raises out of a tick; skipped channels are
        recorded in the report and their cursors stay put.
        """
        assert self.running, "scheduler must not tick a stopped engine"
        assert self.mode == "poll", "tick is the poll-mode entry point"
        report = TickReport()
        for channel in (Channel.MENTION, Channel.DIRECT_MESSAGE):
            try:
                messages, cursor = self.transport.poll_new(
                    channel, self.cursors[channel], self.rest_budget
                )
            except RateLimited:
                logger.info("poll skipped on %s: rate limited", channel.value)
                report.skipped[channel.value] = "rate_limited"
                continue
            except TransportUnavailable as exc:
                logger.warning("poll skipped on %s: %s", channel.value, exc)
                report.skipped[channel.value] = "unavailable"
                continue
            report.fetched += len(messages)
            for message in messages:
                if self.bus.seen_contains(channel, message.id):
                    report.deduped += 1
                elif self.bus.enqueue(message):
                    report.enqueued += 1
                else:
                    logger.warning("bus full, dropping message id %d", message.id)
                    report.dropped += 1
            self.cursors[channel] = cursor
        report.replies_retried = self.drain_retries()
        self.save_state()
        return report

    def pump_stream(self) -> TickReport:
        """Stream-mode ingestion step: move arrived messages onto the bus."""
        assert self.running, "stream pump requires a running engine"
        assert self.mode == "stream"
        report = TickReport()
        if self._stream_handle is None:
            self._stream_handle = self.transport.open_stream(self.stream_budget)
        for message in self._stream_handle.read():
            report.fetched += 1
            if self.bus.seen_contains(message.channel, message.id):
                report.deduped += 1
            elif self.bus.enqueue(message):
                report.enqueued += 1
            else:
                report.dropped += 1
        report.replies_retried = self.drain_retries()
        return report

    def drain_retries(self) -> int:
        """Post queued replies while the REST budget has headroom.

        A rate-limited window leaves the queue intact without charging
        attempts; an unreachable endpoint charges one attempt and drops the
        reply after the retry cap.
        """
        posted = 0
        while True:
            with self._retry_lock:
                if not self.retry_queue:
                    return posted
                if self.rest_budget.remaining(self.transport.now()) <= 0:
                    return posted
                queued = self.retry_queue.popleft()
            try:
                self.transport.post_reply(queued.reply, self.rest_budget)
                posted += 1
            except RateLimited:
                with self._retry_lock:
                    self.retry_queue.appendleft(queued)
                return posted
            except TransportUnavailable:
                queued.attempts += 1
                if queued.attempts > self.retry_cap:
                    logger.error(
                        "dropping reply to %s after %d attempts", queued.reply.recipient, queued.attempts
                    )
                else:
                    with self._retry_lock:
                        self.retry_queue.appendleft(queued)
                return posted

    # ----- processing -----

    def process_one(self) -> ProcessOutcome | None:
        """Dequeue and fully handle one message; None when the bus is empty.

        Keyed-and-registered messages go to their webhook, everything else
        to the chatbot with the original text. Exactly one reply is posted
        unless the response is empty (none) or posting is rate limited
        (queued for retry). Never raises out of the loop.
        """
        message = self.bus.dequeue()
        if message is None:
            return None
        if not self.bus.mark_seen(message.channel, message.id):
            return ProcessOutcome(
                message_id=message.id, channel=message.channel, route="duplicate", replied=False
            )
        stripped = strip_base_mention(message.text, self.base_account)
        cmd = parse_command(stripped)
        registration = self.registry.lookup(cmd.key) if cmd.key is not None else None
        if registration is not None:
            route = "webhook"
            outcome = self.dispatcher.call_service(registration, cmd, message.author)
        else:
            route = "chatbot"
            answer = chatbot_mod.respond(self.rules, cmd.original, message.author)
            outcome = CallOutcome(kind="success", body=answer)
        reply = compose_reply(outcome, message.author, message.channel, message.id)
        if reply is None:
            return ProcessOutcome(
                message_id=message.id, channel=message.channel, route=route, replied=False
            )
        try:
            self.transport.post_reply(reply, self.rest_budget)
            return ProcessOutcome(
                message_id=message.id,
                channel=message.channel,
                route=route,
                replied=True,
                reply_text=reply.text,
            )
        except (RateLimited, TransportUnavailable) as exc:
            attempts = 0 if isinstance(exc, RateLimited) else 1
            with self._retry_lock:
                self.retry_queue.append(_QueuedReply(reply, attempts))
            return ProcessOutcome(
                message_id=message.id,
                channel=message.channel,
                route=route,
                replied=False,
                queued_for_retry=True,
                reply_text=reply.text,
            )

    def drain(self) -> list[ProcessOutcome]:
        """Process bus messages until it is empty.

        Uses up to ``parallelism`` workers; calls for the same message can
        never duplicate because the seen-set is marked atomically.
        """
        outcomes: list[ProcessOutcome] = []
        outcomes_lock = threading.Lock()

        def worker() -> None:
            while True:
                outcome = self.process_one()
                if outcome is None:
                    return
                with outcomes_lock:
                    outcomes.append(outcome)

        if self.parallelism == 1 or self.bus.depth() <= 1:
            worker()
        else:
            with ThreadPoolExecutor(max_workers=self.parallelism) as pool:
                for _ in range(self.parallelism):
                    pool.submit(worker)
        self.save_state()
        return outcomes

    # ----- control -----

    def control(self, command: str) -> dict:
        """start | stop | status. Start and stop are idempotent."""
        if command == "start":
            self.start()
        elif command == "stop":
            self.stop()
        elif command != "status":
            raise ValueError(f"unknown control command {command!r}")
        return self.status()

    def start(self) -> None:
        if self.running:
            return
        self.running = True
        if self.poll_interval_seconds > 0:
            self._threads = [
                threading.Thread(target=self._scheduler_loop, daemon=True),
                threading.Thread(target=self._processor_loop, daemon=True),
            ]
            for t in self._threads:
                t.start()

    def stop(self) -> None:
        if not self.running:
            return
        self.running = False
        for t in self._threads:
            t.join(timeout=5.0)
        self._threads = []
        if self._stream_handle is not None:
            self._stream_handle.close()
            self._stream_handle = None
        self.save_state()

    def status(self) -> dict:
        return {
            "running": self.running,
            "mode": self.mode,
            "queue_depth": self.bus.depth(),
            "retry_queue": len(self.retry_queue),
            "cursors": {ch.value: cur.since_id for ch, cur in self.cursors.items()},
            "budgets": {
                "rest": self.rest_budget.snapshot(),
                "streaming": self.stream_budget.snapshot(),
            },
        }

    def _scheduler_loop(self) -> None:
        while self.running:
            try:
                if self.mode == "poll":
                    self.tick()
                else:
                    self.pump_stream()
            except Exception:
                logger.exception("ingestion step failed")
            deadline = time.monotonic() + max(self.poll_interval_seconds, 0.05)
            while self.running and time.monotonic() < deadline:
                time.sleep(0.02)

    def _processor_loop(self) -> None:
        with ThreadPoolExecutor(max_workers=self.parallelism) as pool:
            def consume() -> None:
                while self.running:
                    try:
                        if self.process_one() is None:
                            time.sleep(0.02)
                    except Exception:
                        logger.exception("processing step failed")

            workers = [pool.submit(consume) for _ in range(self.parallelism)]
            for w in workers:
                w.result()

    # ----- persistence -----

    def save_state(self) -> None:
        """Persist cursors and the seen-set so a restart cannot double-reply."""
        if self.state_path is None:
            return
        payload = {
            "cursors": {ch.value: cur.since_id for ch, cur in self.cursors.items()},
            "seen": self.bus.seen_snapshot(),
        }
        tmp = self.state_path.with_suffix(self.state_path.suffix + ".tmp")
        tmp.write_text(json.dumps(payload), encoding="utf-8")
        tmp.replace(self.state_path)

    def _restore_state(self) -> None:
        payload = json.loads(self.state_path.read_text(encoding="utf-8"))
        for channel_name, since_id in payload.get("cursors", {}).items():
            channel = Channel(channel_name)
            self.cursors[channel] = PollCursor(channel, int(since_id))
        self.bus.restore_seen(payload.get("seen", []))
