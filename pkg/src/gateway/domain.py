"""Core data types and the inbound message grammar.

Every command a user sends has the shape ``key optional_text``: the first
whitespace-delimited token selects a registered service, the remainder is
free text for that service. Messages arrive either as a public mention of
the gateway's base account or as a private direct message.
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from datetime import datetime
from enum import Enum

logger = logging.getLogger(__name__)

# Defensive cap on inbound text, counted in Unicode scalar values. Real
# platform messages are far shorter; longer inputs are truncated at
# ingestion with a log record.
MAX_INBOUND_TEXT = 1000

# One-message reply bound, counted in Unicode scalar values.
REPLY_LIMIT = 140

_KEY_RE = re.compile(r"[a-z0-9_]{1,16}")
_ASCII_UPPER_TO_LOWER = str.maketrans(
    "ABCDEFGHIJKLMNOPQRSTUVWXYZ", "abcdefghijklmnopqrstuvwxyz"
)


class GatewayError(Exception):
    """Base class for all errors raised by this package."""


class RejectedKey(GatewayError):
    """Raised when a raw key violates the key charset or length rule."""

    def __init__(self, raw: str):
        super().__init__(f"key {raw!r} must match [a-z0-9_]{{1,16}} after lowercasing")
        self.raw = raw


class Channel(Enum):
    """Where a message travelled: public mention or private direct message."""

    MENTION = "mention"
    DIRECT_MESSAGE = "direct_message"


@dataclass(frozen=True)
class InboundMessage:
    """One received mention or direct message.

    ``id`` is a positive ordinal assigned by the platform, monotone per
    channel. ``author`` is the sender's handle without a leading '@'.
    """

    id: int
    author: str
    text: str
    channel: Channel
    received_at: datetime

    def __post_init__(self):
        if self.id <= 0:
            raise ValueError(f"message id must be positive, got {self.id}")
        if not self.author or any(c.isspace() for c in self.author):
            raise ValueError(f"author must be non-empty without whitespace: {self.author!r}")
        if self.author.startswith("@"):
            raise ValueError("author is stored without a leading '@'")
        if len(self.text) > MAX_INBOUND_TEXT:
            raise ValueError(f"text exceeds {MAX_INBOUND_TEXT} scalars; clamp at ingestion")


@dataclass(frozen=True)
class ParsedCommand:
    """Result of splitting a stripped message into key + optional text.

    ``key`` is the normalized first token, or None when the message is
    empty or its first token is not a well-formed key. ``original`` keeps
    the full post-strip text verbatim (it is forwarded to webhooks).
    """

    key: str | None
    text: str
    original: str


@dataclass(frozen=True)
class ServiceRegistration:
    """The <key, webhook> pair that defines one service, plus ownership."""

    key: str
    webhook: str
    owner: str
    registered_at: datetime


@dataclass(frozen=True)
class OutboundReply:
    """A composed reply, bounded to one platform message.

    Mention replies start with ``@recipient `` so they thread publicly;
    direct-message replies carry the bare text.
    """

    recipient: str
    channel: Channel
    text: str
    in_reply_to: int

    def __post_init__(self):
        if len(self.text) > REPLY_LIMIT:
            raise ValueError(f"reply exceeds {REPLY_LIMIT} scalars: {len(self.text)}")
        if self.channel is Channel.MENTION and not self.text.startswith(f"@{self.recipient} "):
            raise ValueError("mention replies must start with '@recipient '")


def clamp_text(text: str) -> str:
    """Truncate inbound text to the defensive bound, logging when it bites."""
    if len(text) > MAX_INBOUND_TEXT:
        logger.warning("inbound text truncated from %d to %d scalars", len(text), MAX_INBOUND_TEXT)
        return text[:MAX_INBOUND_TEXT]
    return text


def strip_base_mention(text: str, base_account: str) -> str:
    """Remove the first token mentioning the base account, if any.

    The first whitespace-delimited token equal (case-insensitively) to
    ``@base_account`` is dropped and the remaining tokens are rejoined with
    single spaces. Mentions of other accounts stay put: they may be
    legitimate command arguments. Without a match the input is returned
    trimmed but otherwise unchanged.
    """
    needle = "@" + base_account.lower()
    tokens = text.split()
    for i, token in enumerate(tokens):
        if token.lower() == needle:
            return " ".join(tokens[:i] + tokens[i + 1 :])
    return text.strip()


def parse_command(stripped_text: str) -> ParsedCommand:
    """Split a stripped message into its key and optional text.

    Total over all inputs: empty or whitespace-only text yields an absent
    key, and a first token that is not a well-formed key also yields an
    absent key (such messages can only be answered by the chatbot).
    """
    original = stripped_text.strip()
    if not original:
        return ParsedCommand(key=None, text="", original="")
    parts = original.split(None, 1)
    head = parts[0]
    remainder = parts[1].strip() if len(parts) > 1 else ""
    try:
        key: str | None = normalize_key(head)
    except RejectedKey:
        key = None
    return ParsedCommand(key=key, text=remainder, original=original)


def normalize_key(raw: str) -> str:
    """Lowercase ASCII letters and validate against ``[a-z0-9_]{1,16}``.

    Raises RejectedKey when the result falls outside the charset or length
    bound. Idempotent on accepted keys.
    """
    lowered = raw.translate(_ASCII_UPPER_TO_LOWER)
    if not _KEY_RE.fullmatch(lowered):
        raise RejectedKey(raw)
    return lowered
