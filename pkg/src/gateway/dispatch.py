"""Outbound webhook calls and reply composition.

Every service call is an HTTP GET carrying two query parameters: ``t`` is
the original command text (key token included, since services re-parse it
server-side) and ``u`` is the author's handle. The webhook's plain-text
body becomes the reply, prefixed with ``@author`` on the mention channel
and cut to the one-message bound with a trailing ellipsis when too long.
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass

import requests

from .domain import REPLY_LIMIT, Channel, OutboundReply, ParsedCommand, ServiceRegistration

logger = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 10.0
FALLBACK_TEXT = "service temporarily unavailable"
ELLIPSIS = "…"

_UNRESERVED = frozenset(
    b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-._~"
)
_CRLF_RUN = re.compile(r"[\r\n]+")


def percent_encode(s: str) -> str:
    """Encode for a query-string value: UTF-8 bytes, unreserved set only.

    Unreserved bytes (ALPHA / DIGIT / - . _ ~) pass through; every other
    byte becomes %HH with uppercase hex. Space is %20, never '+'.
    """
    out = []
    for byte in s.encode("utf-8"):
        if byte in _UNRESERVED:
            out.append(chr(byte))
        else:
            out.append(f"%{byte:02X}")
    return "".join(out)


@dataclass(frozen=True)
class WebhookCall:
    """One assembled GET request to a registered service."""

    url: str
    t_param: str
    u_param: str
    timeout_seconds: float = DEFAULT_TIMEOUT


@dataclass(frozen=True)
class CallOutcome:
    """What came back: a body, an HTTP error, a timeout, or nothing at all."""

    kind: str  # success | http_error | timeout | unreachable
    body: str = ""
    status: int | None = None

    @property
    def ok(self) -> bool:
        return self.kind == "success"

    @property
    def retryable(self) -> bool:
        if self.kind in ("timeout", "unreachable"):
            return True
        return self.kind == "http_error" and self.status is not None and self.status >= 500


def build_call(
    reg: ServiceRegistration, cmd: ParsedCommand, author: str, *, timeout: float = DEFAULT_TIMEOUT
) -> WebhookCall:
    """Assemble the GET URL: webhook + ?t=<original text>&u=<author>.

    ``t`` carries the full original text including the key token; services
    split it again on their side.
    """
    assert cmd.key == reg.key, "command key must match the registration"
    u_param = author[1:] if author.startswith("@") else author
    url = f"{reg.webhook}?t={percent_encode(cmd.original)}&u={percent_encode(u_param)}"
    return WebhookCall(url=url, t_param=cmd.original, u_param=u_param, timeout_seconds=timeout)


def execute(call: WebhookCall, session: requests.Session | None = None) -> CallOutcome:
    """Perform the GET; never raises, all failures are encoded in the outcome.

    Success bodies are decoded as UTF-8, trimmed, and CR/LF runs collapsed
    to single spaces. Response content types other than text/plain are
    treated as opaque text.
    """
    get = session.get if session is not None else requests.get
    try:
        resp = get(call.url, timeout=call.timeout_seconds)
    except requests.Timeout:
        return CallOutcome(kind="timeout")
    except requests.RequestException as exc:
        logger.debug("webhook unreachable: %s", exc)
        return CallOutcome(kind="unreachable")
    if not 200 <= resp.status_code < 300:
        return CallOutcome(kind="http_error", status=resp.status_code)
    body = resp.content.decode("utf-8", errors="replace")
    return CallOutcome(kind="success", body=_CRLF_RUN.sub(" ", body).strip())


class Dispatcher:
    """Executes webhook calls with a bounded retry.

    Timeouts, 5xx responses, and unreachable hosts get exactly one retry;
    4xx responses do not. Safe to use from multiple threads at once.
    """

    def __init__(self, timeout: float = DEFAULT_TIMEOUT, session: requests.Session | None = None):
        self.timeout = timeout
        self._session = session if session is not None else requests.Session()

    def call_service(self, reg: ServiceRegistration, cmd: ParsedCommand, author: str) -> CallOutcome:
        call = build_call(reg, cmd, author, timeout=self.timeout)
        outcome = execute(call, self._session)
        if outcome.retryable:
            logger.info("retrying webhook %s after %s", reg.key, outcome.kind)
            outcome = execute(call, self._session)
        return outcome


def compose_reply(
    outcome: CallOutcome, author: str, channel: Channel, in_reply_to: int
) -> OutboundReply | None:
    """Turn a call outcome into a posted reply, or None for empty bodies.

    Mention replies are prefixed with ``@author``; anything over the
    one-message bound is cut so the total is exactly the bound with a final
    ellipsis. Failed outcomes (after the retry policy ran) produce a fixed
    unavailability notice instead of silence.
    """
    if outcome.ok:
        body = outcome.body
        if not body:
            return None
    else:
        body = FALLBACK_TEXT
    if channel is Channel.MENTION:
        text = f"@{author} {body}"
    else:
        text = body
    if len(text) > REPLY_LIMIT:
        text = text[: REPLY_LIMIT - 1] + ELLIPSIS
    return OutboundReply(recipient=author, channel=channel, text=text, in_reply_to=in_reply_to)
