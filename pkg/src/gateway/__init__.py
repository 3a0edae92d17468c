"""Microblog auto-responder gateway.

Inbound messages shaped ``key optional_text`` are routed to user-registered
webhooks over HTTP GET and the response is posted back as a reply; unkeyed
messages fall through to a pattern/effect chatbot.
"""

from .domain import (
    Channel,
    InboundMessage,
    OutboundReply,
    ParsedCommand,
    ServiceRegistration,
    normalize_key,
    parse_command,
    strip_base_mention,
)
from .pipeline import Engine, MessageBus
from .registry import RegistryStore
from .simulator import SimTransport, SimWorld
from .transport import HttpTransport, PollCursor, RateBudget, RateFamily

__version__ = "0.1.0"

__all__ = [
    "Channel",
    "Engine",
    "HttpTransport",
    "InboundMessage",
    "MessageBus",
    "OutboundReply",
    "ParsedCommand",
    "PollCursor",
    "RateBudget",
    "RateFamily",
    "RegistryStore",
    "ServiceRegistration",
    "SimTransport",
    "SimWorld",
    "normalize_key",
    "parse_command",
    "strip_base_mention",
    "__version__",
]
