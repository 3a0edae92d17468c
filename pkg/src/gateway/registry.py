"""Key -> webhook store with first-come-first-served key reservation.

Persistence is an append-only journal of single-line JSON records; replaying
the journal from empty always reproduces the in-memory map. Compaction is a
snapshot rewrite taken at startup.
"""
from __future__ import annotations

import json
import logging
import re
import threading
from datetime import datetime, timezone
from pathlib import Path
from urllib.parse import urlsplit

from .domain import GatewayError, RejectedKey, ServiceRegistration, normalize_key

logger = logging.getLogger(__name__)

_KEY_SHAPE = re.compile(r"[a-z0-9_]{1,16}")


class KeyTaken(GatewayError):
    """The key is already reserved; reservation is first come, first served."""


class InvalidWebhook(GatewayError):
    """Webhook must be an absolute http(s) URL without a query string."""


class NotFound(GatewayError):
    """No registration exists under this key."""


class NotOwner(GatewayError):
    """Only the registering owner may remove a key."""


class CorruptJournal(GatewayError):
    def __init__(self, line_number: int, reason: str):
        super().__init__(f"journal line {line_number}: {reason}")
        self.line_number = line_number


def _validate_webhook(url: str) -> str:
    # the dispatcher appends ?t=...&u=..., so a query string here would
    # produce a malformed join
    if "?" in url:
        raise InvalidWebhook(f"webhook must not contain a query string: {url}")
    parts = urlsplit(url)
    if parts.scheme not in ("http", "https") or not parts.netloc:
        raise InvalidWebhook(f"webhook must be an absolute http(s) URL: {url}")
    return url


def _now() -> datetime:
    return datetime.now(timezone.utc).replace(microsecond=0)


class RegistryStore:
    """Service registrations keyed by normalized key.

    Single-writer, multi-reader: mutations are serialized and journaled
    before they return; lookups never block each other. ``journal_path``
    may be None for a purely in-memory store (demos, tests).
    """

    def __init__(self, journal_path: str | Path | None = None):
        self.journal_path = Path(journal_path) if journal_path is not None else None
        self._entries: dict[str, ServiceRegistration] = {}
        self._lock = threading.Lock()

    @property
    def entries(self) -> dict[str, ServiceRegistration]:
        return dict(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def register(self, key: str, webhook: str, owner: str) -> ServiceRegistration:
        """Reserve ``key`` for ``webhook``; journaled before returning."""
        normalized = normalize_key(key)
        _validate_webhook(webhook)
        with self._lock:
            if normalized in self._entries:
                raise KeyTaken(f"key {normalized!r} is already registered")
            reg = ServiceRegistration(
                key=normalized, webhook=webhook, owner=owner, registered_at=_now()
            )
            self._append_journal(
                {
                    "op": "register",
                    "key": reg.key,
                    "webhook": reg.webhook,
                    "owner": reg.owner,
                    "ts": reg.registered_at.isoformat(),
                }
            )
            self._entries[normalized] = reg
            return reg

    def lookup(self, key: str) -> ServiceRegistration | None:
        """Return the registration for an already-normalized key, if any."""
        assert _KEY_SHAPE.fullmatch(key), f"lookup requires a normalized key, got {key!r}"
        return self._entries.get(key)

    def unregister(self, key: str, requester: str) -> ServiceRegistration:
        """Remove ``key`` iff ``requester`` owns it; removal is journaled."""
        normalized = normalize_key(key)
        with self._lock:
            reg = self._entries.get(normalized)
            if reg is None:
                raise NotFound(f"no service registered under {normalized!r}")
            if reg.owner != requester:
                raise NotOwner(f"{requester!r} does not own key {normalized!r}")
            self._append_journal(
                {
                    "op": "unregister",
                    "key": normalized,
                    "owner": requester,
                    "ts": _now().isoformat(),
                }
            )
            del self._entries[normalized]
            return reg

    def snapshot(self) -> bytes:
        """Compacted journal: one register record per live entry."""
        lines = []
        for key in sorted(self._entries):
            reg = self._entries[key]
            lines.append(
                json.dumps(
                    {
                        "op": "register",
                        "key": reg.key,
                        "webhook": reg.webhook,
                        "owner": reg.owner,
                        "ts": reg.registered_at.isoformat(),
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
        return "".join(lines).encode("utf-8")

    def compact(self) -> None:
        """Rewrite the journal as a snapshot of the current entries."""
        if self.journal_path is None:
            return
        tmp = self.journal_path.with_suffix(self.journal_path.suffix + ".tmp")
        tmp.write_bytes(self.snapshot())
        tmp.replace(self.journal_path)

    @classmethod
    def load(cls, journal_path: str | Path) -> "RegistryStore":
        """Replay the journal from empty; missing file means empty store."""
        store = cls(journal_path)
        path = Path(journal_path)
        if not path.exists():
            return store
        with path.open("r", encoding="utf-8") as fh:
            for line_number, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                store._replay_line(line, line_number)
        return store

    def _replay_line(self, line: str, line_number: int) -> None:
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorruptJournal(line_number, f"invalid JSON ({exc.msg})") from exc
        if not isinstance(record, dict):
            raise CorruptJournal(line_number, "record is not an object")
        op = record.get("op")
        try:
            if op == "register":
                key = normalize_key(record["key"])
                reg = ServiceRegistration(
                    key=key,
                    webhook=_validate_webhook(record["webhook"]),
                    owner=record["owner"],
                    registered_at=datetime.fromisoformat(record["ts"]),
                )
                self._entries[key] = reg
            elif op == "unregister":
                self._entries.pop(normalize_key(record["key"]), None)
            else:
                raise CorruptJournal(line_number, f"unknown op {op!r}")
        except CorruptJournal:
            raise
        except (KeyError, ValueError, TypeError, RejectedKey, InvalidWebhook) as exc:
            raise CorruptJournal(line_number, str(exc)) from exc

    def _append_journal(self, record: dict) -> None:
        if self.journal_path is None:
            return
        with self.journal_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
            fh.flush()
