"""Gateway configuration: UTF-8 ``key=value`` lines.

Required: ``base_account``. ``transport`` is either the literal
``simulated`` or the base URL of a wire-schema endpoint. Unknown keys are
rejected so typos fail fast.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .transport import (
    DEFAULT_REST_CAPACITY,
    DEFAULT_REST_WINDOW,
    DEFAULT_STREAM_CAPACITY,
)

DEFAULT_CONTROL_PORT = 8411

_INT_KEYS = {
    "poll_interval_seconds",
    "rest_capacity",
    "rest_window_seconds",
    "stream_capacity",
    "control_port",
}
_STR_KEYS = {"base_account", "transport", "journal_path", "mode", "state_path", "rules_path"}


@dataclass
class GatewayConfig:
    base_account: str
    transport: str = "simulated"
    poll_interval_seconds: int = 60
    rest_capacity: int = DEFAULT_REST_CAPACITY
    rest_window_seconds: int = DEFAULT_REST_WINDOW
    stream_capacity: int = DEFAULT_STREAM_CAPACITY
    journal_path: str = "registry.journal"
    mode: str = "poll"
    state_path: str | None = None
    rules_path: str | None = None
    control_port: int = DEFAULT_CONTROL_PORT

    def resolved_state_path(self) -> Path:
        # default: state.json next to the registry journal
        if self.state_path is not None:
            return Path(self.state_path)
        return Path(self.journal_path).parent / "state.json"


def parse_config(text: str) -> GatewayConfig:
    values: dict[str, object] = {}
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"config line {line_number}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key in _INT_KEYS:
            try:
                values[key] = int(value)
            except ValueError:
                raise ValueError(f"config line {line_number}: {key} must be an integer") from None
        elif key in _STR_KEYS:
            values[key] = value
        else:
            raise ValueError(f"config line {line_number}: unknown key {key!r}")
    if "base_account" not in values:
        raise ValueError("config must set base_account")
    config = GatewayConfig(**values)  # type: ignore[arg-type]
    if config.poll_interval_seconds < 0:
        raise ValueError("poll_interval_seconds must be >= 0")
    if config.mode not in ("poll", "stream"):
        raise ValueError("mode must be 'poll' or 'stream'")
    return config


def load_config(path: str | Path) -> GatewayConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))
