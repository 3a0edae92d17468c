"""Reference HTTP server for the generic microblog wire schema.

Exposes a SimWorld over the same endpoints a real platform binding would
offer, so the HTTP transport adapter can be tested for wire conformance
without credentials or a live service. All bodies are UTF-8 JSON; 429 can
be forced to exercise the rate-limit mapping.
"""
from __future__ import annotations

import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlsplit

from .domain import Channel, OutboundReply
from .simulator import SimWorld
from .transport import format_wire_timestamp

_LIST_PATHS = {
    "/mentions": Channel.MENTION,
    "/direct_messages": Channel.DIRECT_MESSAGE,
}


def _message_to_wire(message, with_channel: bool = False) -> dict:
    obj = {
        "id": message.id,
        "author": message.author,
        "text": message.text,
        "created_at": format_wire_timestamp(message.received_at),
    }
    if with_channel:
        obj["channel"] = message.channel.value
    return obj


class WireServer:
    """Serves one SimWorld on 127.0.0.1; port 0 picks a free port."""

    def __init__(self, world: SimWorld, port: int = 0):
        self.world = world
        self.force_429 = False
        server = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def _send_json(self, payload: dict, status: int = 200) -> None:
                body = json.dumps(payload).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json; charset=utf-8")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def _rate_limited(self) -> bool:
                if server.force_429:
                    self._send_json({"error": "rate limited"}, status=429)
                    return True
                return False

            def do_GET(self):  # noqa: N802
                parts = urlsplit(self.path)
                if self._rate_limited():
                    return
                if parts.path in _LIST_PATHS:
                    params = parse_qs(parts.query)
                    since_id = int(params.get("since_id", ["0"])[0])
                    messages = server.world._messages_after(_LIST_PATHS[parts.path], since_id)
                    self._send_json({"messages": [_message_to_wire(m) for m in messages]})
                elif parts.path == "/stream":
                    self._serve_stream()
                else:
                    self._send_json({"error": "not found"}, status=404)

            def _serve_stream(self):
                self.send_response(200)
                self.send_header("Content-Type", "application/x-ndjson; charset=utf-8")
                self.send_header("Transfer-Encoding", "chunked")
                self.end_headers()
                last_seen = server.world._high_water()
                try:
                    while not server._shutting_down:
                        fresh = server.world._all_after(last_seen)
                        for message in fresh:
                            line = json.dumps(_message_to_wire(message, with_channel=True))
                            chunk = (line + "\n").encode("utf-8")
                            self.wfile.write(f"{len(chunk):X}\r\n".encode() + chunk + b"\r\n")
                            self.wfile.flush()
                            last_seen = message.id
                        time.sleep(0.02)
                except (BrokenPipeError, ConnectionResetError):
                    pass

            def do_POST(self):  # noqa: N802
                parts = urlsplit(self.path)
                if self._rate_limited():
                    return
                length = int(self.headers.get("Content-Length", "0"))
                payload = json.loads(self.rfile.read(length).decode("utf-8"))
                if parts.path == "/statuses":
                    text = payload["text"]
                    recipient = text.split()[0][1:] if text.startswith("@") else ""
                    reply = OutboundReply(
                        recipient=recipient,
                        channel=Channel.MENTION,
                        text=text,
                        in_reply_to=int(payload.get("in_reply_to", 0)),
                    )
                elif parts.path == "/direct_messages":
                    reply = OutboundReply(
                        recipient=payload["recipient"],
                        channel=Channel.DIRECT_MESSAGE,
                        text=payload["text"],
                        in_reply_to=0,
                    )
                else:
                    self._send_json({"error": "not found"}, status=404)
                    return
                new_id = server.world._post(reply)
                self._send_json({"id": new_id}, status=201)

            def log_message(self, fmt, *args):
                pass

        self._shutting_down = False
        self._httpd = ThreadingHTTPServer(("127.0.0.1", port), Handler)
        self._httpd.daemon_threads = True
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)

    @property
    def base_url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "WireServer":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._shutting_down = True
        self._httpd.shutdown()
        self._httpd.server_close()

    def __enter__(self) -> "WireServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()
