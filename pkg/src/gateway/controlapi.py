"""HTTP control plane: start/stop/inspect the engine, manage services.

The engine can be driven programmatically while it runs:

    POST /control/start        POST /control/stop       GET /control/status
    POST /admin/services       {"key":..., "webhook":..., "owner":...}
    DELETE /admin/services/{key}?owner=...
    GET /admin/services
"""
from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlsplit

from .domain import RejectedKey
from .pipeline import Engine
from .registry import InvalidWebhook, KeyTaken, NotFound, NotOwner, RegistryStore

_ERROR_STATUS = {
    RejectedKey: 400,
    InvalidWebhook: 400,
    KeyTaken: 409,
    NotFound: 404,
    NotOwner: 403,
}


def _registration_to_json(reg) -> dict:
    return {
        "key": reg.key,
        "webhook": reg.webhook,
        "owner": reg.owner,
        "registered_at": reg.registered_at.isoformat(),
    }


class ControlApiServer:
    """Binds an Engine and a RegistryStore to the control-plane routes."""

    def __init__(self, engine: Engine, registry: RegistryStore, port: int = 0, host: str = "127.0.0.1"):
        self.engine = engine
        self.registry = registry
        server = self

        class Handler(BaseHTTPRequestHandler):
            def _send_json(self, payload, status: int = 200) -> None:
                body = json.dumps(payload).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json; charset=utf-8")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def _read_body(self) -> dict:
                length = int(self.headers.get("Content-Length", "0"))
                if length == 0:
                    return {}
                return json.loads(self.rfile.read(length).decode("utf-8"))

            def do_GET(self):  # noqa: N802
                path = urlsplit(self.path).path
                if path == "/control/status":
                    self._send_json(server.engine.status())
                elif path == "/admin/services":
                    regs = sorted(server.registry.entries.values(), key=lambda r: r.key)
                    self._send_json({"services": [_registration_to_json(r) for r in regs]})
                else:
                    self._send_json({"error": "not found"}, status=404)

            def do_POST(self):  # noqa: N802
                path = urlsplit(self.path).path
                if path == "/control/start":
                    self._send_json(server.engine.control("start"))
                elif path == "/control/stop":
                    self._send_json(server.engine.control("stop"))
                elif path == "/admin/services":
                    try:
                        body = self._read_body()
                        reg = server.registry.register(
                            body["key"], body["webhook"], body["owner"]
                        )
                    except KeyError as exc:
                        self._send_json({"error": f"missing field {exc}"}, status=400)
                    except tuple(_ERROR_STATUS) as exc:
                        self._send_json({"error": str(exc)}, status=_ERROR_STATUS[type(exc)])
                    else:
                        self._send_json(_registration_to_json(reg), status=201)
                else:
                    self._send_json({"error": "not found"}, status=404)

            def do_DELETE(self):  # noqa: N802
                parts = urlsplit(self.path)
                prefix = "/admin/services/"
                if not parts.path.startswith(prefix):
                    self._send_json({"error": "not found"}, status=404)
                    return
                key = parts.path[len(prefix):]
                owner = parse_qs(parts.query).get("owner", [""])[0]
                try:
                    removed = server.registry.unregister(key, owner)
                except tuple(_ERROR_STATUS) as exc:
                    self._send_json({"error": str(exc)}, status=_ERROR_STATUS[type(exc)])
                else:
                    self._send_json({"removed": _registration_to_json(removed)})

            def log_message(self, fmt, *args):
                pass

        self._httpd = ThreadingHTTPServer((host, port), Handler)
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)

    @property
    def base_url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    def start(self) -> "ControlApiServer":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()

    def serve_forever(self) -> None:
        """Run in the foreground (the ``gateway run`` path)."""
        self._httpd.serve_forever()

    def __enter__(self) -> "ControlApiServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()
