"""Example webhooks: quote bot, weather bot, echo bot.

These are real services in the `t <symbol>` / `w <city>` style, backed by
fixture tables instead of live feeds so every response is deterministic.
They double as end-to-end test fixtures, served by a small local HTTP
server that speaks the webhook contract (GET with ``t`` and ``u`` query
parameters, plain-text body back).
"""
from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from importlib import resources
from urllib.parse import parse_qs, urlsplit


@dataclass(frozen=True)
class Quote:
    symbol: str
    price: str
    change: str


@dataclass(frozen=True)
class FixtureTables:
    """Quote and weather lookup tables; immutable after load."""

    quotes: dict[str, Quote]
    weather: dict[str, str]


def load_fixtures(data: bytes | None = None) -> FixtureTables:
    """Load fixture tables from JSON; defaults to the packaged file."""
    if data is None:
        data = resources.files("gateway.data").joinpath("botkit_fixtures.json").read_bytes()
    raw = json.loads(data)
    quotes = {
        symbol.upper(): Quote(symbol=symbol.upper(), price=rec["price"], change=rec["change"])
        for symbol, rec in raw.get("quotes", {}).items()
    }
    weather = {city.lower(): line for city, line in raw.get("weather", {}).items()}
    return FixtureTables(quotes=quotes, weather=weather)


def quote_handler(t: str | None, u: str | None, tables: FixtureTables) -> str:
    """Stock quote service: expects ``t <symbol>``.

    Mirrors the classic CGI behaviour: a missing parameter answers
    "unknown", a keyless text answers "<t>?? could not get ticket", and an
    unknown symbol gets the same suffix after the symbol itself.
    """
    if t is None or t == "":
        return "unknown"
    i = t.find(" ")
    if i <= 0:
        return t + "?? could not get ticket"
    symbol = t[i + 1 :].strip().upper()
    quote = tables.quotes.get(symbol)
    if quote is None:
        return symbol + "?? could not get ticket"
    return f"{quote.symbol} : {quote.price} {quote.change}"


def weather_handler(t: str | None, u: str | None, tables: FixtureTables) -> str:
    """Weather service: expects ``w <city-code>``."""
    city = ""
    if t:
        i = t.find(" ")
        if i > 0:
            city = t[i + 1 :].strip().lower()
    if not city:
        return "no forecast"
    forecast = tables.weather.get(city)
    if forecast is None:
        return f"no forecast for {city}"
    return forecast


def echo_handler(t: str | None, u: str | None, tables: FixtureTables) -> str:
    """Canonical end-to-end fixture: echoes author and text back."""
    return f"{u or ''}: {t or ''}"


_HANDLERS = {
    "/quote": quote_handler,
    "/weather": weather_handler,
    "/echo": echo_handler,
}


@dataclass
class RequestRecord:
    path: str
    query: str
    t: str | None
    u: str | None


class BotkitServer:
    """Serves the example webhooks on 127.0.0.1.

    Port 0 picks a free port. Received requests are recorded so tests can
    assert on the exact wire bytes the gateway sent.
    """

    def __init__(self, tables: FixtureTables | None = None, port: int = 0):
        self.tables = tables or load_fixtures()
        self.requests: list[RequestRecord] = []
        self._requests_lock = threading.Lock()
        server = self

        class Handler(BaseHTTPRequestHandler):
            def do_GET(self):  # noqa: N802 (http.server API)
                parts = urlsplit(self.path)
                params = parse_qs(parts.query, keep_blank_values=True)
                t = params["t"][0] if "t" in params else None
                u = params["u"][0] if "u" in params else None
                with server._requests_lock:
                    server.requests.append(
                        RequestRecord(path=parts.path, query=parts.query, t=t, u=u)
                    )
                handler = _HANDLERS.get(parts.path)
                if handler is None:
                    self.send_error(404)
                    return
                body = handler(t, u, server.tables).encode("utf-8")
                self.send_response(200)
                self.send_header("Content-Type", "text/plain; charset=utf-8")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def log_message(self, fmt, *args):
                pass

        self._httpd = ThreadingHTTPServer(("127.0.0.1", port), Handler)
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)

    @property
    def base_url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "BotkitServer":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()

    def __enter__(self) -> "BotkitServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()
