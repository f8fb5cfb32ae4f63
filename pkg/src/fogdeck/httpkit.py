"""Small JSON-over-HTTP server/client plumbing shared by store and control plane."""

from __future__ import annotations

import json
import logging
import re
import socket
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Callable, Optional
from urllib.parse import parse_qs, urlparse

import requests

log = logging.getLogger(__name__)

# handler(match, query, body) -> (status, json-able object)
Handler = Callable[[re.Match, dict[str, str], Any], tuple[int, Any]]


class HttpApiError(Exception):
    """Non-2xx reply from a fogdeck HTTP service."""

    def __init__(self, status: int, message: str):
        super().__init__(f"{status}: {message}")
        self.status = status
        self.message = message


class JsonHttpServer:
    """Threaded HTTP server with a regex route table and JSON bodies."""

    def __init__(self, host: str, port: int, token: Optional[str] = None, name: str = "http"):
        self.host = host
        self.port = port
        self.token = token
        self.name = name
        self._routes: list[tuple[str, re.Pattern, Handler]] = []
        self._raw_routes: list[tuple[str, re.Pattern, Callable]] = []
        self._server: Optional[ThreadingHTTPServer] = None
        self._thread: Optional[threading.Thread] = None
        self._conns: set = set()
        self._conns_lock = threading.Lock()

    def route(self, method: str, pattern: str, handler: Handler) -> None:
        self._routes.append((method, re.compile(pattern + r"$"), handler))

    def raw_route(self, method: str, pattern: str, handler: Callable) -> None:
        """Handler gets the BaseHTTPRequestHandler and writes the response itself."""
        self._raw_routes.append((method, re.compile(pattern + r"$"), handler))

    def start(self) -> None:
        owner = self

        class RequestHandler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"
            # headers and body flush as separate writes; without this the
            # delayed-ACK/Nagle interaction adds ~40ms to every response
            disable_nagle_algorithm = True

            def log_message(self, fmt: str, *args: Any) -> None:
                log.debug("%s %s", owner.name, fmt % args)

            def setup(self) -> None:
                super().setup()
                with owner._conns_lock:
                    owner._conns.add(self.connection)

            def finish(self) -> None:
                with owner._conns_lock:
                    owner._conns.discard(self.connection)
                super().finish()

            def _dispatch(self, method: str) -> None:
                parsed = urlparse(self.path)
                query = {k: v[0] for k, v in parse_qs(parsed.query).items()}
                for m, pattern, raw_handler in owner._raw_routes:
                    if m == method:
                        match = pattern.match(parsed.path)
                        if match:
                            raw_handler(self, match, query)
                            return
                for m, pattern, handler in owner._routes:
                    if m != method:
                        continue
                    match = pattern.match(parsed.path)
                    if match is None:
                        continue
                    if owner.token and self.headers.get("Authorization") != f"Bearer {owner.token}":
                        self._reply(401, {"error": "missing or bad bearer token"})
                        return
                    body = None
                    length = int(self.headers.get("Content-Length") or 0)
                    if length:
                        try:
                            body = json.loads(self.rfile.read(length).decode())
                        except (ValueError, UnicodeDecodeError):
                            self._reply(400, {"error": "malformed JSON body"})
                            return
                    try:
                        status, obj = handler(match, query, body)
                    except HttpApiError as exc:
                        status, obj = exc.status, {"error": exc.message}
                    except Exception:
                        log.exception("%s handler error for %s %s", owner.name, method, self.path)
                        status, obj = 500, {"error": "internal error"}
                    self._reply(status, obj)
                    return
                self._reply(404, {"error": f"no route for {method} {parsed.path}"})

            def _reply(self, status: int, obj: Any) -> None:
                data = json.dumps(obj).encode()
                try:
                    self.send_response(status)
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(data)))
                    self.end_headers()
                    self.wfile.write(data)
                except (BrokenPipeError, ConnectionResetError):
                    pass

            def do_GET(self) -> None:
                self._dispatch("GET")

            def do_PUT(self) -> None:
                self._dispatch("PUT")

            def do_POST(self) -> None:
                self._dispatch("POST")

        self._server = ThreadingHTTPServer((self.host, self.port), RequestHandler)
        self._server.daemon_threads = True
        if self.port == 0:
            self.port = self._server.server_address[1]
        self._thread = threading.Thread(
            target=self._server.serve_forever, name=f"{self.name}-http", daemon=True
        )
        self._thread.start()

    def stop(self) -> None:
        if self._server is None:
            return
        self._server.shutdown()
        # sever kept-alive connections too, or handler threads keep serving
        # the dead instance; a killed process drops every socket
        with self._conns_lock:
            conns = list(self._conns)
            self._conns.clear()
        for conn in conns:
            try:
                conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                conn.close()
            except OSError:
                pass
        self._server.server_close()
        self._server = None


class JsonClient:
    """requests.Session wrapper with base URL, bearer token, and timeout."""

    def __init__(self, base_url: str, token: Optional[str] = None, timeout_s: float = 2.0):
        self.base_url = base_url.rstrip("/")
        self.timeout_s = timeout_s
        self.session = requests.Session()
        if token:
            self.session.headers["Authorization"] = f"Bearer {token}"

    def request(self, method: str, path: str, body: Any = None, params: Any = None) -> Any:
        resp = self.session.request(
            method,
            self.base_url + path,
            json=body,
            params=params,
            timeout=self.timeout_s,
        )
        if resp.status_code >= 400:
            try:
                message = resp.json().get("error", resp.text)
            except ValueError:
                message = resp.text
            raise HttpApiError(resp.status_code, message)
        return resp.json()

    def get(self, path: str, params: Any = None) -> Any:
        return self.request("GET", path, params=params)

    def put(self, path: str, body: Any) -> Any:
        return self.request("PUT", path, body=body)

    def post(self, path: str, body: Any = None) -> Any:
        return self.request("POST", path, body=body)

    def close(self) -> None:
        self.session.close()
