"""Operator-facing HTTP JSON API for one edge runtime.

Stdlib-only server (threading HTTP server + SSE over a chunked response).
Routes are documented in docs/edge-api.md. All responses carry permissive
CORS headers so a browser dashboard served from another origin can talk to
the edge directly.
"""

from __future__ import annotations

import queue
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from .. import jsoncanon
from ..domain import (
    BackpressureError,
    ContractViolation,
    NotReadyError,
    Observation,
)

SSE_KEEPALIVE_SECS = 15.0


class EdgeApiServer:
    def __init__(self, runtime, host: str = "127.0.0.1", port: int = 0):
        self.runtime = runtime
        self._subscribers: list = []
        self._sub_lock = threading.Lock()
        runtime.subscribe_alerts(self._broadcast)
        handler = _build_handler(self)
        self.httpd = ThreadingHTTPServer((host, port), handler)
        self.httpd.daemon_threads = True
        self.host, self.port = self.httpd.server_address[:2]
        self._thread: threading.Thread | None = None

    @property
    def base_url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def start(self) -> None:
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5.0)

    def _broadcast(self, alert) -> None:
        with self._sub_lock:
            subscribers = list(self._subscribers)
        for q in subscribers:
            q.put(alert.to_dict())

    def subscribe(self) -> queue.Queue:
        q: queue.Queue = queue.Queue()
        with self._sub_lock:
            self._subscribers.append(q)
        return q

    def unsubscribe(self, q: queue.Queue) -> None:
        with self._sub_lock:
            if q in self._subscribers:
                self._subscribers.remove(q)


def _build_handler(server: EdgeApiServer):
    runtime = server.runtime

    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):  # keep test output quiet
            pass

        # -- plumbing ----------------------------------------------------

        def _cors(self) -> None:
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")

        def _json(self, status: int, doc: dict) -> None:
            body = jsoncanon.dumps_bytes(doc)
            self.send_response(status)
            self._cors()
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _error(self, status: int, code: str, detail: str) -> None:
            self._json(status, {"error": {"code": code, "detail": detail}})

        def _body(self) -> dict:
            length = int(self.headers.get("Content-Length", "0"))
            raw = self.rfile.read(length) if length else b""
            doc = jsoncanon.loads(raw) if raw else {}
            if not isinstance(doc, dict):
                raise ValueError("body must be a JSON object")
            return doc

        # -- methods -------------------------------------------------------

        def do_OPTIONS(self):
            self.send_response(204)
            self._cors()
            self.send_header("Content-Length", "0")
            self.end_headers()

        def do_GET(self):
            url = urlparse(self.path)
            parts = [p for p in url.path.split("/") if p]
            try:
                if parts == ["v1", "alerts"]:
                    params = parse_qs(url.query)
                    since = int(params.get("since_ms", ["-1"])[0])
                    self._json(200, {"alerts": runtime.list_alerts(since)})
                elif parts[:2] == ["v1", "observations"] and len(parts) == 3:
                    stored = runtime.get_observation(parts[2])
                    if stored is None:
                        self._error(404, "not_found", f"no observation {parts[2]}")
                        return
                    obs, diagnosis = stored
                    self._json(200, {"observation": obs.to_dict(),
                                     "diagnosis": diagnosis.to_dict()})
                elif parts == ["v1", "status"]:
                    self._json(200, runtime.status())
                elif parts == ["v1", "commands"]:
                    self._json(200, {"commands": runtime.list_commands()})
                elif parts == ["v1", "events"]:
                    self._serve_events()
                else:
                    self._error(404, "not_found", f"no route {url.path}")
            except (BrokenPipeError, ConnectionResetError):
                pass
            except ValueError as exc:
                self._error(400, "bad_request", str(exc))

        def do_POST(self):
            url = urlparse(self.path)
            parts = [p for p in url.path.split("/") if p]
            try:
                if parts == ["v1", "query"]:
                    self._post_query()
                elif (parts[:2] == ["v1", "commands"] and len(parts) == 4
                        and parts[3] in ("approve", "reject")):
                    self._post_command(parts[2], parts[3] == "approve")
                elif parts == ["v1", "observations"]:
                    self._post_observation()
                else:
                    self._error(404, "not_found", f"no route {url.path}")
            except (BrokenPipeError, ConnectionResetError):
                pass

        # -- route bodies ----------------------------------------------

        def _post_query(self):
            try:
                doc = self._body()
                text = doc.get("text")
                if not isinstance(text, str) or not text:
                    raise ValueError("field 'text' must be a non-empty string")
                obs_id = doc.get("obs_id")
                if obs_id is not None and not isinstance(obs_id, str):
                    raise ValueError("field 'obs_id' must be a string")
            except ValueError as exc:
                self._error(400, "bad_request", str(exc))
                return
            try:
                self._json(200, runtime.query(text, obs_id))
            except KeyError:
                self._error(404, "not_found", f"no observation {obs_id}")
            except NotReadyError as exc:
                self._error(503, "not_ready", str(exc))

        def _post_command(self, command_id: str, approve: bool):
            try:
                command = runtime.decide_command(command_id, approve)
            except KeyError:
                self._error(404, "not_found", f"no command {command_id}")
                return
            except ContractViolation as exc:
                self._error(409, "conflict", str(exc))
                return
            self._json(200, {"command": command.to_dict()})

        def _post_observation(self):
            try:
                doc = self._body()
                obs = Observation.from_dict(doc)
            except (ValueError, KeyError, TypeError, ContractViolation) as exc:
                self._error(400, "bad_request", f"not a valid observation: {exc}")
                return
            try:
                runtime.ingest(obs)
            except BackpressureError as exc:
                self._error(429, "backpressure", str(exc))
                return
            self._json(202, {"queued": True, "obs_id": obs.obs_id})

        def _serve_events(self):
            q = server.subscribe()
            try:
                self.send_response(200)
                self._cors()
                self.send_header("Content-Type", "text/event-stream")
                self.send_header("Cache-Control", "no-cache")
                self.end_headers()
                self.wfile.write(b": connected\n\n")
                self.wfile.flush()
                while True:
                    try:
                        alert = q.get(timeout=SSE_KEEPALIVE_SECS)
                    except queue.Empty:
                        self.wfile.write(b": keepalive\n\n")
                        self.wfile.flush()
                        continue
                    data = jsoncanon.dumps(alert)
                    self.wfile.write(f"event: alert\ndata: {data}\n\n".encode("utf-8"))
                    self.wfile.flush()
            except (BrokenPipeError, ConnectionResetError, OSError):
                pass
            finally:
                server.unsubscribe(q)

    return Handler
