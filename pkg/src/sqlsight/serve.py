"""Local HTTP service exposing trained bundles.

Endpoints:
    GET  /health   -> {"status": "ok"}
    GET  /models   -> the loaded bundles' task/kind/size summary
    POST /predict  -> {"statement": ..., "opt_cost_estimate"?: number}

Responses are JSON; errors come back as {"error": message} with a 4xx/5xx
status.  When a UI directory is configured its files are served under /,
which is how the bundled query-composer front end reaches the service from
the same origin.
"""

from __future__ import annotations

import json
import os
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional

from sqlsight.learn.bundle import ModelBundle, payload_json, predict_payload

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".mjs": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json",
    ".map": "application/json",
    ".svg": "image/svg+xml",
    ".png": "image/png",
    ".ico": "image/x-icon",
}


class _Handler(BaseHTTPRequestHandler):
    server_version = "sqlsight"

    def log_message(self, fmt, *args):  # keep the terminal quiet
        pass

    # -- helpers ---------------------------------------------------------

    def _send(self, status: int, body: bytes, content_type: str) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_json(self, status: int, obj) -> None:
        self._send(status, (json.dumps(obj, sort_keys=True) + "\n").encode("utf-8"),
                   "application/json")

    def _send_error_json(self, status: int, message: str) -> None:
        self._send_json(status, {"error": message})

    # -- routes ----------------------------------------------------------

    def do_GET(self):
        path = self.path.split("?", 1)[0]
        if path == "/health":
            self._send_json(200, {"status": "ok"})
            return
        if path == "/models":
            models = [
                {
                    "task": b.task,
                    "model": b.model_kind,
                    "task_type": b.task_type,
                    "vocabulary_size": b.metrics.get("vocabulary_size", 0),
                    "parameter_count": b.parameter_count(),
                }
                for b in self.server.bundles
            ]
            self._send_json(200, {"models": sorted(models, key=lambda m: m["task"])})
            return
        if self.server.ui_dir:
            self._serve_static(path)
            return
        if path == "/":
            self._send_json(200, {
                "service": "sqlsight",
                "endpoints": ["/health", "/models", "/predict"],
            })
            return
        self._send_error_json(404, f"no such path: {path}")

    def do_POST(self):
        path = self.path.split("?", 1)[0]
        if path != "/predict":
            self._send_error_json(404, f"no such path: {path}")
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            raw = self.rfile.read(length) if length else b""
            body = json.loads(raw.decode("utf-8")) if raw else {}
        except (ValueError, UnicodeDecodeError):
            self._send_error_json(400, "request body must be JSON")
            return
        statement = body.get("statement")
        if not isinstance(statement, str) or not statement.strip():
            self._send_error_json(400, "a non-empty 'statement' string is required")
            return
        opt_cost = body.get("opt_cost_estimate")
        if opt_cost is not None and not isinstance(opt_cost, (int, float)):
            self._send_error_json(400, "opt_cost_estimate must be a number")
            return
        try:
            payload = predict_payload(self.server.bundles, statement, opt_cost)
        except ValueError as exc:
            self._send_error_json(400, str(exc))
            return
        except Exception as exc:  # pragma: no cover - defensive
            self._send_error_json(500, f"prediction failed: {exc}")
            return
        self._send(200, payload_json(payload).encode("utf-8"), "application/json")

    def _serve_static(self, path: str) -> None:
        rel = path.lstrip("/") or "index.html"
        root = os.path.realpath(self.server.ui_dir)
        full = os.path.realpath(os.path.join(root, rel))
        if not (full == root or full.startswith(root + os.sep)):
            self._send_error_json(404, "not found")
            return
        if os.path.isdir(full):
            full = os.path.join(full, "index.html")
        if not os.path.isfile(full):
            self._send_error_json(404, f"no such path: {path}")
            return
        ext = os.path.splitext(full)[1].lower()
        ctype = _CONTENT_TYPES.get(ext, "application/octet-stream")
        with open(full, "rb") as fh:
            self._send(200, fh.read(), ctype)


class PredictionServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, bind: tuple[str, int], bundles: list[ModelBundle],
                 ui_dir: Optional[str] = None):
        super().__init__(bind, _Handler)
        self.bundles = bundles
        self.ui_dir = ui_dir


def run_server(
    host: str,
    port: int,
    bundles: list[ModelBundle],
    ui_dir: Optional[str] = None,
    ready: Optional[threading.Event] = None,
) -> None:
    server = PredictionServer((host, port), bundles, ui_dir)
    if ready is not None:
        ready.set()
    try:
        server.serve_forever()
    finally:
        server.server_close()
