"""HTTP server speaking the oracle wire protocol.

POST /v1/logprob  {sample_id, sequence, answer_id}   -> {logprob}
POST /v1/answer   {sample_id, sequence, temperature} -> {answer_id}
GET  /v1/health                                      -> {oracle_id, model_name}

Model access is serialized behind a lock (inference is the bottleneck);
protocol errors return structured JSON bodies with matching status codes.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .config import BridgeConfig
from .vlm import SampleStore, make_answer_model

log = logging.getLogger(__name__)


def _oracle_id(config: BridgeConfig, model_name: str) -> str:
    digest = hashlib.sha1(
        f"{model_name}|{config.prompt_mode}|{config.encoder}".encode()
    ).hexdigest()[:12]
    return f"bridge-{digest}"


class OracleServer:
    """Wire-protocol server over a sample store and an answering model."""

    def __init__(self, config: BridgeConfig, sample_root: Path | str,
                 host: str = "127.0.0.1", port: int = 0):
        self.config = config
        self.store = SampleStore(sample_root)
        self.model = make_answer_model(config, self.store)
        self.oracle_id = _oracle_id(config, self.model.model_name)
        self._model_lock = threading.Lock()
        self._httpd = ThreadingHTTPServer((host, port), self._make_handler())
        self._thread: threading.Thread | None = None

    @property
    def endpoint(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def _make_handler(self):
        server = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, fmt, *args):
                log.debug("http: " + fmt, *args)

            def _send(self, code: int, doc: dict) -> None:
                body = json.dumps(doc).encode()
                self.send_response(code)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def _payload(self) -> dict:
                length = int(self.headers.get("Content-Length", 0))
                return json.loads(self.rfile.read(length))

            def do_GET(self):
                if self.path != "/v1/health":
                    self._send(404, {"error": {"code": "no_such_route", "path": self.path}})
                    return
                self._send(200, {
                    "oracle_id": server.oracle_id,
                    "model_name": server.model.model_name,
                })

            def do_POST(self):
                try:
                    payload = self._payload()
                except (ValueError, json.JSONDecodeError):
                    self._send(400, {"error": {"code": "bad_json"}})
                    return
                try:
                    if self.path == "/v1/logprob":
                        with server._model_lock:
                            value = server.model.logprob(
                                str(payload["sample_id"]),
                                payload["sequence"],
                                int(payload["answer_id"]),
                            )
                        self._send(200, {"logprob": value})
                    elif self.path == "/v1/answer":
                        with server._model_lock:
                            value = server.model.sample_answer(
                                str(payload["sample_id"]),
                                payload["sequence"],
                                float(payload.get("temperature", 1.0)),
                            )
                        self._send(200, {"answer_id": value})
                    else:
                        self._send(404, {"error": {"code": "no_such_route", "path": self.path}})
                except KeyError as exc:
                    self._send(404, {"error": {"code": "unknown_sample", "detail": str(exc)}})
                except (TypeError, ValueError) as exc:
                    self._send(400, {"error": {"code": "bad_request", "detail": str(exc)}})
                except Exception as exc:  # model failure (e.g. out of memory)
                    log.exception("model failure")
                    self._send(500, {"error": {"code": "model_failure", "detail": str(exc)}})

        return Handler

    def start(self) -> "OracleServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        log.info("oracle server on %s (model %s)", self.endpoint, self.model.model_name)
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        if self._thread is not None:
            self._thread.join(timeout=5)


def serve_oracle(config: BridgeConfig, sample_root: Path | str,
                 host: str = "127.0.0.1", port: int = 0) -> OracleServer:
    """Start the wire-protocol server in a background thread; returns it."""
    return OracleServer(config, sample_root, host=host, port=port).start()
