"""In-process mock model endpoint for tests and offline demos.

Serves a chat-completion-shaped API on localhost: POST bodies with
``messages`` come in, ``{"choices": [{"message": {"content": ...}}]}``
goes out.  The reply is produced by a caller-supplied function of
(system, user), so tests can script knowledge-lookup models, planted
empty/garbage responses, or fault injection without any network.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable

ReplyFn = Callable[[str, str], str]


class MockModelServer:
    """Context manager running a scripted model endpoint on a free port."""

    def __init__(self, reply_fn: ReplyFn):
        self.reply_fn = reply_fn
        self._server: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        assert self._server is not None, "server not started"
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}/v1/chat/completions"

    def __enter__(self) -> "MockModelServer":
        reply_fn = self.reply_fn

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):  # noqa: N802 - http.server API
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length) or b"{}")
                system = ""
                user = ""
                for message in body.get("messages", []):
                    if message.get("role") == "system":
                        system = message.get("content", "")
                    elif message.get("role") == "user":
                        user = message.get("content", "")
                reply = reply_fn(system, user)
                envelope = json.dumps(
                    {"choices": [{"message": {"content": reply}}]}, ensure_ascii=False
                ).encode("utf-8")
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(envelope)))
                self.end_headers()
                self.wfile.write(envelope)

            def log_message(self, *args):  # silence request logging
                pass

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def __exit__(self, *exc) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
