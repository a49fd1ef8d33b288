"""Threaded TCP front end for ``AmiService``."""
from __future__ import annotations

import logging
import socketserver
import threading

from .protocol import AmiService

log = logging.getLogger(__name__)


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        service: AmiService = self.server.service
        for raw in self.rfile:
            line = raw.decode("utf-8", errors="replace").strip()
            if not line:
                continue
            reply = service.handle_line(line)
            log.debug("%s -> %s", line[:80], reply[:80])
            self.wfile.write((reply + "\n").encode("utf-8"))
            self.wfile.flush()


class AmiServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, service: AmiService, host: str = "127.0.0.1", port: int = 0):
        super().__init__((host, port), _Handler)
        self.service = service

    @property
    def address(self) -> tuple[str, int]:
        return self.server_address[:2]

    @property
    def url(self) -> str:
        host, port = self.address
        return f"tcp://{host}:{port}"

    def start_background(self) -> threading.Thread:
        t = threading.Thread(target=self.serve_forever, name="ami-server", daemon=True)
        t.start()
        return t
