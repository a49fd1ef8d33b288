"""Client side of the AMI protocol, usable in-process or over TCP.

Both transports exchange the same encoded lines, so transcripts do not depend
on where the AMI runs.
"""
from __future__ import annotations

import json
import socket
from urllib.parse import urlparse

from ..transcript import Channel, Transcript
from .protocol import AmiService, dumps

AMI = "ami"


class AmiUnreachable(ConnectionError):
    pass


class InProcessTransport:
    def __init__(self, service: AmiService):
        self.service = service
        self.online = True

    def exchange(self, line: str) -> str:
        if not self.online:
            raise AmiUnreachable("AMI offline")
        return self.service.handle_line(line)

    def close(self) -> None:
        pass


class TcpTransport:
    def __init__(self, host: str, port: int, timeout: float = 10.0):
        self.host = host
        self.port = port
        self.timeout = timeout
        self._sock: socket.socket | None = None
        self._reader = None

    @classmethod
    def from_url(cls, url: str) -> "TcpTransport":
        u = urlparse(url)
        if u.scheme != "tcp" or not u.hostname or not u.port:
            raise ValueError(f"expected tcp://host:port, got {url!r}")
        return cls(u.hostname, u.port)

    def _connect(self) -> None:
        try:
            self._sock = socket.create_connection((self.host, self.port), timeout=self.timeout)
        except OSError as exc:
            raise AmiUnreachable(str(exc)) from None
        self._reader = self._sock.makefile("r", encoding="utf-8", newline="\n")

    def exchange(self, line: str) -> str:
        if self._sock is None:
            self._connect()
        try:
            self._sock.sendall((line + "\n").encode("utf-8"))
            reply = self._reader.readline()
        except OSError as exc:
            self.close()
            raise AmiUnreachable(str(exc)) from None
        if not reply:
            self.close()
            raise AmiUnreachable("connection closed by AMI")
        return reply.rstrip("\n")

    def close(self) -> None:
        if self._sock is not None:
            self._reader.close()
            self._sock.close()
            self._sock = None


class AmiClient:
    """Sends requests on behalf of one party and logs both directions on AmiNet."""

    def __init__(self, transport, transcript: Transcript | None = None, endpoint: str = "citadel"):
        self.transport = transport
        self.transcript = transcript
        self.endpoint = endpoint

    def as_party(self, endpoint: str) -> "AmiClient":
        return AmiClient(self.transport, self.transcript, endpoint)

    def request(self, msg: dict) -> dict:
        line = dumps(msg)
        if self.transcript is not None:
            self.transcript.record(Channel.AMI_NET, self.endpoint, AMI, msg["type"], line.encode())
        reply_line = self.transport.exchange(line)
        reply = json.loads(reply_line)
        if self.transcript is not None:
            self.transcript.record(Channel.AMI_NET, AMI, self.endpoint, reply.get("type", "?"), reply_line.encode())
        return reply

    def send_raw(self, line: str) -> dict:
        """Replay a captured line verbatim."""
        if self.transcript is not None:
            self.transcript.record(Channel.AMI_NET, self.endpoint, AMI, "replay", line.encode())
        reply_line = self.transport.exchange(line)
        if self.transcript is not None:
            reply = json.loads(reply_line)
            self.transcript.record(Channel.AMI_NET, AMI, self.endpoint, reply.get("type", "?"), reply_line.encode())
        return json.loads(reply_line)
