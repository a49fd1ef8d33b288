"""Append-only event log shared by every actor in a scenario run."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator


class Channel(str, Enum):
    SYSTEM_BUS = "SystemBus"
    BOOT_IFACE = "BootIface"
    AMI_NET = "AmiNet"


ENCLAVE = "citadel"
HOST = "host"


@dataclass(frozen=True)
class Event:
    index: int
    timestamp: int
    channel: Channel
    src: str
    dst: str
    kind: str
    payload: bytes = b""
    plaintext: bool = False
    # parties other than src/dst able to see the payload when it was emitted
    observers: tuple[str, ...] = ()

    @property
    def endpoints(self) -> frozenset[str]:
        return frozenset((self.src, self.dst))

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "t": self.timestamp,
            "channel": self.channel.value,
            "src": self.src,
            "dst": self.dst,
            "kind": self.kind,
            "payload": self.payload.hex(),
            "plaintext": self.plaintext,
            "observers": list(self.observers),
        }


@dataclass
class Transcript:
    events: list[Event] = field(default_factory=list)
    clock: int = 0
    # named positions (e.g. phase boundaries, scenario steps) for evidence lookup
    marks: list[tuple[int, str]] = field(default_factory=list)

    def record(
        self,
        channel: Channel,
        src: str,
        dst: str,
        kind: str,
        payload: bytes = b"",
        plaintext: bool = False,
        observers: Iterable[str] = (),
    ) -> Event:
        self.clock += 1
        ev = Event(
            index=len(self.events),
            timestamp=self.clock,
            channel=channel,
            src=src,
            dst=dst,
            kind=kind,
            payload=bytes(payload),
            plaintext=plaintext,
            observers=tuple(sorted(set(observers) - {src, dst})),
        )
        self.events.append(ev)
        return ev

    def mark(self, label: str) -> None:
        self.marks.append((len(self.events), label))

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    def __getitem__(self, i: int) -> Event:
        return self.events[i]

    def since(self, start: int) -> list[Event]:
        return self.events[start:]

    def find(self, kind: str | None = None, channel: Channel | None = None, start: int = 0) -> list[Event]:
        return [
            e for e in self.events[start:]
            if (kind is None or e.kind == kind) and (channel is None or e.channel == channel)
        ]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e.to_dict(), sort_keys=True) + "\n" for e in self.events)

    def write_jsonl(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")


def plaintext_leaks(transcript: Transcript, secrets: Iterable[bytes], min_len: int = 16) -> list[int]:
    """Indices of events that expose any secret to a party that should not see it.

    AmiNet payloads are treated as public. SystemBus payloads count only when some
    party other than the two endpoints could observe them. Secrets are searched
    both raw and as lowercase hex, since the wire protocol hex-encodes binary.
    """
    needles = []
    for s in secrets:
        if len(s) >= min_len:
            needles.append(s)
            needles.append(s.hex().encode())
    leaks = []
    for ev in transcript:
        if ev.channel == Channel.AMI_NET:
            exposed = True
        elif ev.channel == Channel.SYSTEM_BUS:
            exposed = bool(ev.observers)
        else:
            exposed = False
        if exposed and any(n in ev.payload for n in needles):
            leaks.append(ev.index)
    return leaks
