"""Security wrappers around host IPs and the shared system bus they sit on."""
from __future__ import annotations

from dataclasses import dataclass, field

from .bitvec import BitVec
from .obfuscation import IpMode, LockedIpModel
from .puf import PufInstance, PufResponse, sample_response
from .transcript import ENCLAVE, HOST, Channel, Transcript

BUFFER_BYTES = 64


class WrapperError(Exception):
    pass


class BusRejected(WrapperError):
    """Access to an IP held in reset."""


class UnmappedAddress(WrapperError, KeyError):
    pass


class NoPufUnit(WrapperError):
    pass


class NoKeyApplier(WrapperError):
    pass


@dataclass
class SecurityWrapper:
    ip_id: str
    port_map: dict[int, str] = field(default_factory=dict)
    puf: PufInstance | None = None
    key_applier: LockedIpModel | None = None
    segment: int = 0
    reset_gated: bool = False
    registers: dict[str, int] = field(default_factory=dict)
    buffer: bytearray = field(default_factory=bytearray)
    bus: "SystemBus | None" = field(default=None, repr=False)

    def __post_init__(self):
        for name in self.port_map.values():
            self.registers.setdefault(name, 0)

    # reset gating
    def gate_reset(self) -> None:
        self.reset_gated = True

    def release_reset(self) -> None:
        self.reset_gated = False

    def _check(self, src: str, kind: str) -> None:
        if self.reset_gated:
            self.bus.record(src, self.ip_id, f"{kind}:Rejected")
            raise BusRejected(f"{self.ip_id} is held in reset")

    def bus_read(self, address: int, src: str = HOST) -> int:
        if address not in self.port_map:
            raise UnmappedAddress(address)
        self._check(src, "read")
        value = self.registers[self.port_map[address]]
        self.bus.record(self.ip_id, src, "read", value.to_bytes(8, "big"))
        return value

    def bus_write(self, address: int, value: int, src: str = HOST) -> None:
        if address not in self.port_map:
            raise UnmappedAddress(address)
        self._check(src, "write")
        self.registers[self.port_map[address]] = value
        self.bus.record(src, self.ip_id, "write", value.to_bytes(8, "big"))

    def extract_puf_signature(self, rng_seed: int) -> PufResponse:
        if self.puf is None:
            raise NoPufUnit(self.ip_id)
        self._check(ENCLAVE, "puf")
        resp = sample_response(self.puf, rng_seed)
        data = resp.to_bytes()
        for off in range(0, len(data), BUFFER_BYTES):
            self.buffer[:] = data[off:off + BUFFER_BYTES]
            self.bus.record(self.ip_id, ENCLAVE, "puf_signature", bytes(self.buffer), plaintext=True)
        self.buffer.clear()
        return resp

    def apply_unlock_vector(self, frames: list[BitVec]) -> IpMode:
        if self.key_applier is None:
            raise NoKeyApplier(self.ip_id)
        self._check(ENCLAVE, "key")
        mode = self.key_applier.mode
        for frame in frames:
            self.bus.record(ENCLAVE, self.ip_id, "key_frame", frame.to_bytes(), plaintext=True)
            mode = self.key_applier.apply_frame(frame)
        return mode


@dataclass
class SystemBus:
    """Bus fabric that timestamps transfers and notes who could observe them.

    An observer is any ungated wrapper sharing a segment with one endpoint, plus
    the host processor once released.
    """

    transcript: Transcript
    wrappers: dict[str, SecurityWrapper] = field(default_factory=dict)
    host_running: bool = False

    def attach(self, w: SecurityWrapper) -> SecurityWrapper:
        if w.ip_id in self.wrappers:
            raise ValueError(f"duplicate IP {w.ip_id!r}")
        w.bus = self
        self.wrappers[w.ip_id] = w
        return w

    def _segment(self, name: str) -> int | None:
        w = self.wrappers.get(name)
        return None if w is None else w.segment

    def observers(self, src: str, dst: str) -> list[str]:
        segs = {self._segment(src), self._segment(dst)}
        # the enclave and host sit on the main interconnect and see every segment
        everywhere = None in segs
        out = [
            w.ip_id for w in self.wrappers.values()
            if not w.reset_gated and (everywhere or w.segment in segs)
        ]
        if self.host_running:
            out.append(HOST)
        return out

    def record(self, src: str, dst: str, kind: str, payload: bytes = b"", plaintext: bool = False):
        return self.transcript.record(
            Channel.SYSTEM_BUS, src, dst, kind, payload, plaintext, self.observers(src, dst)
        )

    def gate_all(self) -> None:
        for w in self.wrappers.values():
            w.gate_reset()

    def release_all(self) -> None:
        for w in self.wrappers.values():
            w.release_reset()
