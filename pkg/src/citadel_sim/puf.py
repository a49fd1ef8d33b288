"""Memory-element PUF model, the PUF control module and ChipID derivation.

Each response bit is the top bit of HMAC-SHA256 keyed by the die's entropy
over ``(ip_id, bit index)``; measurement noise flips bits independently.

Error correction works on 16-bit segments with an extended Hamming
SEC-DED(22,16) code: a Hamming(21,16) code (check bits at codeword positions
1, 2, 4, 8, 16, data bits at the remaining positions 3..21) plus one overall
parity bit. The 6 parity bits of a segment are emitted in the order
``c1 c2 c4 c8 c16 overall``.
"""
from __future__ import annotations

import hashlib
import hmac
import random
from dataclasses import dataclass, field
from enum import Enum

from .bitvec import BitVec, popcount

SEGMENT_BITS = 16
PARITY_BITS = 6
DEFAULT_WIDTH = 256
DEFAULT_BER = 0.001

CHECK_POSITIONS = (1, 2, 4, 8, 16)
DATA_POSITIONS = tuple(p for p in range(1, 22) if p not in CHECK_POSITIONS)
assert len(DATA_POSITIONS) == SEGMENT_BITS


class UncorrectableError(Exception):
    """More errors in a segment than SEC-DED can repair."""

    def __init__(self, segment: int):
        super().__init__(f"uncorrectable error in segment {segment}")
        self.segment = segment


class UnknownIpError(KeyError):
    pass


class WidthMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class PufInstance:
    ip_id: str
    chip_entropy: bytes
    width: int = DEFAULT_WIDTH
    ber: float = DEFAULT_BER

    def __post_init__(self):
        if self.width <= 0 or self.width % SEGMENT_BITS:
            raise ValueError(f"PUF width must be a positive multiple of {SEGMENT_BITS}")
        if not 0.0 <= self.ber < 0.5:
            raise ValueError("ber must be in [0, 0.5)")
        if len(self.chip_entropy) != 32:
            raise ValueError("chip_entropy must be 256 bits")


@dataclass(frozen=True)
class PufResponse:
    ip_id: str
    bits: BitVec

    @property
    def width(self) -> int:
        return self.bits.width

    def to_bytes(self) -> bytes:
        return self.bits.to_bytes()


class AuthResult(str, Enum):
    PASS = "Pass"
    FAIL = "Fail"


@dataclass(frozen=True)
class ChipIdentity:
    digest: bytes

    def hex(self) -> str:
        return self.digest.hex()


def ideal_response(puf: PufInstance) -> PufResponse:
    """Noise-free response: the die's fingerprint for this IP."""
    tag = puf.ip_id.encode() + b"\x00"
    value = 0
    for i in range(puf.width):
        mac = hmac.new(puf.chip_entropy, tag + i.to_bytes(4, "big"), hashlib.sha256).digest()
        value = (value << 1) | (mac[0] >> 7)
    return PufResponse(puf.ip_id, BitVec(value, puf.width))


def sample_response(puf: PufInstance, rng_seed: int) -> PufResponse:
    ideal = ideal_response(puf)
    if puf.ber == 0:
        return ideal
    rng = random.Random(rng_seed)
    flips = [i for i in range(puf.width) if rng.random() < puf.ber]
    return PufResponse(puf.ip_id, ideal.bits.flip(*flips))


# -- SEC-DED(22,16) -------------------------------------------------------

def _codeword(data: int) -> int:
    """Place 16 data bits (MSB first) at their Hamming positions; bit p of the result is position p."""
    word = 0
    for j, pos in enumerate(DATA_POSITIONS):
        if (data >> (SEGMENT_BITS - 1 - j)) & 1:
            word |= 1 << pos
    return word


def _syndrome(word: int) -> int:
    s = 0
    p = 1
    while word >> p:
        if (word >> p) & 1:
            s ^= p
        p += 1
    return s


def encode_segment(data: int) -> int:
    """6 parity bits for one 16-bit segment, as an int (c1 is the MSB)."""
    word = _codeword(data)
    syn = _syndrome(word)
    checks = [(syn >> k) & 1 for k in range(5)]
    for k, c in enumerate(checks):
        if c:
            word |= 1 << CHECK_POSITIONS[k]
    overall = popcount(word) & 1
    out = 0
    for c in checks + [overall]:
        out = (out << 1) | c
    return out


def decode_segment(data: int, parity: int) -> int:
    """Corrected 16-bit data, or raise ValueError on a detected uncorrectable pattern."""
    word = _codeword(data)
    for k in range(5):
        if (parity >> (5 - k)) & 1:
            word |= 1 << CHECK_POSITIONS[k]
    overall_bit = parity & 1
    syn = _syndrome(word)
    odd = (popcount(word) + overall_bit) & 1
    if not odd:
        if syn == 0:
            return data
        raise ValueError("double error")
    if syn == 0:
        return data  # the overall parity bit itself flipped
    if syn > 21:
        raise ValueError("syndrome outside codeword")
    word ^= 1 << syn
    out = 0
    for pos in DATA_POSITIONS:
        out = (out << 1) | ((word >> pos) & 1)
    return out


def encode_parity(expected: PufResponse) -> BitVec:
    if expected.width % SEGMENT_BITS:
        raise WidthMismatchError("response width not a multiple of 16")
    out = BitVec(0, 0)
    for seg in expected.bits.segments(SEGMENT_BITS):
        out = out.concat(BitVec(encode_segment(seg.value), PARITY_BITS))
    return out


def decode_correct(noisy: PufResponse, parity: BitVec) -> PufResponse:
    nseg = noisy.width // SEGMENT_BITS
    if noisy.width % SEGMENT_BITS or parity.width != nseg * PARITY_BITS:
        raise WidthMismatchError("parity does not match response width")
    value = 0
    psegs = parity.segments(PARITY_BITS)
    for i, seg in enumerate(noisy.bits.segments(SEGMENT_BITS)):
        try:
            fixed = decode_segment(seg.value, psegs[i].value)
        except ValueError:
            raise UncorrectableError(i) from None
        value = (value << SEGMENT_BITS) | fixed
    return PufResponse(noisy.ip_id, BitVec(value, noisy.width))


# -- PUF control module ---------------------------------------------------

@dataclass(frozen=True)
class PcmEntry:
    control_signal: BitVec
    expected: PufResponse
    parity: BitVec


@dataclass
class PcmState:
    entries: dict[str, PcmEntry] = field(default_factory=dict)

    def enroll(self, expected: PufResponse, control_signal: BitVec | None = None) -> PcmEntry:
        if expected.ip_id in self.entries:
            raise ValueError(f"IP {expected.ip_id!r} already enrolled")
        entry = PcmEntry(
            control_signal if control_signal is not None else BitVec(1, 1),
            expected,
            encode_parity(expected),
        )
        self.entries[expected.ip_id] = entry
        return entry

    def clear(self) -> None:
        self.entries.clear()


def pcm_authenticate(pcm: PcmState, ip_id: str, received: PufResponse) -> AuthResult:
    try:
        entry = pcm.entries[ip_id]
    except KeyError:
        raise UnknownIpError(ip_id) from None
    if received.width != entry.expected.width:
        return AuthResult.FAIL
    try:
        corrected = decode_correct(received, entry.parity)
    except UncorrectableError:
        return AuthResult.FAIL
    return AuthResult.PASS if corrected.bits == entry.expected.bits else AuthResult.FAIL


def xor_fold(responses: list[PufResponse]) -> BitVec:
    if not responses:
        raise ValueError("need at least one response")
    width = responses[0].width
    acc = BitVec.zeros(width)
    for r in responses:
        if r.width != width:
            raise WidthMismatchError(f"{r.ip_id}: width {r.width} != {width}")
        acc = acc ^ r.bits
    return acc


def compute_chip_id(responses: list[PufResponse]) -> ChipIdentity:
    return ChipIdentity(hashlib.sha256(xor_fold(responses).to_bytes()).digest())


def majority_vote(samples: list[PufResponse]) -> PufResponse:
    """Bitwise majority over repeated reads; used to fix golden responses at enrollment."""
    width = samples[0].width
    counts = [0] * width
    for s in samples:
        v = s.bits.value
        for i in range(width):
            counts[i] += (v >> (width - 1 - i)) & 1
    half = len(samples) / 2
    return PufResponse(samples[0].ip_id, BitVec.from_bits(c > half for c in counts))
