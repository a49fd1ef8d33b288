"""Fixed-width bit vectors.

Bit 0 is the most significant bit of byte 0, so ``to_bytes`` is the plain
big-endian encoding of the integer value.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence


def popcount(x: int) -> int:
    return bin(x).count("1")


@dataclass(frozen=True)
class BitVec:
    value: int
    width: int

    def __post_init__(self):
        if self.width < 0:
            raise ValueError("width must be non-negative")
        if self.value < 0 or self.value >> self.width:
            raise ValueError(f"value does not fit in {self.width} bits")

    @classmethod
    def zeros(cls, width: int) -> "BitVec":
        return cls(0, width)

    @classmethod
    def from_bits(cls, bits: Iterable[int]) -> "BitVec":
        value = 0
        width = 0
        for b in bits:
            value = (value << 1) | (1 if b else 0)
            width += 1
        return cls(value, width)

    @classmethod
    def from_bytes(cls, data: bytes, width: int | None = None) -> "BitVec":
        full = len(data) * 8
        if width is None:
            width = full
        if width > full:
            raise ValueError("not enough bytes for width")
        return cls(int.from_bytes(data, "big") >> (full - width), width)

    @classmethod
    def from_hex(cls, text: str, width: int) -> "BitVec":
        return cls.from_bytes(bytes.fromhex(text), width)

    def bit(self, i: int) -> int:
        if not 0 <= i < self.width:
            raise IndexError(i)
        return (self.value >> (self.width - 1 - i)) & 1

    @property
    def bits(self) -> tuple[int, ...]:
        return tuple(self.bit(i) for i in range(self.width))

    def flip(self, *positions: int) -> "BitVec":
        v = self.value
        for i in positions:
            if not 0 <= i < self.width:
                raise IndexError(i)
            v ^= 1 << (self.width - 1 - i)
        return BitVec(v, self.width)

    def slice(self, start: int, stop: int) -> "BitVec":
        stop = min(stop, self.width)
        n = stop - start
        return BitVec((self.value >> (self.width - stop)) & ((1 << n) - 1), n)

    def pad_right(self, width: int) -> "BitVec":
        if width < self.width:
            raise ValueError("cannot pad to a smaller width")
        return BitVec(self.value << (width - self.width), width)

    def concat(self, other: "BitVec") -> "BitVec":
        return BitVec((self.value << other.width) | other.value, self.width + other.width)

    def segments(self, size: int) -> list["BitVec"]:
        return [self.slice(i, i + size) for i in range(0, self.width, size)]

    def to_bytes(self) -> bytes:
        """Big-endian bytes; a width that is not a multiple of 8 is zero-padded on the right."""
        nbytes = (self.width + 7) // 8
        return (self.value << (nbytes * 8 - self.width)).to_bytes(nbytes, "big")

    def hex(self) -> str:
        return self.to_bytes().hex()

    def hamming(self, other: "BitVec") -> int:
        if other.width != self.width:
            raise ValueError("width mismatch")
        return popcount(self.value ^ other.value)

    def __xor__(self, other: "BitVec") -> "BitVec":
        if other.width != self.width:
            raise ValueError("width mismatch")
        return BitVec(self.value ^ other.value, self.width)

    def __len__(self) -> int:
        return self.width


def concat_all(parts: Sequence[BitVec]) -> BitVec:
    out = BitVec(0, 0)
    for p in parts:
        out = out.concat(p)
    return out
