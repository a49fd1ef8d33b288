"""Logic-locked IP model: an FSM that only reaches its functional mode after
an exact sequence of key frames."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from .bitvec import BitVec

DEFAULT_KEY_BITS = 512


class IpMode(str, Enum):
    LOCKED = "Locked"
    TRANSITION = "Transition"
    UNLOCKED = "Unlocked"


@dataclass(frozen=True)
class UnlockVector:
    ip_id: str
    key_bits: BitVec

    def __post_init__(self):
        if self.key_bits.width <= 0:
            raise ValueError("unlock vector must be non-empty")


def fragment_key(key: UnlockVector, input_width: int) -> list[BitVec]:
    """Split the key into input-width frames; the last frame is zero-padded on the right."""
    if input_width <= 0:
        raise ValueError("input_width must be positive")
    frames = key.key_bits.segments(input_width)
    frames[-1] = frames[-1].pad_right(input_width)
    return frames


def reassemble(frames: list[BitVec], key_len: int) -> BitVec:
    out = BitVec(0, 0)
    for f in frames:
        out = out.concat(f)
    return out.slice(0, key_len)


FUNCTIONAL_MODELS: dict[str, Callable[[int, int], int]] = {
    "identity": lambda x, w: x,
    "invert": lambda x, w: x ^ ((1 << w) - 1),
    "increment": lambda x, w: (x + 1) % (1 << w),
}


@dataclass
class LockedIpModel:
    """Obfuscated IP. ``step`` yields real outputs only while unlocked.

    While locked, outputs are a keyed bijection of the input, derived from the
    unlock path, so they are deterministic but unrelated to the functional model.
    """

    ip_id: str
    input_width: int
    unlock_path: list[BitVec]
    functional_model: str = "identity"
    decoy_states: int = 3
    progress: int = 0

    def __post_init__(self):
        if not self.unlock_path:
            raise ValueError("unlock path must contain at least one frame")
        if any(f.width != self.input_width for f in self.unlock_path):
            raise ValueError("frame width must equal input width")
        if self.functional_model not in FUNCTIONAL_MODELS:
            raise ValueError(f"unknown functional model {self.functional_model!r}")
        seed = hashlib.sha256(
            b"scramble\x00" + self.ip_id.encode() + b"".join(f.to_bytes() for f in self.unlock_path)
        ).digest()
        mask = (1 << self.input_width) - 1
        self._mul = (int.from_bytes(seed[:16], "big") | 1) & mask or 1
        self._pre = int.from_bytes(seed[16:24], "big") & mask
        self._post = int.from_bytes(seed[24:], "big") & mask

    @classmethod
    def from_key(cls, key: UnlockVector, input_width: int, **kw) -> "LockedIpModel":
        return cls(key.ip_id, input_width, fragment_key(key, input_width), **kw)

    @property
    def mode(self) -> IpMode:
        if self.progress == len(self.unlock_path):
            return IpMode.UNLOCKED
        return IpMode.TRANSITION if self.progress else IpMode.LOCKED

    def apply_frame(self, frame: BitVec) -> IpMode:
        if self.mode is IpMode.UNLOCKED:
            return self.mode
        if frame == self.unlock_path[self.progress]:
            self.progress += 1
        else:
            self.progress = 0
        return self.mode

    def relock(self) -> IpMode:
        self.progress = 0
        return self.mode

    def functional(self, x: int) -> int:
        return FUNCTIONAL_MODELS[self.functional_model](x, self.input_width)

    def scramble(self, x: int) -> int:
        mask = (1 << self.input_width) - 1
        return (((x ^ self._pre) * self._mul) + self._post) & mask

    def step(self, x: int) -> int:
        if not 0 <= x < 1 << self.input_width:
            raise ValueError("input does not fit the IP input width")
        if self.mode is IpMode.UNLOCKED:
            return self.functional(x)
        return self.scramble(x)
