"""Independent reference implementations used only by the tests.

None of these import the code under test's algorithms; they work from the
code's definition (parity-check rows) or call external tools.
"""
from __future__ import annotations

import itertools
import shutil
import subprocess

# codeword positions 1..21 are Hamming positions, position 0 is the overall parity bit
CHECK_POS = [1, 2, 4, 8, 16]
DATA_POS = [p for p in range(1, 22) if p not in CHECK_POS]


def _word(data: int, parity: int) -> list[int]:
    """22-entry bit list indexed by position; parity is c1 c2 c4 c8 c16 overall (MSB first)."""
    w = [0] * 22
    for j, p in enumerate(DATA_POS):
        w[p] = (data >> (15 - j)) & 1
    for k, p in enumerate(CHECK_POS):
        w[p] = (parity >> (5 - k)) & 1
    w[0] = parity & 1
    return w


def _unword(w: list[int]) -> tuple[int, int]:
    data = 0
    for p in DATA_POS:
        data = (data << 1) | w[p]
    parity = 0
    for p in CHECK_POS:
        parity = (parity << 1) | w[p]
    return data, (parity << 1) | w[0]


def is_codeword(w: list[int]) -> bool:
    for k in range(5):
        if sum(w[p] for p in range(1, 22) if (p >> k) & 1) % 2:
            return False
    return sum(w) % 2 == 0


def brute_parity(data: int) -> int:
    """The unique 6-bit parity making (data, parity) a codeword, found by enumeration."""
    hits = [p for p in range(64) if is_codeword(_word(data, p))]
    assert len(hits) == 1
    return hits[0]


def brute_decode(data: int, parity: int):
    """Bounded-distance decoding: data of the codeword within distance 1, else None."""
    w = _word(data, parity)
    if is_codeword(w):
        return data
    for i in range(22):
        v = list(w)
        v[i] ^= 1
        if is_codeword(v):
            return _unword(v)[0]
    return None


def min_distance_sample(datas) -> int:
    words = [_word(d, brute_parity(d)) for d in datas]
    return min(sum(a != b for a, b in zip(x, y)) for x, y in itertools.combinations(words, 2))


def have(tool: str) -> bool:
    return shutil.which(tool) is not None


def openssl_aes256_ctr(key: bytes, nonce: bytes, data: bytes) -> bytes:
    out = subprocess.run(
        ["openssl", "enc", "-aes-256-ctr", "-K", key.hex(), "-iv", nonce.hex(), "-nosalt"],
        input=data, capture_output=True, check=True,
    )
    return out.stdout


def sha256sum(data: bytes) -> str:
    out = subprocess.run(["sha256sum"], input=data, capture_output=True, check=True)
    return out.stdout.split()[0].decode()


def lerp(points, x):
    """Piecewise-linear interpolation written out longhand."""
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        if x0 <= x <= x1:
            return y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    raise ValueError(x)
