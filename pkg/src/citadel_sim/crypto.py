"""Sealed envelopes for assets leaving the enclave: AES-256-CTR plus a
SHA-256 digest of the plaintext checked after decryption."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

KEY_BYTES = 32
NONCE_BYTES = 16


class IntegrityFailure(Exception):
    pass


@dataclass(frozen=True)
class SecureEnvelope:
    nonce: bytes
    ciphertext: bytes
    digest: bytes

    def to_dict(self) -> dict[str, str]:
        return {"nonce": self.nonce.hex(), "ciphertext": self.ciphertext.hex(), "digest": self.digest.hex()}

    @classmethod
    def from_dict(cls, d: dict) -> "SecureEnvelope":
        try:
            env = cls(bytes.fromhex(d["nonce"]), bytes.fromhex(d["ciphertext"]), bytes.fromhex(d["digest"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise IntegrityFailure(f"malformed envelope: {exc}") from None
        if len(env.nonce) != NONCE_BYTES or len(env.digest) != 32:
            raise IntegrityFailure("malformed envelope")
        return env


def _ctr(key: bytes, nonce: bytes, data: bytes) -> bytes:
    if len(key) != KEY_BYTES:
        raise ValueError("comm key must be 256 bits")
    if len(nonce) != NONCE_BYTES:
        raise ValueError("nonce must be 128 bits")
    enc = Cipher(algorithms.AES(key), modes.CTR(nonce)).encryptor()
    return enc.update(data) + enc.finalize()


def seal_asset(plaintext: bytes, comm_key: bytes, nonce: bytes) -> SecureEnvelope:
    return SecureEnvelope(nonce, _ctr(comm_key, nonce, plaintext), hashlib.sha256(plaintext).digest())


def open_envelope(env: SecureEnvelope, comm_key: bytes) -> bytes:
    plaintext = _ctr(comm_key, env.nonce, env.ciphertext)
    if hashlib.sha256(plaintext).digest() != env.digest:
        raise IntegrityFailure("digest mismatch")
    return plaintext


def chip_handle(chip_id: bytes) -> str:
    """Public lookup handle for a chip; the raw ChipID never travels in clear."""
    return hashlib.sha256(b"citadel-chip-handle\x00" + chip_id).hexdigest()
