"""Message handling for the AMI wire protocol.

One JSON object per line. Binary values are lowercase hex. After registration a
chip is addressed by its public handle (see ``crypto.chip_handle``); anything
secret travels inside a sealed envelope.

Requests and their replies::

    Session          {session, envelope: comm key under the HSM transport key} -> Ack
    Register         {session, envelope: {chip_id, lifecycle}}   -> RegisterAck {chip} | RegisterReject {reason}
    EnrollAsset      {chip, assets: [{kind, ip, envelope}]}      -> Ack | Denied
    Authenticate     {chip, envelope: {chip_id, lifecycle}}      -> AuthResult {result, status, lifecycle, reason}
    Provision        {chip, envelope: {chip_id, lifecycle}}      -> ProvisionResult {assets} | Denied
    LifecycleUpdate  {chip, to, actor, envelope: {key} sealed under that edge's key} -> Ack | Denied
    Status           {chip}                                      -> Status {status, lifecycle} | Denied

Malformed input yields ``{"type": "Error", "error": ...}``.
"""
from __future__ import annotations

import hashlib
import json
import random

from ..assets import AssetKind
from ..crypto import IntegrityFailure, SecureEnvelope, open_envelope, seal_asset
from ..lifecycle import Actor, LifecycleState
from .ledger import AmiLedger, Denied, NotRegistered


def transport_key_for(seed: int) -> bytes:
    """Key pre-shared between the HSM and the AMI for delivering session keys."""
    return hashlib.sha256(b"citadel-hsm-transport\x00" + seed.to_bytes(8, "big")).digest()


def dumps(msg: dict) -> str:
    return json.dumps(msg, sort_keys=True, separators=(",", ":"))


class ProtocolError(ValueError):
    pass


class AmiService:
    def __init__(self, ledger: AmiLedger | None = None, seed: int = 0, transport_key: bytes | None = None):
        self.ledger = ledger if ledger is not None else AmiLedger()
        self.transport_key = transport_key if transport_key is not None else transport_key_for(seed)
        self.rng = random.Random(hashlib.sha256(b"ami\x00" + seed.to_bytes(8, "big")).digest())

    def handle_line(self, line: str) -> str:
        try:
            msg = json.loads(line)
            if not isinstance(msg, dict):
                raise ProtocolError("message must be a JSON object")
            reply = self.handle(msg)
        except (ValueError, KeyError, TypeError) as exc:
            reply = {"type": "Error", "error": f"{type(exc).__name__}: {exc}"}
        return dumps(reply)

    def handle(self, msg: dict) -> dict:
        kind = msg.get("type")
        handler = getattr(self, f"_on_{kind}", None) if isinstance(kind, str) else None
        if handler is None:
            raise ProtocolError(f"unknown message type {kind!r}")
        try:
            return handler(msg)
        except Denied as d:
            return {"type": "Denied", "reason": d.reason}
        except NotRegistered:
            return {"type": "Denied", "reason": "Unknown"}
        except IntegrityFailure:
            return {"type": "Denied", "reason": "IntegrityFailure"}

    # -- helpers ---------------------------------------------------------
    def _nonce(self) -> bytes:
        with self.ledger.lock:
            return self.rng.randbytes(16)

    def _identity(self, msg: dict):
        rec = self.ledger.by_handle(msg["chip"])
        body = json.loads(open_envelope(SecureEnvelope.from_dict(msg["envelope"]), rec.comm_key))
        if bytes.fromhex(body["chip_id"]) != rec.chip_id:
            raise IntegrityFailure("identity proof does not match record")
        return rec, LifecycleState(body["lifecycle"])

    # -- handlers --------------------------------------------------------
    def _on_Session(self, msg: dict) -> dict:
        key = open_envelope(SecureEnvelope.from_dict(msg["envelope"]), self.transport_key)
        self.ledger.open_session(str(msg["session"]), key)
        return {"type": "Ack"}

    def _on_Register(self, msg: dict) -> dict:
        comm_key = self.ledger.sessions.get(str(msg["session"]))
        if comm_key is None:
            return {"type": "RegisterReject", "reason": "NoSession"}
        try:
            body = json.loads(open_envelope(SecureEnvelope.from_dict(msg["envelope"]), comm_key))
        except IntegrityFailure:
            return {"type": "RegisterReject", "reason": "IntegrityFailure"}
        chip_id = bytes.fromhex(body["chip_id"])
        if len(chip_id) != 32:
            raise ProtocolError("chip_id must be 256 bits")
        if not self.ledger.register_chip(chip_id, LifecycleState(body["lifecycle"]), comm_key):
            return {"type": "RegisterReject", "reason": "AlreadyRegistered"}
        return {"type": "RegisterAck", "chip": self.ledger.get(chip_id).handle}

    def _on_EnrollAsset(self, msg: dict) -> dict:
        rec = self.ledger.by_handle(msg["chip"])
        assets = {}
        for a in msg["assets"]:
            value = open_envelope(SecureEnvelope.from_dict(a["envelope"]), rec.comm_key)
            assets[(AssetKind(a["kind"]), str(a.get("ip", "")))] = value
        self.ledger.enroll_assets(rec.chip_id, assets)
        return {"type": "Ack"}

    def _on_Authenticate(self, msg: dict) -> dict:
        try:
            rec, claim = self._identity(msg)
        except (NotRegistered, IntegrityFailure) as exc:
            reason = "Unknown" if isinstance(exc, NotRegistered) else "IntegrityFailure"
            return {"type": "AuthResult", "result": "Fail", "reason": reason}
        return {
            "type": "AuthResult",
            "result": "Pass",
            "status": rec.status.value,
            "lifecycle": rec.lifecycle.value,
            "reason": "" if claim == rec.lifecycle else "LifecycleMismatch",
        }

    def _on_Provision(self, msg: dict) -> dict:
        try:
            rec, claim = self._identity(msg)
        except NotRegistered:
            raise Denied("Unknown") from None
        assets = self.ledger.authenticate_and_provision(rec.chip_id, claim)
        return {
            "type": "ProvisionResult",
            "assets": [
                {"kind": k.value, "ip": ip, "envelope": seal_asset(v, rec.comm_key, self._nonce()).to_dict()}
                for (k, ip), v in sorted(assets.items())
            ],
        }

    def _on_LifecycleUpdate(self, msg: dict) -> dict:
        rec = self.ledger.by_handle(msg["chip"])
        target = LifecycleState(msg["to"])
        actor = Actor(msg["actor"])
        table = rec.transition_table()
        presented = b""
        if table is not None and table.controller(rec.lifecycle, target) == actor:
            # the envelope opens only under the edge's own key: proof of possession
            try:
                body = json.loads(
                    open_envelope(SecureEnvelope.from_dict(msg["envelope"]), table.key(rec.lifecycle, target))
                )
                presented = bytes.fromhex(body["key"])
            except IntegrityFailure:
                raise Denied("BadKey") from None
        self.ledger.update_lifecycle(rec.chip_id, target, presented, actor)
        return {"type": "Ack"}

    def _on_Status(self, msg: dict) -> dict:
        rec = self.ledger.by_handle(msg["chip"])
        return {"type": "Status", "status": rec.status.value, "lifecycle": rec.lifecycle.value}


def identity_envelope(chip_id: bytes, lifecycle: LifecycleState, comm_key: bytes, nonce: bytes) -> dict:
    body = json.dumps({"chip_id": chip_id.hex(), "lifecycle": lifecycle.value}, sort_keys=True)
    return seal_asset(body.encode(), comm_key, nonce).to_dict()


def lifecycle_update(handle: str, target: LifecycleState, actor: Actor, key: bytes, nonce: bytes) -> dict:
    """Build a LifecycleUpdate; the presented key is sealed under itself."""
    body = json.dumps({"key": key.hex()}).encode()
    if len(key) != 32:
        # a malformed key can never open the AMI's envelope; seal under a zero key
        key = bytes(32)
    return {
        "type": "LifecycleUpdate",
        "chip": handle,
        "to": target.value,
        "actor": actor.value,
        "envelope": seal_asset(body, key, nonce).to_dict(),
    }
