"""Authoritative chip ledger.

Every mutation runs under one lock, so concurrent sessions see a serial order.
"""
from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path

from ..assets import AssetKind
from ..crypto import chip_handle
from ..lifecycle import (
    Actor,
    AmiStatus,
    LifecycleState,
    TransitionTable,
    request_transition,
)


class NotRegistered(LookupError):
    pass


class Denied(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass
class AmiRecord:
    chip_id: bytes
    lifecycle: LifecycleState
    status: AmiStatus = AmiStatus.ACTIVE
    assets: dict[tuple[AssetKind, str], bytes] = field(default_factory=dict)
    registered_at: int = 0
    comm_key: bytes = b""

    @property
    def handle(self) -> str:
        return chip_handle(self.chip_id)

    def transition_table(self) -> TransitionTable | None:
        raw = self.assets.get((AssetKind.LIFECYCLE_VALIDATION_KEY, ""))
        return None if raw is None else TransitionTable.from_dict(json.loads(raw))

    def to_dict(self) -> dict:
        return {
            "chip_id": self.chip_id.hex(),
            "lifecycle": self.lifecycle.value,
            "status": self.status.value,
            "registered_at": self.registered_at,
            "comm_key": self.comm_key.hex(),
            "assets": [
                {"kind": k.value, "ip": ip, "value": v.hex()}
                for (k, ip), v in sorted(self.assets.items())
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AmiRecord":
        return cls(
            chip_id=bytes.fromhex(d["chip_id"]),
            lifecycle=LifecycleState(d["lifecycle"]),
            status=AmiStatus(d["status"]),
            registered_at=d["registered_at"],
            comm_key=bytes.fromhex(d["comm_key"]),
            assets={(AssetKind(a["kind"]), a["ip"]): bytes.fromhex(a["value"]) for a in d["assets"]},
        )


class AmiLedger:
    def __init__(self):
        self.records: dict[bytes, AmiRecord] = {}
        self.sessions: dict[str, bytes] = {}
        self.clock = 0
        self.lock = threading.RLock()
        self._by_handle: dict[str, bytes] = {}

    # -- queries ---------------------------------------------------------
    def get(self, chip_id: bytes) -> AmiRecord:
        try:
            return self.records[chip_id]
        except KeyError:
            raise NotRegistered(chip_id.hex()) from None

    def by_handle(self, handle: str) -> AmiRecord:
        try:
            return self.records[self._by_handle[handle]]
        except KeyError:
            raise NotRegistered(handle) from None

    def __contains__(self, chip_id: bytes) -> bool:
        return chip_id in self.records

    # -- mutations -------------------------------------------------------
    def open_session(self, session_id: str, comm_key: bytes) -> None:
        with self.lock:
            self.sessions[session_id] = comm_key

    def register_chip(self, chip_id: bytes, lifecycle: LifecycleState, comm_key: bytes) -> bool:
        """Insert a fresh Active record; False (and no change) on a duplicate."""
        with self.lock:
            if chip_id in self.records:
                return False
            self.clock += 1
            rec = AmiRecord(chip_id, lifecycle, registered_at=self.clock, comm_key=comm_key)
            self.records[chip_id] = rec
            self._by_handle[rec.handle] = chip_id
            return True

    def enroll_assets(self, chip_id: bytes, assets: dict[tuple[AssetKind, str], bytes]) -> None:
        with self.lock:
            rec = self.get(chip_id)
            if rec.status is AmiStatus.DECOMMISSIONED:
                raise Denied("Decommissioned")
            rec.assets.update(assets)

    def authenticate_and_provision(
        self, chip_id: bytes, lifecycle_claim: LifecycleState
    ) -> dict[tuple[AssetKind, str], bytes]:
        """Obfuscation vectors for a registered, active, lifecycle-consistent chip."""
        with self.lock:
            rec = self.records.get(chip_id)
            if rec is None:
                raise Denied("Unknown")
            if rec.status is AmiStatus.DECOMMISSIONED:
                raise Denied("Decommissioned")
            if rec.lifecycle != lifecycle_claim:
                raise Denied("LifecycleMismatch")
            return {k: v for k, v in rec.assets.items() if k[0] is AssetKind.OBFUSCATION_VECTOR}

    def update_lifecycle(
        self, chip_id: bytes, new_state: LifecycleState, presented_key: bytes, actor: Actor
    ) -> None:
        with self.lock:
            rec = self.records.get(chip_id)
            if rec is None:
                raise Denied("Unknown")
            if rec.status is AmiStatus.DECOMMISSIONED:
                raise Denied("Decommissioned")
            table = rec.transition_table()
            if table is None:
                raise Denied("NoValidationKeys")
            result = request_transition(table, rec.lifecycle, new_state, presented_key, actor)
            if not result:
                raise Denied(result.reason.value)
            rec.lifecycle = new_state
            if new_state is LifecycleState.END_OF_LIFE:
                rec.status = AmiStatus.DECOMMISSIONED

    # -- persistence -----------------------------------------------------
    def snapshot(self) -> dict:
        with self.lock:
            return {
                "clock": self.clock,
                "sessions": {k: v.hex() for k, v in sorted(self.sessions.items())},
                "records": [r.to_dict() for _, r in sorted(self.records.items())],
            }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.snapshot(), indent=2, sort_keys=True), encoding="utf-8")

    @classmethod
    def from_snapshot(cls, data: dict) -> "AmiLedger":
        led = cls()
        led.clock = data["clock"]
        led.sessions = {k: bytes.fromhex(v) for k, v in data["sessions"].items()}
        for d in data["records"]:
            rec = AmiRecord.from_dict(d)
            led.records[rec.chip_id] = rec
            led._by_handle[rec.handle] = rec.chip_id
        return led

    @classmethod
    def load(cls, path: str | Path) -> "AmiLedger":
        return cls.from_snapshot(json.loads(Path(path).read_text(encoding="utf-8")))
