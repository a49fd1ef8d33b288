"""Hardware security module mediating chip birth.

The HSM is trusted: adversaries may read its channel but cannot alter it.
"""
from __future__ import annotations

import json
import random
from dataclasses import dataclass, field

from .ami.client import AmiClient, AmiUnreachable
from .assets import AssetKind
from .crypto import seal_asset
from .enclave import BootReport, Citadel, RegistrationRejected
from .lifecycle import Actor, LifecycleState, TransitionResult, TransitionTable

HSM = "hsm"


class CeremonyError(Exception):
    pass


@dataclass
class BirthReport:
    session_id: str
    registration: str = "NotAttempted"
    chip_handle: str | None = None
    assets_enrolled: list[str] = field(default_factory=list)
    transition: str = "NotAttempted"
    boot: BootReport | None = None
    error: str | None = None
    start_index: int = 0
    end_index: int = 0

    @property
    def ok(self) -> bool:
        return self.error is None and self.transition == "Accepted"

    def to_dict(self) -> dict:
        return {
            "session": self.session_id,
            "registration": self.registration,
            "chip": self.chip_handle,
            "assets_enrolled": list(self.assets_enrolled),
            "transition": self.transition,
            "error": self.error,
            "events": [self.start_index, self.end_index],
        }


@dataclass
class HsmSession:
    chip: Citadel
    ami: AmiClient
    transport_key: bytes
    validation_keys: TransitionTable
    obfuscation_vectors: dict[str, bytes]
    rng: random.Random
    comm_key: bytes = b""

    def _seal(self, plaintext: bytes, key: bytes | None = None) -> dict:
        return seal_asset(plaintext, key or self.comm_key, self.rng.randbytes(16)).to_dict()

    def birth_ceremony(self) -> BirthReport:
        """Key setup, ChipID registration, asset enrollment and the first transition.

        On any failure the chip's vault and lifecycle are restored, so a
        failed ceremony leaves the device exactly as it was.
        """
        chip = self.chip
        if chip.lifecycle is not LifecycleState.FABRICATION_TEST:
            raise CeremonyError(f"chip is in {chip.lifecycle.value}, not FabricationTest")
        ami = self.ami.as_party(HSM)
        transcript = chip.transcript
        session_id = self.rng.randbytes(8).hex()
        report = BirthReport(session_id, start_index=len(transcript))
        saved = chip.vault.snapshot()
        saved_session = chip.session_id
        try:
            self.comm_key = self.rng.randbytes(32)
            reply = ami.request({
                "type": "Session",
                "session": session_id,
                "envelope": self._seal(self.comm_key, self.transport_key),
            })
            if reply.get("type") != "Ack":
                raise CeremonyError(f"session refused: {reply}")
            chip.install_comm_key(self.comm_key, session_id)
            chip.install_validation_keys(self.validation_keys)

            boot = chip.run_boot(self.ami)
            report.boot = boot
            report.registration = boot.registration or "NotAttempted"
            report.chip_handle = chip.handle
            report.assets_enrolled.extend(f"{AssetKind.IPID.value}:{ip}" for ip in chip.pcm.entries)

            assets = [
                {"kind": AssetKind.OBFUSCATION_VECTOR.value, "ip": ip, "envelope": self._seal(v)}
                for ip, v in sorted(self.obfuscation_vectors.items())
            ]
            assets.append({
                "kind": AssetKind.LIFECYCLE_VALIDATION_KEY.value,
                "ip": "",
                "envelope": self._seal(json.dumps(self.validation_keys.to_dict(), sort_keys=True).encode()),
            })
            reply = ami.request({"type": "EnrollAsset", "chip": chip.handle, "assets": assets})
            if reply.get("type") != "Ack":
                raise CeremonyError(f"asset enrollment refused: {reply.get('reason')}")
            report.assets_enrolled.extend(f"{a['kind']}:{a['ip']}" for a in assets)

            key = self.validation_keys.key(LifecycleState.FABRICATION_TEST, LifecycleState.PACKAGING_OEM)
            result: TransitionResult = chip.transition(LifecycleState.PACKAGING_OEM, key, Actor.HSM, ami)
            report.transition = "Accepted" if result else f"Denied:{result.reason.value}"
            if not result:
                raise CeremonyError(report.transition)
        except RegistrationRejected as exc:
            report.registration = "RegisterReject"
            report.error = f"RegistrationRejected:{exc.reason}"
        except AmiUnreachable as exc:
            report.error = f"AmiUnreachable:{exc}"
        except CeremonyError as exc:
            report.error = str(exc)
        if report.error is not None:
            chip.vault.restore(saved)
            chip.session_id = saved_session
            chip.pcm.clear()
        report.end_index = len(transcript)
        return report

