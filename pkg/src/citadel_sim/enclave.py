"""The security enclave: asset vault, SCM orchestration and the boot sequence."""
from __future__ import annotations

import hashlib
import json
import logging
import random
from contextlib import contextmanager
from dataclasses import dataclass, field
from enum import Enum

from .ami.client import AmiClient, AmiUnreachable
from .ami.protocol import identity_envelope, lifecycle_update
from .assets import AssetKind
from .bitvec import BitVec
from .crypto import IntegrityFailure, SecureEnvelope, chip_handle, open_envelope, seal_asset
from .lifecycle import (
    Actor,
    AmiStatus,
    BootMode,
    DenyReason,
    LifecycleState,
    TransitionResult,
    TransitionTable,
    boot_mode,
    request_transition,
)
from .obfuscation import IpMode, UnlockVector, fragment_key
from .puf import (
    AuthResult,
    ChipIdentity,
    PcmState,
    PufResponse,
    compute_chip_id,
    decode_correct,
    majority_vote,
    pcm_authenticate,
)
from .transcript import ENCLAVE, HOST, Channel
from .wrapper import NoPufUnit, SystemBus

log = logging.getLogger(__name__)


class MissingAsset(KeyError):
    pass


class RegistrationRejected(Exception):
    def __init__(self, reason: str):
        super().__init__(f"registration rejected: {reason}")
        self.reason = reason


class AssetVault:
    """Access-controlled asset store keyed by (kind, scope).

    Chip-wide assets use the empty scope; per-IP assets use the IP id and
    validation keys use the edge name.
    """

    def __init__(self):
        self.entries: dict[tuple[AssetKind, str], bytes] = {}

    def store(self, kind: AssetKind, scope: str, value: bytes) -> None:
        self.entries[(kind, scope)] = bytes(value)

    def fetch(self, kind: AssetKind, scope: str = "") -> bytes:
        try:
            return self.entries[(kind, scope)]
        except KeyError:
            raise MissingAsset(f"{kind.value}[{scope}]") from None

    def has(self, kind: AssetKind, scope: str = "") -> bool:
        return (kind, scope) in self.entries

    def scopes(self, kind: AssetKind) -> list[str]:
        return [s for (k, s) in self.entries if k is kind]

    def purge_for_eol(self) -> None:
        self.entries = {k: v for k, v in self.entries.items() if k[0] is AssetKind.LIFECYCLE_STATE}

    def snapshot(self) -> dict:
        return dict(self.entries)

    def restore(self, snap: dict) -> None:
        self.entries = dict(snap)


class BootOutcome(str, Enum):
    RELEASED = "Released"
    TRUNCATED = "Truncated"
    REVERTED = "RevertedToPreviousLifecycle"


PHASES = ("self_boot", "handshake", "scm_enforcement", "release")


@dataclass
class BootReport:
    lifecycle: LifecycleState
    phases: list[str] = field(default_factory=list)
    outcome: BootOutcome = BootOutcome.TRUNCATED
    reason: str = ""
    start_index: int = 0
    end_index: int = 0
    ack_index: int | None = None
    scm_events: list[int] = field(default_factory=list)
    attestation: dict[str, str] = field(default_factory=dict)
    unlocked: dict[str, str] = field(default_factory=dict)
    registration: str | None = None
    provisioning: str | None = None

    def to_dict(self) -> dict:
        return {
            "lifecycle": self.lifecycle.value,
            "phases": list(self.phases),
            "outcome": self.outcome.value,
            "reason": self.reason,
            "events": [self.start_index, self.end_index],
            "ack_index": self.ack_index,
            "attestation": dict(self.attestation),
            "unlocked": dict(self.unlocked),
            "registration": self.registration,
            "provisioning": self.provisioning,
        }


def _seed(rng: random.Random) -> int:
    return rng.getrandbits(64)


class Citadel:
    """Enclave instance bound to one host SoC bus."""

    def __init__(
        self,
        bus: SystemBus,
        rng: random.Random,
        lifecycle: LifecycleState = LifecycleState.FABRICATION_TEST,
        n_chip_id_ips: int | None = None,
        scm_order: tuple[str, ...] = ("puf", "unlock"),
        enroll_samples: int = 5,
        attest_retries: int = 3,
    ):
        if set(scm_order) != {"puf", "unlock"}:
            raise ValueError("scm_order must order exactly 'puf' and 'unlock'")
        self.bus = bus
        self.transcript = bus.transcript
        self.rng = rng
        self.vault = AssetVault()
        self.vault.store(AssetKind.LIFECYCLE_STATE, "", lifecycle.value.encode())
        self.pcm = PcmState()
        self.n_chip_id_ips = n_chip_id_ips
        self.scm_order = tuple(scm_order)
        self.enroll_samples = enroll_samples
        self.attest_retries = attest_retries
        self.session_id: str | None = None

    # -- vault-backed state ----------------------------------------------
    @property
    def lifecycle(self) -> LifecycleState:
        return LifecycleState(self.vault.fetch(AssetKind.LIFECYCLE_STATE).decode())

    def _set_lifecycle(self, state: LifecycleState) -> None:
        self.vault.store(AssetKind.LIFECYCLE_STATE, "", state.value.encode())

    @property
    def chip_id(self) -> bytes:
        return self.vault.fetch(AssetKind.CHIP_ID)

    @property
    def handle(self) -> str:
        return chip_handle(self.chip_id)

    @property
    def comm_key(self) -> bytes:
        return self.vault.fetch(AssetKind.COMM_KEY)

    def install_comm_key(self, key: bytes, session_id: str) -> None:
        self.vault.store(AssetKind.COMM_KEY, "", key)
        self.session_id = session_id

    def install_validation_keys(self, table: TransitionTable) -> None:
        for edge, value in table.to_dict().items():
            self.vault.store(AssetKind.LIFECYCLE_VALIDATION_KEY, edge, bytes.fromhex(value))

    def transition_table(self) -> TransitionTable | None:
        scopes = self.vault.scopes(AssetKind.LIFECYCLE_VALIDATION_KEY)
        if not scopes:
            return None
        return TransitionTable.from_dict(
            {s: self.vault.fetch(AssetKind.LIFECYCLE_VALIDATION_KEY, s).hex() for s in scopes}
        )

    def _seal(self, plaintext: bytes) -> dict:
        return seal_asset(plaintext, self.comm_key, self.rng.randbytes(16)).to_dict()

    # -- SCM orchestration -----------------------------------------------
    @contextmanager
    def isolated(self, ip_id: str):
        """Hold every other IP in reset while ``ip_id`` is serviced."""
        target = self.bus.wrappers[ip_id]
        previous = {name: w.reset_gated for name, w in self.bus.wrappers.items()}
        self.bus.gate_all()
        target.release_reset()
        try:
            yield target
        finally:
            target.gate_reset()
            for name, gated in previous.items():
                self.bus.wrappers[name].reset_gated = gated

    def puf_ips(self, n_ips: int | None = None) -> list[str]:
        ids = [w.ip_id for w in self.bus.wrappers.values() if w.puf is not None]
        n = len(ids) if n_ips is None else n_ips
        if n < 1 or len(ids) < n:
            raise NoPufUnit(f"need {n} PUF-equipped IPs, found {len(ids)}")
        return ids[:n]

    def collect_responses(self, ip_ids: list[str], rng_seed: int, samples: int = 1) -> list[PufResponse]:
        out = []
        for ip in ip_ids:
            reads = []
            for k in range(samples):
                noise_seed = int.from_bytes(
                    hashlib.sha256(f"{rng_seed}:{ip}:{k}".encode()).digest()[:8], "big"
                )
                with self.isolated(ip) as w:
                    reads.append(w.extract_puf_signature(noise_seed))
            out.append(reads[0] if samples == 1 else majority_vote(reads))
        return out

    def orchestrate_chip_id(self, n_ips: int, rng_seed: int, samples: int = 1) -> ChipIdentity:
        return compute_chip_id(self.collect_responses(self.puf_ips(n_ips), rng_seed, samples))

    # -- lifecycle -------------------------------------------------------
    def transition(
        self, target: LifecycleState, key: bytes, actor: Actor, ami: AmiClient | None = None
    ) -> TransitionResult:
        """Move to ``target`` locally and in the ledger, or neither."""
        table = self.transition_table()
        current = self.lifecycle
        if table is None:
            return TransitionResult(False, DenyReason.NO_SUCH_EDGE)
        result = request_transition(table, current, target, key, actor)
        if not result:
            return result
        if ami is not None:
            reply = ami.request(lifecycle_update(self.handle, target, actor, key, self.rng.randbytes(16)))
            if reply.get("type") != "Ack":
                return TransitionResult(False, DenyReason.LEDGER_REJECTED)
        self._set_lifecycle(target)
        if target is LifecycleState.END_OF_LIFE:
            self.vault.purge_for_eol()
            self.pcm.clear()
            self.session_id = None
        return result

    # -- boot ------------------------------------------------------------
    def run_boot(self, ami: AmiClient | None = None) -> BootReport:
        """Four-phase boot; see ``BootOutcome`` for the possible results."""
        t = self.transcript
        self.bus.host_running = False
        self.bus.gate_all()
        # power-on: obfuscated IPs come up locked
        for w in self.bus.wrappers.values():
            if w.key_applier is not None:
                w.key_applier.relock()
        report = BootReport(self.lifecycle, start_index=len(t))
        t.mark("boot:self_boot")
        reverted = False
        try:
            mode = self._validate_lifecycle(ami, report)
            report.phases.append("self_boot")
            if mode is BootMode.TRUNCATED:
                return report
            if mode is BootMode.REVERT_PREVIOUS:
                reverted = True

            t.mark("boot:handshake")
            t.record(Channel.BOOT_IFACE, ENCLAVE, HOST, "IRQ")
            report.ack_index = t.record(Channel.BOOT_IFACE, HOST, ENCLAVE, "ACK").index
            report.phases.append("handshake")

            t.mark("boot:scm_enforcement")
            scm_start = len(t)
            ok = self._enforce(ami, report)
            report.scm_events = [e.index for e in t.since(scm_start) if e.channel is Channel.SYSTEM_BUS]
            if not ok:
                return report
            report.phases.append("scm_enforcement")

            t.mark("boot:release")
            self.bus.release_all()
            self.bus.host_running = True
            t.record(Channel.BOOT_IFACE, ENCLAVE, HOST, "RELEASE")
            report.phases.append("release")
            report.outcome = BootOutcome.REVERTED if reverted else BootOutcome.RELEASED
            return report
        finally:
            report.end_index = len(t)
            log.debug("boot %s -> %s (%s)", report.lifecycle.value, report.outcome.value, report.reason)

    def _validate_lifecycle(self, ami: AmiClient | None, report: BootReport) -> BootMode:
        stored = self.lifecycle
        if stored is LifecycleState.END_OF_LIFE:
            report.reason = "EndOfLife"
            return BootMode.TRUNCATED
        if stored is LifecycleState.FABRICATION_TEST:
            return BootMode.FULL
        if not (self.vault.has(AssetKind.CHIP_ID) and self.vault.has(AssetKind.COMM_KEY)):
            report.reason = "MissingAsset"
            return BootMode.TRUNCATED
        if ami is None:
            return boot_mode(stored)
        try:
            reply = ami.request({
                "type": "Authenticate",
                "chip": self.handle,
                "envelope": identity_envelope(self.chip_id, stored, self.comm_key, self.rng.randbytes(16)),
            })
        except AmiUnreachable:
            # contact with the ledger is only mandatory at chip birth
            return boot_mode(stored)
        if reply.get("result") != "Pass":
            report.reason = f"AmiAuth:{reply.get('reason', 'Fail')}"
            return BootMode.TRUNCATED
        status = AmiStatus(reply["status"])
        recorded = LifecycleState(reply["lifecycle"])
        mode = boot_mode(stored, status, recorded)
        if mode is BootMode.TRUNCATED:
            report.reason = status.value
        elif mode is BootMode.REVERT_PREVIOUS:
            report.reason = f"LifecycleMismatch:{stored.value}->{recorded.value}"
            self._set_lifecycle(recorded)
            report.lifecycle = recorded
        return mode

    def _enforce(self, ami: AmiClient | None, report: BootReport) -> bool:
        if self.lifecycle is LifecycleState.FABRICATION_TEST:
            self._chip_birth(ami, report)
            return True
        for scm in self.scm_order:
            if scm == "puf" and not self._attest(report):
                report.reason = "AttestationFailed"
                return False
            if scm == "unlock" and not self._unlock(ami, report):
                report.reason = "UnlockFailed"
                return False
        return True

    def _chip_birth(self, ami: AmiClient | None, report: BootReport) -> None:
        if ami is None:
            raise AmiUnreachable("chip birth requires the AMI")
        ips = self.puf_ips(self.n_chip_id_ips)
        golden = self.collect_responses(ips, _seed(self.rng), self.enroll_samples)
        chip_id = compute_chip_id(golden)
        self.vault.store(AssetKind.CHIP_ID, "", chip_id.digest)
        self.pcm.clear()
        for r in golden:
            self.vault.store(AssetKind.PUF_EXPECTED_RESPONSE, r.ip_id, r.to_bytes())
            self.pcm.enroll(r)
        body = json.dumps({"chip_id": chip_id.hex(), "lifecycle": self.lifecycle.value}, sort_keys=True)
        reply = ami.request({"type": "Register", "session": self.session_id, "envelope": self._seal(body.encode())})
        report.registration = reply.get("type")
        if reply.get("type") != "RegisterAck":
            raise RegistrationRejected(reply.get("reason", "unknown"))
        ipids = [
            {"kind": AssetKind.IPID.value, "ip": r.ip_id, "envelope": self._seal(hashlib.sha256(r.to_bytes()).digest())}
            for r in golden
        ]
        reply = ami.request({"type": "EnrollAsset", "chip": self.handle, "assets": ipids})
        if reply.get("type") != "Ack":
            raise RegistrationRejected(f"IPID enrollment: {reply.get('reason')}")

    def _attest(self, report: BootReport) -> bool:
        if not self.pcm.entries or not self.vault.has(AssetKind.CHIP_ID):
            report.attestation["*"] = "NoEnrollment"
            return False
        corrected = []
        for ip, entry in self.pcm.entries.items():
            result = AuthResult.FAIL
            for _ in range(self.attest_retries):
                with self.isolated(ip) as w:
                    resp = w.extract_puf_signature(_seed(self.rng))
                result = pcm_authenticate(self.pcm, ip, resp)
                if result is AuthResult.PASS:
                    corrected.append(decode_correct(resp, entry.parity))
                    break
            report.attestation[ip] = result.value
            if result is not AuthResult.PASS:
                return False
        ok = compute_chip_id(corrected).digest == self.chip_id
        report.attestation["chip_id"] = "Pass" if ok else "Fail"
        return ok

    def provision(self, ami: AmiClient) -> str:
        reply = ami.request({
            "type": "Provision",
            "chip": self.handle,
            "envelope": identity_envelope(self.chip_id, self.lifecycle, self.comm_key, self.rng.randbytes(16)),
        })
        if reply.get("type") != "ProvisionResult":
            return f"Denied:{reply.get('reason')}"
        for a in reply["assets"]:
            try:
                value = open_envelope(SecureEnvelope.from_dict(a["envelope"]), self.comm_key)
            except IntegrityFailure:
                return "IntegrityFailure"
            self.vault.store(AssetKind(a["kind"]), a["ip"], value)
        return "Provisioned"

    def _unlock(self, ami: AmiClient | None, report: BootReport) -> bool:
        locked = [w for w in self.bus.wrappers.values() if w.key_applier is not None]
        missing = [w for w in locked if not self.vault.has(AssetKind.OBFUSCATION_VECTOR, w.ip_id)]
        if missing and ami is not None:
            try:
                report.provisioning = self.provision(ami)
            except AmiUnreachable:
                report.provisioning = "AmiUnreachable"
        ok = True
        for w in locked:
            if not self.vault.has(AssetKind.OBFUSCATION_VECTOR, w.ip_id):
                report.unlocked[w.ip_id] = w.key_applier.mode.value
                ok = False
                continue
            vector = UnlockVector(w.ip_id, BitVec.from_bytes(self.vault.fetch(AssetKind.OBFUSCATION_VECTOR, w.ip_id)))
            frames = fragment_key(vector, w.key_applier.input_width)
            with self.isolated(w.ip_id):
                mode = w.apply_unlock_vector(frames)
            report.unlocked[w.ip_id] = mode.value
            ok = ok and mode is IpMode.UNLOCKED
        return ok
