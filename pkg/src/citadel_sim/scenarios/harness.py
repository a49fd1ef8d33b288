"""Shared plumbing for scenario runs: seeding, testbed assembly, AMI wiring and verdicts."""
from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field
from ..ami.client import AmiClient, InProcessTransport, TcpTransport
from ..ami.protocol import AmiService, transport_key_for
from ..assets import AssetKind
from ..bitvec import BitVec
from ..enclave import Citadel
from ..hsm import HsmSession
from ..lifecycle import Actor, LifecycleState, TransitionResult, TransitionTable
from ..obfuscation import LockedIpModel, UnlockVector
from ..puf import PufInstance
from ..transcript import Channel, Transcript, plaintext_leaks
from ..wrapper import SecurityWrapper, SystemBus
from .config import SocConfig

PORT_MAP = {0x00: "ctrl", 0x04: "status", 0x08: "data"}


def derive_seed(master: int, label: str) -> int:
    """Per-actor 64-bit seed from the scenario master seed."""
    return int.from_bytes(hashlib.sha256(f"{master}:{label}".encode()).digest()[:8], "big")


def rng_for(master: int, label: str) -> random.Random:
    return random.Random(derive_seed(master, label))


@dataclass
class Verdict:
    scenario: str
    expected: dict[str, object]
    observed: dict[str, object]
    evidence: dict[str, list[int]] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)
    transcript: Transcript | None = field(default=None, repr=False, compare=False)

    @property
    def passed(self) -> bool:
        return self.expected == self.observed

    def failures(self) -> list[str]:
        return [k for k in self.expected if self.observed.get(k) != self.expected[k]]

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "passed": self.passed,
            "expected": self.expected,
            "observed": self.observed,
            "evidence": self.evidence,
            "failures": self.failures(),
            "notes": self.notes,
        }


@dataclass
class Testbed:
    label: str
    bus: SystemBus
    chip: Citadel
    entropy: bytes
    keys: dict[str, bytes]
    table: TransitionTable | None = None


class Scenario:
    """One run: a transcript, an AMI connection and a record of checks."""

    def __init__(self, name: str, config: SocConfig, seed: int = 0, ami_url: str | None = None):
        self.name = name
        self.config = config
        self.seed = seed
        self.transcript = Transcript()
        if ami_url is None:
            self.service: AmiService | None = AmiService(seed=seed)
            transport = InProcessTransport(self.service)
        else:
            self.service = None
            transport = TcpTransport.from_url(ami_url)
        self.transport = transport
        self.ami = AmiClient(transport, self.transcript, "citadel")
        self.transport_key = transport_key_for(seed)
        self.secrets: set[bytes] = set()
        self.expected: dict[str, object] = {}
        self.observed: dict[str, object] = {}
        self.evidence: dict[str, list[int]] = {}
        self.notes: list[str] = []

    def rng(self, label: str) -> random.Random:
        return rng_for(self.seed, f"{self.name}:{label}")

    # -- checks ----------------------------------------------------------
    def check(self, name: str, expected, observed, evidence: list[int] | None = None) -> bool:
        self.expected[name] = expected
        self.observed[name] = observed
        ev = [i for i in (evidence or []) if 0 <= i < len(self.transcript)]
        self.evidence[name] = ev
        return expected == observed

    def verdict(self) -> Verdict:
        self.check_confidentiality()
        self.transport.close()
        return Verdict(self.name, self.expected, self.observed, self.evidence, self.notes, self.transcript)

    def check_confidentiality(self) -> None:
        leaks = plaintext_leaks(self.transcript, self.secrets)
        self.check("confidentiality.leaking_events", 0, len(leaks), leaks)
        exposed_bus = [
            e.index for e in self.transcript
            if e.channel is Channel.SYSTEM_BUS and e.plaintext and e.observers
        ]
        self.check("isolation.observed_plaintext_transfers", 0, len(exposed_bus), exposed_bus)

    # -- assembly --------------------------------------------------------
    def testbed(self, label: str, entropy: bytes | None = None, lifecycle=LifecycleState.FABRICATION_TEST) -> Testbed:
        cfg = self.config
        if entropy is None:
            entropy = hashlib.sha256(f"die:{self.seed}:{self.name}:{label}".encode()).digest()
        bus = SystemBus(self.transcript)
        keys = {}
        for ip in cfg.ips:
            puf = PufInstance(ip.id, entropy, cfg.puf_width, cfg.ber) if ip.has_puf else None
            locked = None
            if ip.is_locked:
                key = ip.key_bytes
                keys[ip.id] = key
                locked = LockedIpModel.from_key(
                    UnlockVector(ip.id, BitVec.from_bytes(key)), ip.input_width, functional_model=ip.functional_model
                )
            segment = ip.segment if cfg.bus_topology == "MultiBus" else 0
            bus.attach(SecurityWrapper(ip.id, dict(PORT_MAP), puf=puf, key_applier=locked, segment=segment))
        chip = Citadel(
            bus,
            self.rng(f"{label}:citadel"),
            lifecycle=lifecycle,
            n_chip_id_ips=cfg.n_chip_id_ips,
            scm_order=cfg.scm_order,
        )
        return Testbed(label, bus, chip, entropy, keys)

    def birth(self, tb: Testbed):
        """HSM ceremony for a fresh testbed; registers the assets it creates as secrets."""
        table = TransitionTable.generate(self.rng(f"{tb.label}:oem-keys").randbytes)
        hsm = HsmSession(
            chip=tb.chip,
            ami=self.ami,
            transport_key=self.transport_key,
            validation_keys=table,
            obfuscation_vectors=dict(tb.keys),
            rng=self.rng(f"{tb.label}:hsm"),
        )
        report = hsm.birth_ceremony()
        tb.table = table
        self.secrets.update(table.keys.values())
        self.secrets.update(tb.keys.values())
        self.secrets.add(hsm.comm_key)
        self.remember_vault(tb)
        return report

    def remember_vault(self, tb: Testbed) -> None:
        for (kind, _), value in tb.chip.vault.entries.items():
            if kind is not AssetKind.LIFECYCLE_STATE:
                self.secrets.add(value)
        for entry in tb.chip.pcm.entries.values():
            self.secrets.add(entry.expected.to_bytes())
            self.secrets.add(hashlib.sha256(entry.expected.to_bytes()).digest())

    def oem_transition(self, tb: Testbed, target: LifecycleState) -> TransitionResult:
        current = tb.chip.lifecycle
        key = tb.table.key(current, target) if tb.table.controller(current, target) else bytes(32)
        return tb.chip.transition(target, key, Actor.OEM, self.ami)

    def phase_order_ok(self, report) -> bool:
        if report.ack_index is None:
            return not report.scm_events
        return all(i > report.ack_index for i in report.scm_events)
