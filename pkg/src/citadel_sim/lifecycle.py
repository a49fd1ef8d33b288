"""Device lifecycle stages, who may move a device between them, and the
boot decision derived from local and ledger state."""
from __future__ import annotations

import hmac
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable


class LifecycleState(str, Enum):
    FABRICATION_TEST = "FabricationTest"
    PACKAGING_OEM = "PackagingOem"
    DEPLOYMENT = "Deployment"
    RECALL = "Recall"
    END_OF_LIFE = "EndOfLife"


class Actor(str, Enum):
    HSM = "HSM"
    OEM = "OEM"
    USER = "User"
    ADVERSARY = "Adversary"


class AmiStatus(str, Enum):
    ACTIVE = "Active"
    DECOMMISSIONED = "Decommissioned"


class DenyReason(str, Enum):
    NO_SUCH_EDGE = "NoSuchEdge"
    WRONG_ACTOR = "WrongActor"
    BAD_KEY = "BadKey"
    LEDGER_REJECTED = "LedgerRejected"


class BootMode(str, Enum):
    FULL = "Full"
    TRUNCATED = "Truncated"
    REVERT_PREVIOUS = "RevertPrevious"


LS = LifecycleState
EDGES: dict[tuple[LifecycleState, LifecycleState], Actor] = {
    (LS.FABRICATION_TEST, LS.PACKAGING_OEM): Actor.HSM,
    (LS.PACKAGING_OEM, LS.DEPLOYMENT): Actor.OEM,
    (LS.DEPLOYMENT, LS.RECALL): Actor.OEM,
    (LS.RECALL, LS.PACKAGING_OEM): Actor.OEM,
    (LS.RECALL, LS.END_OF_LIFE): Actor.OEM,
}

KEY_BYTES = 32


@dataclass(frozen=True)
class TransitionResult:
    accepted: bool
    reason: DenyReason | None = None

    def __bool__(self) -> bool:
        return self.accepted


ACCEPTED = TransitionResult(True)


@dataclass
class TransitionTable:
    """Per-device validation keys, one per lifecycle edge."""

    keys: dict[tuple[LifecycleState, LifecycleState], bytes] = field(default_factory=dict)

    def __post_init__(self):
        if set(self.keys) != set(EDGES):
            raise ValueError("transition table must define exactly the canonical edges")
        if any(len(k) != KEY_BYTES for k in self.keys.values()):
            raise ValueError("validation keys are 256-bit")
        if len(set(self.keys.values())) != len(self.keys):
            raise ValueError("validation keys must be pairwise distinct")

    @classmethod
    def generate(cls, randbytes: Callable[[int], bytes]) -> "TransitionTable":
        keys: dict = {}
        for edge in EDGES:
            k = randbytes(KEY_BYTES)
            while k in keys.values():
                k = randbytes(KEY_BYTES)
            keys[edge] = k
        return cls(keys)

    def controller(self, current: LifecycleState, target: LifecycleState) -> Actor | None:
        return EDGES.get((current, target))

    def key(self, current: LifecycleState, target: LifecycleState) -> bytes:
        return self.keys[(current, target)]

    def to_dict(self) -> dict[str, str]:
        return {f"{a.value}->{b.value}": k.hex() for (a, b), k in self.keys.items()}

    @classmethod
    def from_dict(cls, d: dict[str, str]) -> "TransitionTable":
        keys = {}
        for edge, k in d.items():
            a, b = edge.split("->")
            keys[(LifecycleState(a), LifecycleState(b))] = bytes.fromhex(k)
        return cls(keys)


def request_transition(
    table: TransitionTable,
    current: LifecycleState,
    target: LifecycleState,
    presented_key: bytes,
    actor: Actor,
) -> TransitionResult:
    controller = table.controller(current, target)
    if controller is None:
        return TransitionResult(False, DenyReason.NO_SUCH_EDGE)
    if actor != controller:
        return TransitionResult(False, DenyReason.WRONG_ACTOR)
    if not hmac.compare_digest(bytes(presented_key), table.key(current, target)):
        return TransitionResult(False, DenyReason.BAD_KEY)
    return ACCEPTED


def boot_mode(
    stored: LifecycleState,
    ami_status: AmiStatus | None = None,
    ami_lifecycle: LifecycleState | None = None,
) -> BootMode:
    """``ami_status``/``ami_lifecycle`` are None when the ledger was not consulted."""
    if stored == LS.END_OF_LIFE or ami_status == AmiStatus.DECOMMISSIONED:
        return BootMode.TRUNCATED
    if ami_lifecycle is not None and ami_lifecycle != stored:
        return BootMode.REVERT_PREVIOUS
    return BootMode.FULL
