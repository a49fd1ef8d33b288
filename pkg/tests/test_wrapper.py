import hashlib

import pytest

from citadel_sim.bitvec import BitVec
from citadel_sim.obfuscation import IpMode, LockedIpModel, UnlockVector, fragment_key
from citadel_sim.puf import PufInstance, sample_response
from citadel_sim.transcript import Channel, Transcript
from citadel_sim.wrapper import (
    BusRejected,
    NoKeyApplier,
    NoPufUnit,
    SecurityWrapper,
    SystemBus,
    UnmappedAddress,
)

ENTROPY = hashlib.sha256(b"wrapper-die").digest()
KEY = UnlockVector("aes", BitVec(int.from_bytes(hashlib.sha512(b"k").digest(), "big"), 512))


@pytest.fixture
def bus():
    b = SystemBus(Transcript())
    b.attach(SecurityWrapper(
        "aes", {0: "ctrl", 4: "data"},
        puf=PufInstance("aes", ENTROPY, 256, 0.0),
        key_applier=LockedIpModel.from_key(KEY, 32),
    ))
    b.attach(SecurityWrapper("gpio", {0: "ctrl"}))
    return b


def test_write_read_roundtrip(bus):
    w = bus.wrappers["aes"]
    w.bus_write(4, 0xDEAD)
    assert w.bus_read(4) == 0xDEAD
    assert [e.kind for e in bus.transcript] == ["write", "read"]
    assert all(e.channel is Channel.SYSTEM_BUS for e in bus.transcript)


def test_gated_access_rejected_and_logged(bus):
    w = bus.wrappers["aes"]
    w.gate_reset()
    with pytest.raises(BusRejected):
        w.bus_read(0)
    with pytest.raises(BusRejected):
        w.bus_write(0, 1)
    with pytest.raises(BusRejected):
        w.extract_puf_signature(0)
    assert [e.kind for e in bus.transcript] == ["read:Rejected", "write:Rejected", "puf:Rejected"]
    assert all(not e.payload for e in bus.transcript)


def test_release_restores_access(bus):
    w = bus.wrappers["aes"]
    w.gate_reset()
    w.gate_reset()
    assert w.reset_gated
    w.release_reset()
    w.bus_write(0, 3)
    assert w.bus_read(0) == 3


def test_unmapped_address(bus):
    with pytest.raises(UnmappedAddress):
        bus.wrappers["aes"].bus_read(0x40)


def test_extract_signature(bus):
    w = bus.wrappers["aes"]
    r = w.extract_puf_signature(5)
    assert r.width == 256
    assert r == w.extract_puf_signature(6)
    ev = bus.transcript[0]
    assert (ev.src, ev.dst, ev.kind, ev.plaintext) == ("aes", "citadel", "puf_signature", True)
    assert ev.payload == sample_response(w.puf, 5).to_bytes()


def test_extract_without_puf(bus):
    with pytest.raises(NoPufUnit):
        bus.wrappers["gpio"].extract_puf_signature(0)


def test_apply_unlock_vector(bus):
    w = bus.wrappers["aes"]
    frames = fragment_key(KEY, 32)
    assert w.apply_unlock_vector(frames[:-1]) is IpMode.TRANSITION
    w.key_applier.relock()
    assert w.apply_unlock_vector(frames) is IpMode.UNLOCKED
    with pytest.raises(NoKeyApplier):
        bus.wrappers["gpio"].apply_unlock_vector(frames)


def test_truncated_vector_leaves_ip_locked(bus):
    w = bus.wrappers["aes"]
    assert w.apply_unlock_vector(fragment_key(KEY, 32)[:3]) is not IpMode.UNLOCKED


def test_observers_are_ungated_third_parties(bus):
    bus.wrappers["gpio"].release_reset()
    ev = bus.record("aes", "citadel", "x")
    assert ev.observers == ("gpio",)
    bus.wrappers["gpio"].gate_reset()
    bus.host_running = True
    assert bus.record("aes", "citadel", "x").observers == ("host",)


def test_multibus_segments_limit_observers():
    b = SystemBus(Transcript())
    b.attach(SecurityWrapper("a", segment=1))
    b.attach(SecurityWrapper("b", segment=1))
    b.attach(SecurityWrapper("c", segment=2))
    assert b.observers("a", "b") == ["a", "b"]
    assert b.record("a", "b", "x").observers == ()
    assert b.record("citadel", "a", "x").observers == ("b", "c")


def test_duplicate_attach(bus):
    with pytest.raises(ValueError):
        bus.attach(SecurityWrapper("aes"))
