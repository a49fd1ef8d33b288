import hashlib
import random

import pytest

from citadel_sim.ami.client import AmiUnreachable
from citadel_sim.assets import AssetKind
from citadel_sim.crypto import IntegrityFailure, SecureEnvelope, open_envelope, seal_asset
from citadel_sim.enclave import AssetVault, BootOutcome, Citadel, MissingAsset
from citadel_sim.lifecycle import LifecycleState as LS
from citadel_sim.obfuscation import IpMode
from citadel_sim.puf import PufInstance, compute_chip_id, ideal_response
from citadel_sim.scenarios.harness import Scenario
from citadel_sim.transcript import Channel, Transcript
from citadel_sim.wrapper import NoPufUnit, SecurityWrapper, SystemBus

import oracles

KEY = bytes(range(32))
NONCE = bytes(range(100, 116))


# -- envelopes -------------------------------------------------------------

def test_seal_open_roundtrip():
    env = seal_asset(b"chip identity bytes", KEY, NONCE)
    assert open_envelope(env, KEY) == b"chip identity bytes"
    assert env.ciphertext != b"chip identity bytes"
    assert env.digest == hashlib.sha256(b"chip identity bytes").digest()


def test_open_with_wrong_key():
    env = seal_asset(b"secret asset value", KEY, NONCE)
    with pytest.raises(IntegrityFailure):
        open_envelope(env, bytes(32))


def test_tampered_ciphertext():
    env = seal_asset(b"secret asset value", KEY, NONCE)
    bad = SecureEnvelope(env.nonce, bytes([env.ciphertext[0] ^ 1]) + env.ciphertext[1:], env.digest)
    with pytest.raises(IntegrityFailure):
        open_envelope(bad, KEY)


@pytest.mark.skipif(not oracles.have("openssl"), reason="openssl not installed")
def test_ciphertext_matches_openssl_aes256_ctr():
    plaintext = b"The quick brown fox jumps over the lazy dog, 0123456789"
    env = seal_asset(plaintext, KEY, NONCE)
    assert env.ciphertext == oracles.openssl_aes256_ctr(KEY, NONCE, plaintext)


def test_envelope_dict_roundtrip():
    env = seal_asset(b"x" * 20, KEY, NONCE)
    assert SecureEnvelope.from_dict(env.to_dict()) == env
    with pytest.raises(IntegrityFailure):
        SecureEnvelope.from_dict({"nonce": "zz"})


def test_bad_key_length():
    with pytest.raises(ValueError):
        seal_asset(b"x", b"short", NONCE)


# -- vault -----------------------------------------------------------------

def test_vault_roundtrip_and_purge():
    v = AssetVault()
    v.store(AssetKind.CHIP_ID, "", b"id")
    v.store(AssetKind.OBFUSCATION_VECTOR, "aes", b"vec")
    v.store(AssetKind.LIFECYCLE_STATE, "", b"Recall")
    assert v.fetch(AssetKind.OBFUSCATION_VECTOR, "aes") == b"vec"
    v.purge_for_eol()
    with pytest.raises(MissingAsset):
        v.fetch(AssetKind.CHIP_ID)
    assert v.fetch(AssetKind.LIFECYCLE_STATE) == b"Recall"
    assert list(v.entries) == [(AssetKind.LIFECYCLE_STATE, "")]


# -- ChipID orchestration --------------------------------------------------

def make_chip(n_puf=3, ber=0.0):
    bus = SystemBus(Transcript())
    ent = hashlib.sha256(b"enclave-die").digest()
    for i in range(n_puf):
        bus.attach(SecurityWrapper(f"ip{i}", puf=PufInstance(f"ip{i}", ent, 256, ber)))
    bus.attach(SecurityWrapper("spy"))
    return Citadel(bus, random.Random(0))


def test_chip_id_single_ip():
    chip = make_chip(1)
    cid = chip.orchestrate_chip_id(1, rng_seed=0)
    assert cid.digest == hashlib.sha256(ideal_response(chip.bus.wrappers["ip0"].puf).to_bytes()).digest()


def test_chip_id_repeatable():
    chip = make_chip(3)
    assert chip.orchestrate_chip_id(3, 1) == chip.orchestrate_chip_id(3, 2)
    expected = compute_chip_id([ideal_response(chip.bus.wrappers[f"ip{i}"].puf) for i in range(3)])
    assert chip.orchestrate_chip_id(3, 3) == expected


def test_chip_id_transcript_isolation():
    chip = make_chip(3)
    chip.bus.release_all()  # everyone awake before orchestration starts
    chip.orchestrate_chip_id(3, 0)
    events = [e for e in chip.transcript if e.kind == "puf_signature"]
    assert [e.src for e in events] == ["ip0", "ip1", "ip2"]
    assert all(e.observers == () for e in events)
    # gating state is restored afterwards
    assert not any(w.reset_gated for w in chip.bus.wrappers.values())


def test_chip_id_needs_enough_pufs():
    with pytest.raises(NoPufUnit):
        make_chip(2).orchestrate_chip_id(3, 0)


# -- boot ------------------------------------------------------------------

@pytest.fixture
def born(single_bus):
    sc = Scenario("boot-test", single_bus, seed=0)
    tb = sc.testbed("chip")
    report = sc.birth(tb)
    assert report.ok, report.error
    return sc, tb


def test_birth_boot_phases(born):
    sc, tb = born
    boot = tb.chip.run_boot(sc.ami)
    assert boot.phases == ["self_boot", "handshake", "scm_enforcement", "release"]


def test_deployment_boot_unlocks_everything(born):
    sc, tb = born
    assert sc.oem_transition(tb, LS.DEPLOYMENT)
    rep = tb.chip.run_boot(sc.ami)
    assert rep.outcome is BootOutcome.RELEASED
    assert rep.unlocked and set(rep.unlocked.values()) == {"Unlocked"}
    assert rep.provisioning == "Provisioned"
    assert all(v == "Pass" for v in rep.attestation.values())
    assert tb.bus.host_running
    for w in tb.bus.wrappers.values():
        if w.key_applier:
            assert w.key_applier.mode is IpMode.UNLOCKED
            assert w.key_applier.step(5) == w.key_applier.functional(5)


def test_phase3_events_follow_ack(born):
    sc, tb = born
    rep = tb.chip.run_boot(sc.ami)
    t = sc.transcript
    assert rep.ack_index is not None and t[rep.ack_index].kind == "ACK"
    assert t[rep.ack_index].channel is Channel.BOOT_IFACE
    assert rep.scm_events and min(rep.scm_events) > rep.ack_index
    kinds = [e.kind for e in t.since(rep.start_index) if e.channel is Channel.BOOT_IFACE]
    assert kinds == ["IRQ", "ACK", "RELEASE"]


def test_end_of_life_boot_is_truncated(born):
    sc, tb = born
    for target in (LS.DEPLOYMENT, LS.RECALL, LS.END_OF_LIFE):
        assert sc.oem_transition(tb, target)
    rep = tb.chip.run_boot(sc.ami)
    assert rep.outcome is BootOutcome.TRUNCATED
    assert rep.phases == ["self_boot"]
    assert not [e for e in sc.transcript.since(rep.start_index) if e.channel is Channel.SYSTEM_BUS]
    assert not tb.bus.host_running


def test_decommissioned_in_ledger_truncates(born):
    sc, tb = born
    assert sc.oem_transition(tb, LS.DEPLOYMENT)
    rec = sc.service.ledger.get(tb.chip.chip_id)
    from citadel_sim.lifecycle import AmiStatus
    rec.status = AmiStatus.DECOMMISSIONED
    rep = tb.chip.run_boot(sc.ami)
    assert rep.outcome is BootOutcome.TRUNCATED
    assert rep.reason == "Decommissioned"
    assert rep.scm_events == []


def test_lifecycle_mismatch_reverts_to_ledger_state(born):
    sc, tb = born
    tb.chip._set_lifecycle(LS.DEPLOYMENT)  # local register ahead of the ledger
    rep = tb.chip.run_boot(sc.ami)
    assert rep.outcome is BootOutcome.REVERTED
    assert tb.chip.lifecycle is LS.PACKAGING_OEM
    assert rep.phases[-1] == "release"


def test_birth_without_ami(single_bus):
    sc = Scenario("noami", single_bus)
    tb = sc.testbed("chip")
    tb.chip.install_comm_key(bytes(32), "s")
    with pytest.raises(AmiUnreachable):
        tb.chip.run_boot(None)


def test_offline_deployment_boot_uses_local_state(born):
    sc, tb = born
    sc.transport.online = False
    rep = tb.chip.run_boot(sc.ami)
    # vectors were never provisioned, so locked IPs cannot come up
    assert rep.outcome is BootOutcome.TRUNCATED and rep.reason == "UnlockFailed"
    sc.transport.online = True
    assert tb.chip.run_boot(sc.ami).outcome is BootOutcome.RELEASED
    sc.transport.online = False
    assert tb.chip.run_boot(sc.ami).outcome is BootOutcome.RELEASED


def test_scm_order_is_configurable(single_bus):
    from dataclasses import replace
    cfg = replace(single_bus, scm_order=("unlock", "puf"))
    sc = Scenario("order", cfg)
    tb = sc.testbed("chip")
    assert sc.birth(tb).ok
    rep = tb.chip.run_boot(sc.ami)
    kinds = [sc.transcript[i].kind for i in rep.scm_events]
    assert kinds.index("key_frame") < kinds.index("puf_signature")
    with pytest.raises(ValueError):
        Citadel(tb.bus, random.Random(0), scm_order=("puf",))


def test_attestation_failure_truncates(born):
    sc, tb = born
    # swap in a different die's PUF behind one wrapper
    w = next(w for w in tb.bus.wrappers.values() if w.puf is not None)
    w.puf = PufInstance(w.ip_id, hashlib.sha256(b"other").digest(), w.puf.width, 0.0)
    rep = tb.chip.run_boot(sc.ami)
    assert rep.outcome is BootOutcome.TRUNCATED
    assert rep.reason == "AttestationFailed"
    assert rep.attestation[w.ip_id] == "Fail"
