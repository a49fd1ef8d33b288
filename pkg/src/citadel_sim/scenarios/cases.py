"""The honest lifecycle walk-through and the three supply-chain threat cases."""
from __future__ import annotations

import json

from ..ami.protocol import identity_envelope, lifecycle_update
from ..bitvec import BitVec
from ..crypto import IntegrityFailure, SecureEnvelope, chip_handle, open_envelope, seal_asset
from ..enclave import BootOutcome
from ..lifecycle import Actor, LifecycleState
from ..obfuscation import IpMode, LockedIpModel
from ..puf import compute_chip_id, ideal_response
from ..transcript import Channel
from ..wrapper import NoPufUnit
from .config import SocConfig
from .harness import Scenario, Verdict

LS = LifecycleState
ADVERSARY = "adversary"


def _boot(sc: Scenario, tb, step: str, expected: BootOutcome, unlocked: bool | None = None):
    report = tb.chip.run_boot(sc.ami)
    window = list(range(report.start_index, report.end_index))
    sc.check(f"{step}.boot", expected.value, report.outcome.value, window)
    sc.check(f"{step}.phase_order", True, sc.phase_order_ok(report), report.scm_events)
    if unlocked is not None:
        all_unlocked = bool(report.unlocked) and all(m == IpMode.UNLOCKED.value for m in report.unlocked.values())
        sc.check(f"{step}.all_ips_unlocked", unlocked, all_unlocked, report.scm_events)
    return report


def _status(sc: Scenario, handle: str, party: str = "oem") -> dict:
    return sc.ami.as_party(party).request({"type": "Status", "chip": handle})


def _captured(sc: Scenario, kind: str, start: int = 0) -> list:
    return [
        e for e in sc.transcript.find(kind=kind, channel=Channel.AMI_NET, start=start)
        if e.dst == "ami"
    ]


def run_honest_lifecycle(config: SocConfig, seed: int = 0, ami_url: str | None = None) -> Verdict:
    sc = Scenario("honest", config, seed, ami_url)
    tb = sc.testbed("chip0")
    try:
        birth = sc.birth(tb)
    except NoPufUnit as exc:
        sc.notes.append(f"NoPufUnit: {exc}")
        sc.check("birth.registration", "RegisterAck", "NoPufUnit", list(range(len(sc.transcript))))
        return sc.verdict()
    window = list(range(birth.start_index, birth.end_index))
    sc.check("birth.registration", "RegisterAck", birth.registration, window)
    sc.check("birth.transition", "Accepted", birth.transition, window)
    if not birth.ok:
        sc.notes.append(f"birth failed: {birth.error}")
        return sc.verdict()
    handle = tb.chip.handle
    sc.check("birth.lifecycle", LS.PACKAGING_OEM.value, tb.chip.lifecycle.value)

    _boot(sc, tb, "packaging", BootOutcome.RELEASED, unlocked=True)
    sc.remember_vault(tb)

    r = sc.oem_transition(tb, LS.DEPLOYMENT)
    sc.check("transition.to_deployment", True, r.accepted, [len(sc.transcript) - 1])
    _boot(sc, tb, "deployment.first", BootOutcome.RELEASED, unlocked=True)
    rep = _boot(sc, tb, "deployment.second", BootOutcome.RELEASED, unlocked=True)
    sc.check("deployment.second.reprovisioned", None, rep.provisioning)

    r = sc.oem_transition(tb, LS.RECALL)
    sc.check("transition.to_recall", True, r.accepted, [len(sc.transcript) - 1])
    _boot(sc, tb, "recall", BootOutcome.RELEASED, unlocked=True)

    start = len(sc.transcript)
    r = sc.oem_transition(tb, LS.END_OF_LIFE)
    sc.check("transition.to_eol", True, r.accepted, list(range(start, len(sc.transcript))))
    remaining = sorted(k.value for k, _ in tb.chip.vault.entries)
    sc.check("eol.vault_after_purge", ["LifecycleState"], remaining)
    st = _status(sc, handle)
    sc.check("eol.ami_status", "Decommissioned", st.get("status"), [len(sc.transcript) - 1])

    rep = _boot(sc, tb, "eol", BootOutcome.TRUNCATED)
    sc.check("eol.phase3_bus_events", 0, len(rep.scm_events), list(range(rep.start_index, rep.end_index)))
    return sc.verdict()


def run_threat_counterfeit(config: SocConfig, seed: int = 0, ami_url: str | None = None) -> Verdict:
    """Untrusted test facility snoops registration traffic to register a counterfeit."""
    sc = Scenario("threat-counterfeit", config, seed, ami_url)
    tb = sc.testbed("chip0")
    start = len(sc.transcript)
    birth = sc.birth(tb)
    sc.check("birth.registration", "RegisterAck", birth.registration, list(range(start, len(sc.transcript))))
    if not birth.ok:
        return sc.verdict()

    # passive tap: everything the facility saw on the AMI link during birth
    tapped = [e for e in sc.transcript.since(start) if e.channel is Channel.AMI_NET]
    registers = [e for e in tapped if e.kind == "Register"]
    adversary = sc.ami.as_party(ADVERSARY)

    before = len(sc.transcript)
    reply = adversary.send_raw(registers[0].payload.decode())
    sc.check("replay_registration", "RegisterReject", reply.get("type"), [before, before + 1])

    chip_id = tb.chip.chip_id
    hits = [e.index for e in tapped if chip_id in e.payload or chip_id.hex().encode() in e.payload]
    sc.check("chip_id_recovered_from_tap", 0, len(hits), hits)

    # a forged session cannot be opened without the HSM transport key
    rng = sc.rng("adversary")
    fake_key = rng.randbytes(32)
    before = len(sc.transcript)
    reply = adversary.request({
        "type": "Session",
        "session": json.loads(registers[0].payload)["session"],
        "envelope": seal_asset(fake_key, rng.randbytes(32), rng.randbytes(16)).to_dict(),
    })
    sc.check("forged_session", "Denied", reply.get("type"), [before, before + 1])

    # the counterfeit re-uses the snooped registration under the original session
    before = len(sc.transcript)
    body = json.dumps({"chip_id": chip_id.hex(), "lifecycle": LS.FABRICATION_TEST.value}).encode()
    reply = adversary.request({
        "type": "Register",
        "session": json.loads(registers[0].payload)["session"],
        "envelope": seal_asset(body, fake_key, rng.randbytes(16)).to_dict(),
    })
    sc.check("counterfeit_registration", "RegisterReject", reply.get("type"), [before, before + 1])

    st = _status(sc, tb.chip.handle)
    sc.check("honest_chip.status", "Active", st.get("status"), [len(sc.transcript) - 1])
    _boot(sc, tb, "honest_chip.packaging", BootOutcome.RELEASED, unlocked=True)
    sc.remember_vault(tb)
    return sc.verdict()


def run_threat_reverse_engineering(
    config: SocConfig, seed: int = 0, ami_url: str | None = None, attempts: int | None = None
) -> Verdict:
    """A facility with the netlist but no keys tries to activate a cloned die."""
    attempts = config.attempts if attempts is None else attempts
    if attempts < 1:
        raise ValueError("attempts must be >= 1")
    sc = Scenario("threat-reverse-engineering", config, seed, ami_url)
    tb = sc.testbed("chip0")
    birth = sc.birth(tb)
    sc.check("birth.transition", "Accepted", birth.transition, list(range(birth.start_index, birth.end_index)))
    if not birth.ok:
        return sc.verdict()
    legit = _boot(sc, tb, "legit.packaging", BootOutcome.RELEASED, unlocked=True)
    sc.remember_vault(tb)

    clone = sc.testbed("clone")
    rng = sc.rng("adversary")
    adversary = sc.ami.as_party(ADVERSARY)

    # the clone's own identity is unknown to the ledger
    puf_ips = clone.chip.puf_ips(config.n_chip_id_ips)
    clone_id = compute_chip_id([ideal_response(clone.bus.wrappers[ip].puf) for ip in puf_ips]).digest
    clone_key = rng.randbytes(32)
    before = len(sc.transcript)
    reply = adversary.request({
        "type": "Provision",
        "chip": chip_handle(clone_id),
        "envelope": identity_envelope(clone_id, LS.PACKAGING_OEM, clone_key, rng.randbytes(16)),
    })
    sc.check("clone.provisioning", "Denied:Unknown", f"{reply.get('type')}:{reply.get('reason')}", [before, before + 1])

    # replaying the legitimate chip's request yields only ciphertext
    captured = _captured(sc, "Provision")
    before = len(sc.transcript)
    reply = adversary.send_raw(captured[0].payload.decode())
    opened = 0
    for a in reply.get("assets", []):
        try:
            open_envelope(SecureEnvelope.from_dict(a["envelope"]), clone_key)
            opened += 1
        except IntegrityFailure:
            pass
    sc.check("clone.replayed_provision_opened", 0, opened, [before, before + 1])

    # brute-force frame streams against every locked IP of the clone
    unlocked_ever = 0
    for ip in config.locked_ips:
        model: LockedIpModel = clone.bus.wrappers[ip.id].key_applier
        n = len(model.unlock_path)
        mask = (1 << model.input_width) - 1
        for _ in range(attempts):
            model.relock()
            for _ in range(n):
                model.apply_frame(BitVec(rng.getrandbits(model.input_width) & mask, model.input_width))
            if model.mode is IpMode.UNLOCKED:
                unlocked_ever += 1
    sc.check("clone.random_unlocks", 0, unlocked_ever)
    sc.notes.append(f"{attempts} random frame sequences per locked IP ({len(config.locked_ips)} IPs)")

    # locked outputs stay unrelated to the real function
    garbage_ok = True
    for ip in config.locked_ips:
        model = clone.bus.wrappers[ip.id].key_applier
        model.relock()
        same = 0
        trials = 1000
        for _ in range(trials):
            x = rng.getrandbits(model.input_width)
            same += model.step(x) == model.functional(x)
        garbage_ok = garbage_ok and same <= trials // 100
    sc.check("clone.locked_outputs_garbage", True, garbage_ok)
    sc.check("legit.unlocked_same_run", True, all(m == "Unlocked" for m in legit.unlocked.values()) and bool(legit.unlocked), legit.scm_events)
    return sc.verdict()


def run_threat_recycling(config: SocConfig, seed: int = 0, ami_url: str | None = None) -> Verdict:
    """A recycler re-powers and re-brands decommissioned chips."""
    sc = Scenario("threat-recycling", config, seed, ami_url)
    a = sc.testbed("chipA")
    birth = sc.birth(a)
    sc.check("chipA.birth", "Accepted", birth.transition, list(range(birth.start_index, birth.end_index)))
    if not birth.ok:
        return sc.verdict()
    handle_a = a.chip.handle
    _boot(sc, a, "chipA.packaging", BootOutcome.RELEASED, unlocked=True)
    sc.remember_vault(a)
    sc.check("chipA.to_deployment", True, sc.oem_transition(a, LS.DEPLOYMENT).accepted, [len(sc.transcript) - 1])
    _boot(sc, a, "chipA.deployment", BootOutcome.RELEASED)
    sc.check("chipA.to_recall", True, sc.oem_transition(a, LS.RECALL).accepted, [len(sc.transcript) - 1])

    # authorized refurbishment before end of life
    sc.check("chipA.reenroll", True, sc.oem_transition(a, LS.PACKAGING_OEM).accepted, [len(sc.transcript) - 1])
    _boot(sc, a, "chipA.reenrolled_boot", BootOutcome.RELEASED)
    sc.notes.append("re-enrollment keeps the original ChipID")
    sc.check("chipA.to_deployment_again", True, sc.oem_transition(a, LS.DEPLOYMENT).accepted, [len(sc.transcript) - 1])
    sc.check("chipA.to_recall_again", True, sc.oem_transition(a, LS.RECALL).accepted, [len(sc.transcript) - 1])
    sc.check("chipA.to_eol", True, sc.oem_transition(a, LS.END_OF_LIFE).accepted, [len(sc.transcript) - 1])

    # recycler re-powers the decommissioned chip
    _boot(sc, a, "recycled.chipA", BootOutcome.TRUNCATED)
    # re-marking: the local lifecycle register is forced back to Deployment
    a.chip._set_lifecycle(LS.DEPLOYMENT)
    rep = _boot(sc, a, "rebranded.chipA", BootOutcome.TRUNCATED)
    sc.check("rebranded.chipA.phase3_bus_events", 0, len(rep.scm_events))

    # chip B disappears from the field; the OEM decommissions it in the ledger only
    b = sc.testbed("chipB")
    birth = sc.birth(b)
    sc.check("chipB.birth", "Accepted", birth.transition, list(range(birth.start_index, birth.end_index)))
    if not birth.ok:
        return sc.verdict()
    sc.check("chipB.to_deployment", True, sc.oem_transition(b, LS.DEPLOYMENT).accepted, [len(sc.transcript) - 1])
    _boot(sc, b, "chipB.deployment", BootOutcome.RELEASED, unlocked=True)
    sc.remember_vault(b)
    oem = sc.ami.as_party("oem")
    oem_rng = sc.rng("oem")
    start = len(sc.transcript)
    state = LS.DEPLOYMENT
    replies = []
    for target in (LS.RECALL, LS.END_OF_LIFE):
        replies.append(oem.request(
            lifecycle_update(b.chip.handle, target, Actor.OEM, b.table.key(state, target), oem_rng.randbytes(16))
        )["type"])
        state = target
    sc.check("chipB.remote_decommission", ["Ack", "Ack"], replies, list(range(start, len(sc.transcript))))
    rep = _boot(sc, b, "recycled.chipB", BootOutcome.TRUNCATED)
    sc.check("recycled.chipB.reason", "Decommissioned", rep.reason, list(range(rep.start_index, rep.end_index)))

    # re-registration through captured birth traffic
    adversary = sc.ami.as_party(ADVERSARY)
    rejects = []
    for ev in _captured(sc, "Register"):
        before = len(sc.transcript)
        rejects.append(adversary.send_raw(ev.payload.decode()).get("type"))
    sc.check("reregistration", ["RegisterReject", "RegisterReject"], rejects, [len(sc.transcript) - 1])

    # ledger-side transitions out of end of life are refused
    before = len(sc.transcript)
    reply = sc.ami.as_party("oem").request(
        lifecycle_update(b.chip.handle, LS.DEPLOYMENT, Actor.OEM, bytes(32), oem_rng.randbytes(16))
    )
    sc.check("chipB.revive", "Denied", reply.get("type"), [before, before + 1])
    for h in (handle_a, b.chip.handle):
        sc.check(f"status.{h[:8]}", "Decommissioned", _status(sc, h).get("status"), [len(sc.transcript) - 1])
    return sc.verdict()


SCENARIOS = {
    "honest": run_honest_lifecycle,
    "threat-counterfeit": run_threat_counterfeit,
    "threat-reverse-engineering": run_threat_reverse_engineering,
    "threat-recycling": run_threat_recycling,
}


def run_suite(config: SocConfig, seed: int = 0, ami_url: str | None = None) -> dict[str, Verdict]:
    return {name: fn(config, seed, ami_url) for name, fn in SCENARIOS.items()}
