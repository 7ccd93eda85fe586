import random

import pytest

from test_tangle import Net
from utxotangle.agents import (
    AdversaryAgent,
    InsufficientFunds,
    Selection,
    SpammerAgent,
    WalletAgent,
    adversary_run,
    decide_timestamp_target,
    delegation_cycle,
    make_branch,
    select_inputs,
    sequencer_step,
    spam_burst,
    wallet_transfer,
)
from utxotangle.fixtures import FIXTURE_PARAMS
from utxotangle.inflation import chain_inflation, evaluate_branch_bonus
from utxotangle.ledger import (
    AddressLock,
    ChainConstraint,
    DelegationLock,
    Output,
    OutputId,
    Rule,
    TagAlongLock,
    Transaction,
    ValidationError,
    chain_id_of,
)
from utxotangle.tangle import Status
from utxotangle.timeline import real_time_of, slot_start

P = FIXTURE_PARAMS


def test_timestamp_target_paces_and_snaps():
    n = Net([("A", 3000)])
    a = n.ag["A"]
    beat = max(a.config.beat_ticks, P.sequencer_pace_ticks)
    prev = slot_start(2) + 20
    assert decide_timestamp_target(a, prev, prev) == prev + beat
    # late in the slot the next target is the edge
    late = slot_start(3) - 5
    assert decide_timestamp_target(a, late, late) == slot_start(3)
    # never further ahead than the lead cap
    early_now = prev - 500
    assert decide_timestamp_target(a, early_now, prev) <= early_now + a.config.max_ahead_ticks


def test_make_branch_shape():
    n = Net([("A", 3000)])
    a = n.ag["A"]
    b = make_branch(a, n.t, slot_start(1))
    assert b.is_branch and b.endorsements == ()
    assert set(b.inputs) == {n.t.records[n.genesis.id].stem_oid, a.origin}
    bonus = evaluate_branch_bonus(a.identity.secret, n.t.output(n.t.records[n.genesis.id].stem_oid).vrf, 1, P)
    ms = b.outputs[b.sequencer_index]
    assert ms.amount == 3000 + chain_inflation(3000, 0, 1, P) + bonus.bonus
    assert ms.vrf == bonus.proof
    assert make_branch(a, n.t, slot_start(5)) is None  # nothing of its own in slot 4


def test_make_branch_takes_chain_tip_with_its_tag_alongs():
    n = Net([("A", 3000)], [("u", 900)])
    b1 = n.branch("A", 1)
    u = n.add(n.pay("u", n.genesis.labels["user:u"], 900, slot_start(1) + 2, n.ag["A"].chain_id, 100))
    m = n.milestone("A", n.seq_out(b1), slot_start(1) + 40, extra=[OutputId(u, 1)])
    b2 = make_branch(n.ag["A"], n.t, slot_start(2))
    assert OutputId(m, n.t.vertices[m].tx.sequencer_index) in b2.inputs


def test_two_agents_branching_from_one_stem_conflict():
    n = Net([("A", 3000), ("C", 2000)])
    a1, c1 = n.branch("A", 1), n.branch("C", 1)
    assert n.t.is_conflicting(a1, c1)
    assert n.t.preferred_branch(1) == a1


def test_select_inputs_prefers_heavier_target_and_reverts():
    n = Net([("A", 3000), ("B", 2000), ("C", 4000)])
    a1 = n.branch("A", 1)
    b = n.ag["B"]
    b1 = n.milestone("B", b.origin, slot_start(1) + 10, endorse=[a1])
    b.last_tx = b1
    c1 = n.branch("C", 1)
    assert n.t.is_conflicting(c1, b1)
    sels = select_inputs(b, n.t, slot_start(1) + 30)
    # the heavier conflicting target comes first and needs an earlier own output
    first_target = next(s for s in sels if s.endorsements)
    assert first_target.endorsements[0] == c1
    assert Selection(b.origin, (c1,)) in sels
    assert Selection(OutputId(b1, n.t.vertices[b1].tx.sequencer_index), (a1,)) in sels


def test_sequencer_step_consumes_tag_along():
    n = Net([("A", 3000)], [("u", 900)])
    a = n.ag["A"]
    n.t.attach(make_branch(a, n.t, slot_start(1)))
    a.last_tx = n.t.preferred_branch(1)
    u = n.add(n.pay("u", n.genesis.labels["user:u"], 900, slot_start(1) + 2, a.chain_id, 100))
    a.target = slot_start(1) + 40
    tx = sequencer_step(a, n.t, real_time_of(a.target, P))
    assert tx is not None and OutputId(u, 1) in tx.inputs
    assert n.t.attach(tx).status is Status.VALID


def _wallet(n, name, balance):
    return WalletAgent(name, n.users[name], n.genesis.labels[f"user:{name}"], balance, P, random.Random(1))


def test_wallet_transfer_outputs_and_insufficient_funds():
    n = Net([("A", 3000)], [("u", 900), ("w", 50)])
    u = _wallet(n, "u", 900)
    tx = wallet_transfer(u, n.users["w"].address, 300, n.ag["A"].chain_id, 50, 40)
    rec, tag, rem = tx.outputs
    assert (rec.amount, tag.amount, rem.amount) == (300, 50, 550)
    assert isinstance(tag.lock, TagAlongLock) and tag.lock.target_chain == n.ag["A"].chain_id
    assert n.t.attach(tx).status is Status.VALID
    with pytest.raises(InsufficientFunds):
        wallet_transfer(_wallet(n, "w", 50), n.users["u"].address, 40, n.ag["A"].chain_id, 5, 40)


def test_delegation_cycle_freeze_then_revoke():
    n = Net([("A", 3000)], [("u", 900)])
    a = n.ag["A"]
    owner = n.users["u"]
    lock = DelegationLock(owner.address, a.chain_id, None, 10, P.max_freeze_slots)
    mk = Transaction(
        (n.genesis.labels["user:u"],),
        (Output(600, lock, ChainConstraint(b"\0" * 32, origin=True)), Output(300, AddressLock(owner.address))),
        (),
        40,
    ).signed(owner)
    n.add(mk)
    b1 = n.branch("A", 1)
    deleg = (OutputId(mk.id, 0), mk.outputs[0])
    pred = (n.seq_out(b1), n.t.vertices[b1].tx.outputs[n.t.vertices[b1].tx.sequencer_index], slot_start(1))
    freeze_at = slot_start(1) + 30
    until = 2
    while_frozen = slot_start(until) - 1
    freeze, revoke = delegation_cycle(owner, a, pred, deleg, freeze_at, until, while_frozen)
    assert n.t.attach(freeze).status is Status.VALID
    assert freeze.outputs[1].amount == 610
    assert chain_id_of(OutputId(freeze.id, 1), freeze.outputs[1]) == chain_id_of(*deleg)
    # the owner cannot take the funds back while they are frozen
    with pytest.raises(ValidationError):
        n.t.evaluate(revoke)
    # once the freeze lapses the revocation window belongs to the owner
    _, ok = delegation_cycle(owner, a, pred, deleg, freeze_at, until, slot_start(until))
    v = n.t.evaluate(ok)
    assert v.tx.outputs[0].amount == 610


def test_adversary_without_capital_does_nothing():
    n = Net([("A", 3000)])
    adv = AdversaryAgent("eve", None, None, 3, 6, b"\1" * 32, None)
    assert adversary_run(adv, n.t, 10**9) == []
    assert adv.state == "honest"


def test_spammer_pace_burst_rejected():
    n = Net([("A", 3000)], [("u", 900)])
    sp = SpammerAgent("s", n.users["u"], [(n.genesis.labels["user:u"], 900, 0)], P, "pace", 3)
    burst = spam_burst(sp)
    assert len(burst) == 4 and sp.done
    assert n.t.attach(burst[0]).status is Status.VALID
    res = n.t.attach(burst[1])
    assert res.status is Status.REJECTED and res.rule is Rule.PACE
    with pytest.raises(ValueError):
        spam_burst(SpammerAgent("x", n.users["u"], [], P, "bogus", 1))
