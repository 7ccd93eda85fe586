"""Behaviour of token holders: sequencers, wallets, the scripted attacker and spammers.

Agents see the ledger only through their node's :class:`UtxoTangle` and hand
back transactions; the network layer decides who hears about them. Every
transaction an agent returns has already passed the node's own validation
(:meth:`UtxoTangle.evaluate`), so honest agents never emit invalid data.
Spammers are the exception on purpose.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import NamedTuple

from .crypto import ZERO_DIGEST, Identity
from .inflation import chain_inflation, evaluate_branch_bonus
from .ledger import (
    AddressLock,
    ChainConstraint,
    DelegationLock,
    Output,
    OutputId,
    TagAlongLock,
    Transaction,
    ValidationError,
    chain_id_of,
    min_storage_deposit,
    origin_chain_id,
    stem_output,
)
from .params import LedgerParams
from .tangle import Status, UtxoTangle
from .timeline import real_time_of, slot_of, slot_start, ticks_at, ticks_of


class InsufficientFunds(ValueError):
    pass


class Emission(NamedTuple):
    tx: Transaction
    private: bool = False
    tag: str | None = None


@dataclass
class SequencerConfig:
    beat_ticks: int = 12
    fanout: int = 1
    min_tag_along_fee: int = 0
    branch_window_ticks: int = 16
    max_ahead_ticks: int = 64
    max_candidates: int = 32
    endorse_top_k: int = 6
    max_tag_alongs: int = 4
    freeze_slots: int = 20


class Selection(NamedTuple):
    pred: OutputId
    endorsements: tuple[bytes, ...]
    extra: tuple[OutputId, ...] = ()


# ---- sequencer ---------------------------------------------------------------


@dataclass
class SequencerAgent:
    name: str
    identity: Identity
    origin: OutputId
    params: LedgerParams
    config: SequencerConfig = field(default_factory=SequencerConfig)
    private: bool = False
    target: int | None = None
    last_ts: int = 0
    last_tx: bytes | None = None
    emitted: int = 0

    def __post_init__(self) -> None:
        self.chain_id = origin_chain_id(self.origin)
        if self.target is None:
            self.target = slot_start(1)

    def wake_ms(self) -> int:
        return real_time_of(self.target, self.params)


def decide_timestamp_target(agent: SequencerAgent, now_ticks: int, prev_ts: int) -> int:
    """Next timestamp to aim for: paced after ``prev_ts``, snapped to slot edges."""
    cfg = agent.config
    t = max(now_ticks, prev_ts + max(cfg.beat_ticks, agent.params.sequencer_pace_ticks))
    boundary = slot_start(slot_of(prev_ts) + 1)
    if t >= boundary or ticks_of(t) >= 128 - cfg.branch_window_ticks:
        t = boundary if boundary >= now_ticks else now_ticks
    return min(t, now_ticks + cfg.max_ahead_ticks)


def _own_chain_index(tx: Transaction, chain_id: bytes) -> int | None:
    for i, o in enumerate(tx.outputs):
        if o.chain is not None and not o.chain.origin and o.chain.chain_id == chain_id:
            return i
    return None


def _milestone_output(agent: SequencerAgent, amount: int, inflation: int, vrf: bytes | None = None) -> Output:
    return Output(
        amount,
        AddressLock(agent.identity.address),
        ChainConstraint(agent.chain_id),
        sequencer=True,
        inflation=inflation,
        vrf=vrf,
    )


def own_milestones(view: UtxoTangle, agent: SequencerAgent, slot: int) -> list[bytes]:
    out = []
    for t in view.seq_txs_in_slot(slot):
        tx = view.vertices[t].tx
        if tx.outputs[tx.sequencer_index].chain.chain_id == agent.chain_id:
            out.append(t)
    return out


def make_branch(agent: SequencerAgent, view: UtxoTangle, ts: int) -> Transaction | None:
    """Branch at slot edge ``ts`` from the own chain tip of the previous slot."""
    slot = slot_of(ts)
    own = own_milestones(view, agent, slot - 1)
    if own:
        if agent.private and agent.last_tx in own:
            # a private fork keeps whatever it has consumed since going dark
            pred_tx = agent.last_tx
        else:
            # heaviest baseline wins, then the latest own milestone on it, which holds every
            # earlier same-baseline milestone in its cone
            best = max(own, key=lambda t: (view.vertices[t].coverage, t))
            base = view.vertices[best].baseline
            same = [t for t in own if view.vertices[t].baseline == base]
            pred_tx = max(same, key=lambda t: (view.vertices[t].tx.timestamp, t))
        pv = view.vertices[pred_tx]
        pred = OutputId(pred_tx, pv.tx.sequencer_index)
        baseline = pv.baseline
    elif slot == 1 and view.output(agent.origin) is not None:
        pred = agent.origin
        baseline = view.genesis_id
    else:
        return None
    stem = view.records[baseline].stem_oid
    pred_out = view.output(pred)
    pred_ts = view.vertices[pred.tx_id].tx.timestamp
    pred_vrf = view.output(stem).vrf
    bonus = evaluate_branch_bonus(agent.identity.secret, pred_vrf, slot, agent.params)
    infl = chain_inflation(pred_out.amount, slot_of(pred_ts), slot, agent.params) + bonus.bonus
    ms = _milestone_output(agent, pred_out.amount + infl, infl, bonus.proof)
    return Transaction((stem, pred), (ms, stem_output(bonus.proof)), (), ts).signed(agent.identity)


def own_output_in_ledger(view: UtxoTangle, endorsed: bytes, chain_id: bytes) -> OutputId | None:
    """Latest output of chain ``chain_id`` inside the ledger of ``endorsed``.

    Starts from the chain tip in the endorsed transaction's baseline state and
    follows consumers through its past cone.
    """
    ev = view.vertices[endorsed]
    state = view.state_of(ev.baseline)
    oid = state.chain_tips.get(chain_id)
    if oid is None:
        return None
    info = view.cone_info(endorsed, ev.baseline)
    while True:
        c = info.consumers.get(oid)
        if c is None:
            return oid
        idx = _own_chain_index(view.vertices[c].tx, chain_id)
        if idx is None:
            return None
        oid = OutputId(c, idx)


def _build_milestone(
    agent: SequencerAgent, view: UtxoTangle, sel: Selection, ts: int, extra_outputs: tuple[Output, ...] = (), take: int = 0
) -> Transaction:
    pred_out = view.output(sel.pred)
    pred_ts = view.vertices[sel.pred.tx_id].tx.timestamp
    infl = chain_inflation(pred_out.amount, slot_of(pred_ts), slot_of(ts), agent.params)
    extra_amount = sum(view.output(o).amount for o in sel.extra)
    ms = _milestone_output(agent, pred_out.amount + infl + extra_amount - take, infl)
    return Transaction(
        (sel.pred,) + sel.extra, (ms,) + extra_outputs, sel.endorsements, ts
    ).signed(agent.identity)


def select_inputs(agent: SequencerAgent, view: UtxoTangle, ts: int) -> list[Selection]:
    """Candidate selections for a non-branch milestone at ``ts``, best guesses first."""
    slot = slot_of(ts)
    cfg = agent.config
    out: list[Selection] = []
    seen: set = set()

    def add(sel: Selection) -> None:
        if sel not in seen and len(out) < cfg.max_candidates:
            seen.add(sel)
            out.append(sel)

    latest = None
    if agent.last_tx is not None and view.is_valid(agent.last_tx):
        lv = view.vertices[agent.last_tx]
        if lv.slot == slot and lv.tx.timestamp < ts:
            latest = lv
    if latest is not None:
        add(Selection(OutputId(latest.id, latest.tx.sequencer_index), ()))
    if agent.private:
        return out

    targets = []
    for t in view.seq_txs_in_slot(slot):
        v = view.vertices[t]
        tx = v.tx
        if tx.timestamp >= ts or tx.outputs[tx.sequencer_index].chain.chain_id == agent.chain_id:
            continue
        targets.append(v)
    targets.sort(key=lambda v: (-v.coverage, v.arrival))
    targets = targets[: cfg.endorse_top_k]
    for e in targets:
        ends = [e.id]
        for other in targets:
            if len(ends) >= cfg.fanout:
                break
            if other.id not in ends and other.baseline == e.baseline:
                ends.append(other.id)
        ends_t = tuple(ends)
        if latest is not None and latest.baseline == e.baseline:
            add(Selection(OutputId(latest.id, latest.tx.sequencer_index), ends_t))
        own = own_output_in_ledger(view, e.id, agent.chain_id)
        if own is not None and view.vertices[own.tx_id].tx.timestamp < ts:
            add(Selection(own, ends_t))
    return out


def _try(view: UtxoTangle, tx: Transaction):
    try:
        return view.evaluate(tx)
    except ValidationError:
        return None


def _tag_along_candidates(agent: SequencerAgent, view: UtxoTangle, ts: int, used: set) -> list[OutputId]:
    slot = slot_of(ts)
    window = agent.params.tag_along_sequencer_window_slots
    out = []
    for oid in view.tag_along_outputs(agent.chain_id):
        if oid in used or view.consumers.get(oid):
            continue
        v = view.vertices.get(oid.tx_id)
        if v is None or v.status is not Status.VALID:
            continue
        o = v.tx.outputs[oid.index]
        if o.amount < agent.config.min_tag_along_fee:
            continue
        if not (0 <= slot - o.lock.creation_slot < window):
            continue
        if v.tx.timestamp + agent.params.sequencer_pace_ticks > ts:
            continue
        out.append(oid)
    return out


def _delegation_addon(agent: SequencerAgent, view: UtxoTangle, best, ts: int):
    """Freeze one open delegation targeting this chain, if the budget allows."""
    slot = slot_of(ts)
    state = view.state_of(best.baseline)
    for oid in sorted(state.outputs):
        o = state.outputs[oid]
        lock = o.lock
        if not isinstance(lock, DelegationLock) or lock.target_chain != agent.chain_id:
            continue
        if lock.freeze_until is not None and slot < lock.freeze_until + agent.params.revocation_window_slots:
            continue
        until = slot + min(agent.config.freeze_slots, lock.max_freeze_slots)
        succ = Output(
            o.amount + lock.inflation_advance,
            DelegationLock(lock.owner, lock.target_chain, until, lock.inflation_advance, lock.max_freeze_slots),
            ChainConstraint(chain_id_of(oid, o)),
        )
        return oid, succ, lock.inflation_advance
    return None


def sequencer_step(agent: SequencerAgent, view: UtxoTangle, local_ms: int) -> Transaction | None:
    """One pass of the sequencer loop; returns a transaction when the target is due."""
    now = ticks_at(local_ms, agent.params)
    if real_time_of(agent.target, agent.params) > local_ms:
        return None
    ts = agent.target
    tx = None
    if ticks_of(ts) == 0:
        tx = make_branch(agent, view, ts)
        if tx is not None and _try(view, tx) is None:
            tx = None
        if tx is None:
            # no branch this slot: try a milestone right after the edge
            agent.target = ts + 1
            return None
    else:
        tx = _best_milestone(agent, view, ts)
    if tx is not None:
        agent.last_ts = ts
        agent.last_tx = tx.id
        agent.emitted += 1
    agent.target = decide_timestamp_target(agent, max(now, ts), ts)
    if agent.target <= ts:
        agent.target = ts + 1
    return tx


def _best_milestone(agent: SequencerAgent, view: UtxoTangle, ts: int) -> Transaction | None:
    best_tx = None
    best_v = None
    for sel in select_inputs(agent, view, ts):
        tx = _build_milestone(agent, view, sel, ts)
        v = _try(view, tx)
        if v is None:
            continue
        # strict comparison: an equal candidate never displaces an earlier one
        if best_v is None or v.coverage > best_v.coverage:
            best_tx, best_v = tx, v
    if best_tx is None:
        return None
    sel = Selection(best_tx.inputs[0], best_tx.endorsements, best_tx.inputs[1:])
    added = 0
    for oid in _tag_along_candidates(agent, view, ts, set(sel.extra)):
        if added >= agent.config.max_tag_alongs:
            break
        trial_sel = Selection(sel.pred, sel.endorsements, sel.extra + (oid,))
        tx = _build_milestone(agent, view, trial_sel, ts)
        v = _try(view, tx)
        if v is not None and v.coverage >= best_v.coverage:
            sel, best_tx, best_v = trial_sel, tx, v
            added += 1
    if not agent.private:
        addon = _delegation_addon(agent, view, best_v, ts)
        if addon is not None:
            oid, succ, take = addon
            trial_sel = Selection(sel.pred, sel.endorsements, sel.extra + (oid,))
            tx = _build_milestone(agent, view, trial_sel, ts, (succ,), take + view.output(oid).amount)
            if tx.outputs[0].amount >= agent.params.min_sequencer_amount:
                v = _try(view, tx)
                if v is not None and v.coverage >= best_v.coverage:
                    best_tx = tx
    return best_tx


# ---- delegation helpers ----------------------------------------------------


def inflation_advance_for(amount: int, slot: int, freeze_slots: int, params: LedgerParams, keep_percent: int = 10) -> int:
    """Advance a delegator can ask for: the freeze period's inflation minus the sequencer's margin."""
    per_slot = amount // (params.inflation_c + slot)
    return freeze_slots * per_slot * (100 - keep_percent) // 100


def delegation_freeze_tx(
    seq_tx_inputs: tuple[OutputId, Output, int],
    sequencer: SequencerAgent,
    deleg: tuple[OutputId, Output],
    until_slot: int,
    ts: int,
) -> Transaction:
    """Milestone that freezes ``deleg`` until ``until_slot`` and pays the advance into it."""
    pred_oid, pred_out, pred_ts = seq_tx_inputs
    doid, dout = deleg
    lock = dout.lock
    infl = chain_inflation(pred_out.amount, slot_of(pred_ts), slot_of(ts), sequencer.params)
    succ = Output(
        dout.amount + lock.inflation_advance,
        DelegationLock(lock.owner, lock.target_chain, until_slot, lock.inflation_advance, lock.max_freeze_slots),
        ChainConstraint(chain_id_of(doid, dout)),
    )
    ms = _milestone_output(sequencer, pred_out.amount + infl - lock.inflation_advance, infl)
    return Transaction((pred_oid, doid), (ms, succ), (), ts).signed(sequencer.identity)


def delegation_unfreeze_tx(
    seq_tx_inputs: tuple[OutputId, Output, int],
    sequencer: SequencerAgent,
    deleg: tuple[OutputId, Output],
    ts: int,
) -> Transaction:
    """Early unfreeze: the funds stay put and the revocation window opens now."""
    pred_oid, pred_out, pred_ts = seq_tx_inputs
    doid, dout = deleg
    lock = dout.lock
    infl = chain_inflation(pred_out.amount, slot_of(pred_ts), slot_of(ts), sequencer.params)
    succ = Output(
        dout.amount,
        DelegationLock(lock.owner, lock.target_chain, slot_of(ts), lock.inflation_advance, lock.max_freeze_slots),
        ChainConstraint(chain_id_of(doid, dout)),
    )
    ms = _milestone_output(sequencer, pred_out.amount + infl, infl)
    return Transaction((pred_oid, doid), (ms, succ), (), ts).signed(sequencer.identity)


def delegation_revoke_tx(owner: Identity, deleg: tuple[OutputId, Output], ts: int) -> Transaction:
    """Owner takes the delegated funds back to a plain address output."""
    doid, dout = deleg
    return Transaction(
        (doid,), (Output(dout.amount, AddressLock(owner.address)),), (), ts, terminations=(chain_id_of(doid, dout),)
    ).signed(owner)


def delegation_cycle(
    owner: Identity,
    sequencer: SequencerAgent,
    seq_pred: tuple[OutputId, Output, int],
    deleg: tuple[OutputId, Output],
    freeze_at: int,
    until_slot: int,
    revoke_at: int,
) -> list[Transaction]:
    """Freeze at ``freeze_at`` until ``until_slot``, then revoke by the owner at ``revoke_at``."""
    freeze = delegation_freeze_tx(seq_pred, sequencer, deleg, until_slot, freeze_at)
    frozen = (OutputId(freeze.id, 1), freeze.outputs[1])
    revoke = delegation_revoke_tx(owner, frozen, revoke_at)
    return [freeze, revoke]


# ---- wallets ---------------------------------------------------------------


@dataclass
class WalletAgent:
    name: str
    identity: Identity
    utxo: OutputId
    balance: int
    params: LedgerParams
    rng: random.Random
    recipients: list = field(default_factory=list)  # addresses
    tag_along_targets: list = field(default_factory=list)  # chain ids
    amount: int = 1000
    fee: int = 100
    every_slots: int = 3
    start_slot: int = 2
    stop_slot: int | None = None
    last_ts: int = 0
    next_ts: int | None = None
    history: list = field(default_factory=list)  # (utxo, balance) before each spend
    delegate_chain: bytes | None = None
    delegate_amount: int = 0
    delegate_advance: int = 0

    def __post_init__(self) -> None:
        if self.next_ts is None:
            self.next_ts = self._pick_ts(self.start_slot)

    def _pick_ts(self, slot: int) -> int:
        return slot_start(slot) + self.rng.randint(30, 90)

    def wake_ms(self) -> int | None:
        if self.next_ts is None:
            return None
        return real_time_of(self.next_ts, self.params)


def wallet_transfer(
    agent: WalletAgent, to: bytes, amount: int, tag_along_target: bytes, fee: int, ts: int
) -> Transaction:
    """Transfer with a tag-along fee; outputs are recipient, fee, remainder."""
    params = agent.params
    recipient = Output(amount, AddressLock(to))
    tag = Output(fee, TagAlongLock(tag_along_target, agent.identity.address, slot_of(ts)))
    probe = Output(agent.balance, AddressLock(agent.identity.address))
    remainder_amount = agent.balance - amount - fee
    need = min_storage_deposit(recipient.byte_size, params)
    if amount < need or remainder_amount < min_storage_deposit(probe.byte_size, params):
        raise InsufficientFunds(f"{agent.name}: balance {agent.balance} cannot cover {amount} + {fee} + deposits")
    remainder = Output(remainder_amount, AddressLock(agent.identity.address))
    return Transaction((agent.utxo,), (recipient, tag, remainder), (), ts).signed(agent.identity)


def make_delegation(agent: WalletAgent, ts: int) -> Transaction:
    """Lock part of the wallet's funds for the sequencer chain ``agent.delegate_chain``."""
    me = agent.identity.address
    lock = DelegationLock(me, agent.delegate_chain, None, agent.delegate_advance, agent.params.max_freeze_slots)
    deleg = Output(agent.delegate_amount, lock, ChainConstraint(ZERO_DIGEST, origin=True))
    remainder = Output(agent.balance - agent.delegate_amount, AddressLock(me))
    if remainder.amount < min_storage_deposit(remainder.byte_size, agent.params):
        raise InsufficientFunds(f"{agent.name}: cannot delegate {agent.delegate_amount}")
    return Transaction((agent.utxo,), (deleg, remainder), (), ts).signed(agent.identity)


def wallet_step(agent: WalletAgent, view: UtxoTangle, local_ms: int) -> Transaction | None:
    if agent.next_ts is None or real_time_of(agent.next_ts, agent.params) > local_ms:
        return None
    ts = agent.next_ts
    if agent.delegate_chain is not None:
        agent.next_ts = agent._pick_ts(slot_of(ts) + agent.every_slots)
        tx = make_delegation(agent, ts)
        view.evaluate(tx)
        agent.delegate_chain = None
        agent.history.append((agent.utxo, agent.balance))
        agent.utxo = OutputId(tx.id, 1)
        agent.balance = tx.outputs[1].amount
        agent.last_ts = ts
        return tx
    slot = slot_of(ts)
    nxt = slot + agent.every_slots
    agent.next_ts = None if agent.stop_slot is not None and nxt > agent.stop_slot else agent._pick_ts(nxt)
    # fall back if the previous spend did not make it into this view
    while agent.history and view.vertices.get(agent.utxo.tx_id) is not None and (
        view.vertices[agent.utxo.tx_id].status is Status.REJECTED
    ):
        agent.utxo, agent.balance = agent.history.pop()
    if not agent.recipients or not agent.tag_along_targets:
        return None
    to = agent.rng.choice(agent.recipients)
    target = agent.rng.choice(agent.tag_along_targets)
    try:
        tx = wallet_transfer(agent, to, agent.amount, target, agent.fee, ts)
    except InsufficientFunds:
        return None
    if ts < agent.last_ts + agent.params.user_pace_ticks:
        return None
    try:
        view.evaluate(tx)
    except ValidationError:
        return None
    agent.history.append((agent.utxo, agent.balance))
    agent.utxo = OutputId(tx.id, 2)
    agent.balance = tx.outputs[2].amount
    agent.last_ts = ts
    return tx


# ---- adversary ---------------------------------------------------------------


@dataclass
class AdversaryAgent:
    """Private-fork double spender.

    Runs an honest sequencer until ``fork_slot``. Then it pays a merchant in
    public (the victim transfer), spends the same output to itself in private,
    and keeps extending its own chain on the private side, branch after
    branch, without endorsing anyone. At ``release_slot`` the private history
    is handed to the network and the agent goes back to honest behaviour.
    """

    name: str
    sequencer: SequencerAgent | None
    wallet: WalletAgent | None
    fork_slot: int
    release_slot: int
    merchant: bytes
    victim_target: bytes | None
    fork_tick: int = 40
    state: str = "honest"
    victim: bytes | None = None
    double: bytes | None = None

    def wake_ms(self) -> int | None:
        cands = []
        if self.sequencer is not None:
            cands.append(self.sequencer.wake_ms())
        if self.state == "honest" and self.wallet is not None:
            cands.append(real_time_of(slot_start(self.fork_slot) + self.fork_tick, self.sequencer.params))
        if self.state == "private":
            cands.append(real_time_of(slot_start(self.release_slot), self.sequencer.params))
        return min(cands) if cands else None


def adversary_run(agent: AdversaryAgent, view: UtxoTangle, local_ms: int) -> list[Emission]:
    """Advance the attack script; returns what to emit and whether it stays private."""
    if agent.sequencer is None or agent.wallet is None:
        return []  # no capital, nothing to do
    params = agent.sequencer.params
    out: list[Emission] = []
    fork_ts = slot_start(agent.fork_slot) + agent.fork_tick
    if agent.state == "honest" and real_time_of(fork_ts, params) <= local_ms:
        out.extend(_fork(agent, view, fork_ts))
    if agent.state == "private" and real_time_of(slot_start(agent.release_slot), params) <= local_ms:
        agent.state = "released"
        agent.sequencer.private = False
    tx = sequencer_step(agent.sequencer, view, local_ms)
    if tx is not None:
        out.append(Emission(tx, agent.state == "private", None))
    return out


def _fork(agent: AdversaryAgent, view: UtxoTangle, ts: int) -> list[Emission]:
    w = agent.wallet
    seq = agent.sequencer
    agent.state = "private"
    seq.private = True
    try:
        victim = wallet_transfer(w, agent.merchant, w.amount, agent.victim_target, w.fee, ts)
        double = wallet_transfer(w, w.identity.address, w.amount, seq.chain_id, w.fee, ts)
        view.evaluate(victim)
        view.evaluate(double)
    except (InsufficientFunds, ValidationError):
        return []
    agent.victim, agent.double = victim.id, double.id
    return [Emission(victim, False, "victim"), Emission(double, True, "double")]


# ---- spammers ----------------------------------------------------------------


@dataclass
class SpammerAgent:
    """Emits deliberately bad or bursty traffic from its own funds.

    kind ``pace``: spends an output again 1 tick after it was produced.
    kind ``deposit``: creates outputs below the storage deposit.
    kind ``rate``: independent valid transfers 1 tick apart.
    """

    name: str
    identity: Identity
    utxos: list  # (OutputId, amount, producer timestamp)
    params: LedgerParams
    kind: str
    count: int
    start_slot: int = 3
    done: bool = False

    def wake_ms(self) -> int | None:
        if self.done:
            return None
        return real_time_of(slot_start(self.start_slot) + 10, self.params)


def spam_burst(agent: SpammerAgent) -> list[Transaction]:
    base = slot_start(agent.start_slot) + 10
    me = agent.identity.address
    out: list[Transaction] = []
    if agent.kind == "pace":
        oid, amount, _ = agent.utxos[0]
        first = Transaction((oid,), (Output(amount, AddressLock(me)),), (), base).signed(agent.identity)
        out.append(first)
        for i in range(agent.count):
            out.append(
                Transaction((OutputId(first.id, 0),), (Output(amount, AddressLock(me)),), (), base + 1 + i).signed(
                    agent.identity
                )
            )
    elif agent.kind == "deposit":
        for i, (oid, amount, _) in enumerate(agent.utxos[: agent.count]):
            out.append(
                Transaction(
                    (oid,), (Output(1, AddressLock(me)), Output(amount - 1, AddressLock(me))), (), base + i
                ).signed(agent.identity)
            )
    elif agent.kind == "rate":
        for i, (oid, amount, _) in enumerate(agent.utxos[: agent.count]):
            out.append(Transaction((oid,), (Output(amount, AddressLock(me)),), (), base + i).signed(agent.identity))
    else:
        raise ValueError(f"unknown spam kind {agent.kind!r}")
    agent.done = True
    return out
