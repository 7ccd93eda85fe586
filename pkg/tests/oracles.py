"""Brute-force reference computations and random workload generators.

Nothing here calls into the incremental machinery of ``utxotangle.tangle``:
cones are plain reachability over the full transaction set, ledger states are
"produced minus consumed" over a cone, and weighted sums use exact fractions.
The generators do use the package's transaction builders, since producing
valid transactions is not what is under test.
"""

from __future__ import annotations

import random
from fractions import Fraction
from math import floor

from utxotangle.agents import SequencerAgent, Selection, _build_milestone, make_branch, select_inputs
from utxotangle.crypto import Identity, KeyRegistry
from utxotangle.ledger import (
    AddressLock,
    Output,
    OutputId,
    TagAlongLock,
    Transaction,
    ValidationError,
    address_output,
    make_genesis,
    sequencer_origin,
)
from utxotangle.params import LedgerParams
from utxotangle.tangle import Status, UtxoTangle
from utxotangle.timeline import slot_of, slot_start, ticks_of

WINDOW = 64


class OracleTangle:
    """Reference semantics over a fixed set of valid transactions."""

    def __init__(self, genesis_tx: Transaction, txs: list[Transaction], supply: int) -> None:
        self.genesis = genesis_tx
        self.txs = {genesis_tx.id: genesis_tx, **{t.id: t for t in txs}}
        self.supply = supply
        self._cone: dict[bytes, frozenset] = {}
        self._baseline: dict[bytes, bytes] = {}
        self._delta: dict[bytes, int] = {}

    # plain DAG reachability, genesis included
    def cone(self, tid: bytes) -> frozenset:
        if tid not in self._cone:
            seen = {tid}
            stack = [tid]
            while stack:
                t = self.txs[stack.pop()]
                for oid in t.inputs:
                    if oid.tx_id not in seen:
                        seen.add(oid.tx_id)
                        stack.append(oid.tx_id)
                for e in t.endorsements:
                    if e not in seen:
                        seen.add(e)
                        stack.append(e)
            self._cone[tid] = frozenset(seen)
        return self._cone[tid]

    def state(self, tid: bytes) -> dict[OutputId, int]:
        """Unspent outputs of the ledger made of ``cone(tid)``."""
        produced = {}
        consumed = set()
        for t in self.cone(tid):
            tx = self.txs[t]
            for i, o in enumerate(tx.outputs):
                produced[OutputId(t, i)] = o.amount
            consumed.update(tx.inputs)
        return {k: v for k, v in produced.items() if k not in consumed}

    def is_seq(self, tid: bytes) -> bool:
        return tid == self.genesis.id or any(o.sequencer for o in self.txs[tid].outputs)

    def is_branch(self, tid: bytes) -> bool:
        tx = self.txs[tid]
        return tid == self.genesis.id or (self.is_seq(tid) and ticks_of(tx.timestamp) == 0)

    def seq_index(self, tid: bytes) -> int | None:
        return next((i for i, o in enumerate(self.txs[tid].outputs) if o.sequencer), None)

    def chain_pred(self, tid: bytes) -> bytes:
        tx = self.txs[tid]
        ms = tx.outputs[self.seq_index(tid)]
        for oid in tx.inputs:
            src = self.txs[oid.tx_id].outputs[oid.index]
            if src.chain is None:
                continue
            if src.chain.origin:
                # origin outputs live in genesis in every workload built here
                if ms.chain.chain_id == _origin_id(oid):
                    return oid.tx_id
            elif src.chain.chain_id == ms.chain.chain_id:
                return oid.tx_id
        raise AssertionError("milestone without chain predecessor")

    def stem_pred(self, tid: bytes) -> bytes:
        tx = self.txs[tid]
        for oid in tx.inputs:
            if self.txs[oid.tx_id].outputs[oid.index].stem:
                return oid.tx_id
        raise AssertionError("branch without stem input")

    def baseline(self, tid: bytes) -> bytes:
        if tid in self._baseline:
            return self._baseline[tid]
        if self.is_branch(tid):
            b = tid
        else:
            tx = self.txs[tid]
            pred = self.chain_pred(tid)
            if pred != self.genesis.id and slot_of(self.txs[pred].timestamp) == slot_of(tx.timestamp):
                b = self.baseline(pred)
            else:
                b = self.baseline(tx.endorsements[0])
        self._baseline[tid] = b
        return b

    def reference(self, tid: bytes) -> bytes:
        """Branch whose state ``tid``'s coverage delta is measured against."""
        return self.stem_pred(tid) if self.is_branch(tid) else self.baseline(tid)

    def rooted(self, tid: bytes) -> set[OutputId]:
        ref = self.reference(tid)
        state = self.state(ref)
        own = self.cone(tid) - self.cone(ref)
        out = {oid for t in own for oid in self.txs[t].inputs if oid in state}
        if ref != self.genesis.id:
            out.add(OutputId(ref, self.seq_index(ref)))
        return out

    def delta(self, tid: bytes) -> int:
        if tid == self.genesis.id:
            return self.supply
        if tid not in self._delta:
            state = self.state(self.reference(tid))
            self._delta[tid] = sum(state[o] for o in self.rooted(tid))
        return self._delta[tid]

    def branch_chain(self, branch: bytes) -> list[bytes]:
        out = [branch]
        while out[-1] != self.genesis.id:
            out.append(self.stem_pred(out[-1]))
        return out

    def coverage(self, tid: bytes) -> int:
        """Unrolled weighted sum over the branch chain, one floor at the end."""
        slot = slot_of(self.txs[tid].timestamp)
        if tid == self.genesis.id:
            return self.supply
        if self.is_branch(tid):
            chain, shift, own = self.branch_chain(tid), 0, 0
        else:
            chain, shift, own = self.branch_chain(self.baseline(tid)), 1, self.delta(tid)
        total = Fraction(0)
        for b in chain:
            bs = slot_of(self.txs[b].timestamp)
            if bs <= slot - WINDOW:
                break
            total += Fraction(self.delta(b), 2 ** (slot - bs + shift))
        return own + floor(total)

    def is_conflicting(self, a: bytes, b: bytes) -> bool:
        seen: dict[OutputId, bytes] = {}
        for t in self.cone(a) | self.cone(b):
            for oid in self.txs[t].inputs:
                if seen.setdefault(oid, t) != t:
                    return True
        return False

    def included(self, tid: bytes, branch: bytes) -> bool:
        return tid in self.cone(branch)


def _origin_id(oid: OutputId) -> bytes:
    from utxotangle.ledger import origin_chain_id

    return origin_chain_id(oid)


def beta_oracle(deltas_tip_first: list[int]) -> Fraction:
    return sum((Fraction(d, 2**i) for i, d in enumerate(deltas_tip_first[:WINDOW])), Fraction(0))


# ---- random tangles ---------------------------------------------------------


RANDOM_PARAMS = LedgerParams(
    initial_supply=10_000_000,
    min_sequencer_amount=100_000,
    max_branch_bonus=1_000,
    inflation_c=100,
    tag_along_sequencer_window_slots=12,
)


class Built:
    def __init__(self, params, registry, genesis, tangle, attached):
        self.params = params
        self.registry = registry
        self.genesis = genesis
        self.tangle = tangle
        self.attached = attached  # valid txs in attachment order

    def oracle(self) -> OracleTangle:
        return OracleTangle(self.genesis.tx, self.attached, self.params.initial_supply)


def random_tangle(rng: random.Random, max_txs: int = 30, slots: int = 4) -> Built:
    """A tangle grown by random sequencer and user moves; only valid txs are kept."""
    params = RANDOM_PARAMS
    reg = KeyRegistry()
    n_seq = rng.randint(2, 4)
    n_user = rng.randint(1, 3)
    seqs = [Identity.create(f"rt:seq{i}", reg) for i in range(n_seq)]
    users = [Identity.create(f"rt:user{i}", reg) for i in range(n_user)]
    alloc = [(f"seq:{i}", sequencer_origin(s.address, rng.randint(1, 20) * 100_000)) for i, s in enumerate(seqs)]
    alloc += [(f"user:{i}", address_output(u.address, rng.randint(5, 50) * 10_000)) for i, u in enumerate(users)]
    genesis = make_genesis(params, alloc)
    t = UtxoTangle(genesis, params, reg)
    agents = [SequencerAgent(f"s{i}", s, genesis.labels[f"seq:{i}"], params) for i, s in enumerate(seqs)]
    # user coins: (oid, amount, owner index, producer timestamp); spent coins stay listed for double spends
    coins = [(genesis.labels[f"user:{i}"], genesis.tx.outputs[genesis.labels[f"user:{i}"].index].amount, i, 0) for i in range(n_user)]
    attached: list[Transaction] = []

    def add(tx: Transaction | None) -> bool:
        if tx is None or len(attached) >= max_txs:
            return False
        if t.attach(tx).status is Status.VALID:
            attached.append(tx)
            return True
        return False

    for slot in range(1, slots + 1):
        for a in rng.sample(agents, len(agents)):
            if rng.random() < 0.85:
                tx = make_branch(a, t, slot_start(slot))
                if tx is not None and add(tx):
                    a.last_tx, a.last_ts = tx.id, tx.timestamp
        ts = slot_start(slot)
        while ts < slot_start(slot + 1) - 8 and len(attached) < max_txs:
            ts += rng.randint(1, 12)
            if ts >= slot_start(slot + 1):
                break
            if rng.random() < 0.65:
                a = rng.choice(agents)
                sels = select_inputs(a, t, ts)
                if a.last_tx is not None and t.is_valid(a.last_tx):
                    lv = t.vertices[a.last_tx]
                    if lv.slot == slot and lv.tx.timestamp < ts:
                        sels.append(Selection(OutputId(a.last_tx, lv.tx.sequencer_index), ()))
                if not sels:
                    continue
                sel = rng.choice(sels)
                extras = [o for o in t.tag_along_outputs(a.chain_id) if t.vertices[o.tx_id].tx.timestamp < ts]
                if extras and rng.random() < 0.5:
                    sel = Selection(sel.pred, sel.endorsements, (rng.choice(extras),))
                try:
                    tx = _build_milestone(a, t, sel, ts)
                    t.evaluate(tx)
                except (ValidationError, KeyError, AttributeError, TypeError):
                    continue
                if add(tx):
                    a.last_tx, a.last_ts = tx.id, ts
            else:
                ready = [c for c in coins if c[3] + params.user_pace_ticks <= ts and c[1] >= 2_000]
                if not ready:
                    continue
                oid, amount, owner, _ = rng.choice(ready)
                to = rng.randrange(n_user)
                pay = rng.randint(200, amount // 2)
                fee = rng.choice([0, rng.randint(1, 300)])
                target = rng.choice(agents).chain_id
                outs = (
                    Output(pay, AddressLock(users[to].address)),
                    Output(fee, TagAlongLock(target, users[owner].address, slot)),
                    Output(amount - pay - fee, AddressLock(users[owner].address)),
                )
                tx = Transaction((oid,), outs, (), ts).signed(users[owner])
                if add(tx):
                    coins.append((OutputId(tx.id, 0), pay, to, ts))
                    coins.append((OutputId(tx.id, 2), amount - pay - fee, owner, ts))
        if len(attached) >= max_txs:
            break
    return Built(params, reg, genesis, t, attached)


def reattach(built: Built, order: list[Transaction]) -> UtxoTangle:
    t = UtxoTangle(built.genesis, built.params, built.registry)
    for tx in order:
        t.attach(tx)
    return t


# ---- random ledger DAGs -----------------------------------------------------


def random_ledger_dag(rng: random.Random, max_txs: int = 50, params: LedgerParams | None = None):
    """Genesis plus a non-conflicting DAG of user transfers.

    Returns (genesis, registry, txs) with ``txs`` in creation order, which is
    one valid topological order.
    """
    params = params or LedgerParams(initial_supply=10**9, min_sequencer_amount=10**6)
    reg = KeyRegistry()
    n = rng.randint(2, 5)
    ids = [Identity.create(f"dag:{i}", reg) for i in range(n)]
    genesis = make_genesis(params, [(f"u{i}", address_output(ids[i].address, 10**7)) for i in range(n)])
    unspent = {genesis.labels[f"u{i}"]: (10**7, i, 0) for i in range(n)}
    txs = []
    for _ in range(rng.randint(1, max_txs)):
        owner = rng.randrange(n)
        mine = sorted((o for o, v in unspent.items() if v[1] == owner and v[0] >= 2_000))
        if not mine:
            continue
        picked = rng.sample(mine, rng.randint(1, min(3, len(mine))))
        total = sum(unspent[o][0] for o in picked)
        ts = max(unspent[o][2] for o in picked) + params.user_pace_ticks + rng.randint(0, 40)
        k = rng.randint(1, 3)
        # every piece keeps at least 200, which covers the storage deposit
        spare = total - 200 * k
        if spare < 0:
            k, spare = 1, total - 200
        cuts = sorted(rng.sample(range(spare + 1), k - 1))
        amounts = [200 + b - a for a, b in zip([0, *cuts], [*cuts, spare])]
        outs = tuple(Output(a, AddressLock(ids[rng.randrange(n)].address)) for a in amounts)
        tx = Transaction(tuple(picked), outs, (), ts).signed(ids[owner])
        for o in picked:
            del unspent[o]
        for i, o in enumerate(outs):
            who = next(j for j in range(n) if ids[j].address == o.lock.address)
            unspent[OutputId(tx.id, i)] = (o.amount, who, ts)
        txs.append(tx)
    return genesis, reg, txs


def random_topological_order(rng: random.Random, txs: list[Transaction]) -> list[Transaction]:
    by_id = {t.id: t for t in txs}
    deps = {t.id: {o.tx_id for o in t.inputs if o.tx_id in by_id} for t in txs}
    order = []
    ready = sorted(t for t, d in deps.items() if not d)
    while ready:
        pick = ready.pop(rng.randrange(len(ready)))
        order.append(by_id[pick])
        for t, d in deps.items():
            if pick in d:
                d.discard(pick)
                if not d:
                    ready.append(t)
        ready.sort()
    assert len(order) == len(txs)
    return order
