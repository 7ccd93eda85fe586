"""Multi-ledger transaction DAG with per-vertex baseline and ledger coverage.

Cones are never materialized from genesis. Each cone is computed relative to
a reference branch ``R`` and only contains the transactions that are not
already in ``ledger(R)``. Traversal stops at those transactions. An output
that is missing from ``state(R)`` but whose producer is in ``ledger(R)`` was
spent inside ``R``'s ledger, so consuming it again is a conflict.

Reference branches:
  * branch transaction      -> its stem predecessor
  * other sequencer tx      -> its baseline branch
  * non-sequencer tx        -> the latest anchor among its parents
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, NamedTuple

from .crypto import DEFAULT_REGISTRY, KeyRegistry
from .ledger import (
    DelegationLock,
    Genesis,
    LedgerState,
    OutputId,
    Resolved,
    Rule,
    TagAlongLock,
    Transaction,
    ValidationError,
    apply_many,
    chain_id_of,
    validate_transaction,
)
from .params import LedgerParams
from .timeline import slot_of

COVERAGE_WINDOW_SLOTS = 64


class Status(str, Enum):
    PENDING = "pending"
    VALID = "valid"
    REJECTED = "rejected"


class ConeInfo(NamedTuple):
    consumers: dict  # OutputId -> consuming tx id, over the cone
    txs: frozenset
    rooted: frozenset  # outputs of state(ref) consumed in the cone
    conflict: bool


EMPTY_CONE = ConeInfo({}, frozenset(), frozenset(), False)


@dataclass
class Vertex:
    tx: Transaction
    status: Status
    arrival: int
    ref: bytes | None = None
    anchor: bytes | None = None
    baseline: bytes | None = None
    delta: int | None = None
    coverage: int | None = None
    rooted: frozenset | None = None
    reason: str | None = None
    children: list = field(default_factory=list)
    missing: set = field(default_factory=set)

    @property
    def id(self) -> bytes:
        return self.tx.id

    @property
    def slot(self) -> int:
        return slot_of(self.tx.timestamp)


@dataclass
class BranchRecord:
    branch_id: bytes
    slot: int
    timestamp: int
    stem_pred: bytes | None
    stem_oid: OutputId
    seq_oid: OutputId | None
    state: LedgerState
    delta_txs: frozenset
    terms: tuple  # ((slot, delta), ...) along the branch chain, newest first
    delegations: dict  # target chain -> ((oid, freeze_until), ...)
    audit: bool
    delta: int = 0
    coverage: int = 0
    seen_round: int = 0


class AttachResult(NamedTuple):
    status: Status
    rule: Rule | None = None
    missing: tuple = ()
    detail: str = ""


def weighted_floor(terms: Iterable[tuple[int, int]], slot: int, extra_shift: int = 0) -> int:
    """floor(sum d / 2^(slot - s + extra_shift)) over ``terms``, computed exactly."""
    items = [(d, slot - s + extra_shift) for s, d in terms]
    if not items:
        return 0
    top = max(e for _, e in items)
    return sum(d << (top - e) for d, e in items) >> top


def _delegation_index(state: LedgerState) -> dict:
    idx: dict = defaultdict(list)
    for oid, o in state.outputs.items():
        if isinstance(o.lock, DelegationLock) and o.lock.freeze_until is not None:
            idx[o.lock.target_chain].append((oid, o.lock.freeze_until))
    return {k: tuple(sorted(v)) for k, v in idx.items()}


class UtxoTangle:
    """One node's view of the transaction DAG.

    Single writer: :meth:`attach` mutates, everything else only reads.
    """

    def __init__(
        self,
        genesis: Genesis,
        params: LedgerParams,
        registry: KeyRegistry | None = None,
        max_pending_per_sender: int = 64,
        pending_expiry_slots: int = 4,
    ) -> None:
        self.params = params
        self.registry = registry or DEFAULT_REGISTRY
        self.genesis = genesis
        self.genesis_id = genesis.tx.id
        self.max_pending_per_sender = max_pending_per_sender
        self.pending_expiry_slots = pending_expiry_slots
        self.vertices: dict[bytes, Vertex] = {}
        self.consumers: dict[OutputId, list[bytes]] = defaultdict(list)
        self.branches: dict[int, list[bytes]] = defaultdict(list)
        self.records: dict[bytes, BranchRecord] = {}
        self.seq_by_slot: dict[int, list[bytes]] = defaultdict(list)
        self.tag_alongs: dict[bytes, list[OutputId]] = defaultdict(list)
        self.tips: set[bytes] = set()
        self.waiting: dict[bytes, list[bytes]] = defaultdict(list)
        self.pending_by_sender: Counter = Counter()
        self.pruned_orphans: set[bytes] = set()
        self.probes: Counter = Counter()
        # (tx id, status, rule) in the order statuses were decided; drained by the caller
        self.transitions: list[tuple[bytes, Status, Rule | None]] = []
        self._cones: dict[tuple[bytes, bytes], ConeInfo] = {}
        self._arrivals = 0
        self._pruned_through = -1
        self._pending_since: dict[bytes, int] = {}
        self._late: list[tuple[bytes, int]] = []  # (tx id, prune round it arrived in)
        self._prune_round = 0
        self.late_grace_rounds = 2
        self.max_slot = 0

        supply = genesis.state.supply
        gv = Vertex(genesis.tx, Status.VALID, 0, None, self.genesis_id, self.genesis_id, supply, supply)
        gv.rooted = frozenset()
        self.vertices[self.genesis_id] = gv
        self.records[self.genesis_id] = BranchRecord(
            branch_id=self.genesis_id,
            slot=0,
            timestamp=0,
            stem_pred=None,
            stem_oid=genesis.stem,
            seq_oid=None,
            state=genesis.state,
            delta_txs=frozenset([self.genesis_id]),
            terms=((0, supply),),
            delegations=_delegation_index(genesis.state),
            audit=genesis.state.audit(),
            delta=supply,
            coverage=supply,
        )
        self.branches[0].append(self.genesis_id)
        self.tips.add(self.genesis_id)
        for i, o in enumerate(genesis.tx.outputs):
            if isinstance(o.lock, TagAlongLock):
                self.tag_alongs[o.lock.target_chain].append(OutputId(self.genesis_id, i))

    # ---- queries ---------------------------------------------------------

    def __contains__(self, tx_id: object) -> bool:
        return tx_id in self.vertices

    def vertex(self, tx_id: bytes) -> Vertex:
        v = self.vertices.get(tx_id)
        if v is None:
            raise KeyError(f"unknown transaction {tx_id[:8].hex()}")
        return v

    def is_valid(self, tx_id: bytes) -> bool:
        v = self.vertices.get(tx_id)
        return v is not None and v.status is Status.VALID

    def state_of(self, branch_id: bytes) -> LedgerState:
        return self.records[branch_id].state

    def output(self, oid: OutputId):
        v = self.vertices.get(oid.tx_id)
        if v is None or v.status is not Status.VALID or oid.index >= len(v.tx.outputs):
            return None
        return v.tx.outputs[oid.index]

    def in_ledger(self, tx_id: bytes, branch_id: bytes) -> bool:
        """True iff ``tx_id`` is in the past cone of branch ``branch_id`` (inclusive)."""
        if tx_id == self.genesis_id:
            return True
        v = self.vertices.get(tx_id)
        if v is None:
            return False
        ts = v.tx.timestamp
        b: bytes | None = branch_id
        while b is not None:
            rec = self.records.get(b)
            if rec is None or rec.timestamp < ts:
                return False
            if tx_id in rec.delta_txs:
                return True
            b = rec.stem_pred
        return False

    is_included = in_ledger

    def is_ancestor_branch(self, older: bytes, newer: bytes) -> bool:
        """Whether branch ``older`` is on the stem-predecessor chain of ``newer``."""
        target = self.records.get(older)
        if target is None:
            return False
        b: bytes | None = newer
        while b is not None:
            if b == older:
                return True
            rec = self.records.get(b)
            if rec is None or rec.slot < target.slot:
                return False
            b = rec.stem_pred
        return False

    def branch_chain(self, branch_id: bytes, limit: int | None = None) -> list[bytes]:
        """Branch ids from ``branch_id`` back along stem predecessors (tip first)."""
        out: list[bytes] = []
        b: bytes | None = branch_id
        while b is not None and (limit is None or len(out) < limit):
            out.append(b)
            rec = self.records.get(b)
            b = rec.stem_pred if rec else None
        return out

    def preferred_branch(self, slot: int) -> bytes:
        ids = [b for b in self.branches.get(slot, ()) if b in self.records]
        if not ids:
            raise KeyError(f"no branch in slot {slot}")
        return max(ids, key=lambda b: (self.records[b].coverage, b))

    def latest_branch_slot(self) -> int:
        return max(s for s, ids in self.branches.items() if any(b in self.records for b in ids))

    def preferred_tip(self) -> bytes:
        """Heaviest sequencer transaction of the latest slot that has one."""
        for s in sorted(self.seq_by_slot, reverse=True):
            ids = [t for t in self.seq_by_slot[s] if self.is_valid(t)]
            if ids:
                return max(ids, key=lambda t: (self.vertices[t].coverage, t))
        return self.genesis_id

    def preferred_chain_branch(self) -> bytes:
        return self.vertices[self.preferred_tip()].baseline or self.genesis_id

    def coverage(self, tx_id: bytes) -> int:
        v = self.vertex(tx_id)
        if v.coverage is None:
            raise ValueError("coverage is only defined for valid sequencer transactions")
        return v.coverage

    def coverage_delta(self, tx_id: bytes) -> int:
        v = self.vertex(tx_id)
        if v.delta is None:
            raise ValueError("coverage delta is only defined for valid sequencer transactions")
        return v.delta

    def rooted_set(self, tx_id: bytes) -> frozenset:
        v = self.vertex(tx_id)
        if v.rooted is None:
            raise ValueError("rooted set is only defined for valid sequencer transactions")
        return v.rooted

    def resolve_baseline(self, tx_id: bytes) -> bytes:
        v = self.vertex(tx_id)
        if v.baseline is None:
            raise ValueError("not a valid sequencer transaction")
        return v.baseline

    def past_cone(self, tx_id: bytes, stop_at_baseline: bool = False) -> set[bytes]:
        v = self.vertex(tx_id)
        if stop_at_baseline:
            if v.ref is None:
                return set()
            return set(self.cone_info(tx_id, v.ref).txs)
        seen = {tx_id}
        stack = [tx_id]
        while stack:
            for p in self.vertices[stack.pop()].tx.parents():
                if p != self.genesis_id and p not in seen and p in self.vertices:
                    seen.add(p)
                    stack.append(p)
        return seen

    def is_conflicting(self, a: bytes, b: bytes) -> bool:
        if a == b:
            return False
        va, vb = self.vertex(a), self.vertex(b)
        if va.status is not Status.VALID or vb.status is not Status.VALID:
            raise ValueError("conflict check needs two valid transactions")
        aa, ab = va.anchor, vb.anchor
        if self.is_ancestor_branch(aa, ab):
            ref = aa
        elif self.is_ancestor_branch(ab, aa):
            ref = ab
        else:
            return True
        ia, ib = self.cone_info(a, ref), self.cone_info(b, ref)
        return _merge([ia, ib], None).conflict

    def tag_along_outputs(self, chain_id: bytes) -> list[OutputId]:
        return list(self.tag_alongs.get(chain_id, ()))

    def seq_txs_in_slot(self, slot: int) -> list[bytes]:
        return [t for t in self.seq_by_slot.get(slot, ()) if self.is_valid(t)]

    # ---- cones -------------------------------------------------------------

    def cone_info(self, tx_id: bytes, ref: bytes) -> ConeInfo:
        if self.in_ledger(tx_id, ref):
            return EMPTY_CONE
        key = (tx_id, ref)
        hit = self._cones.get(key)
        if hit is not None:
            return hit
        todo = [tx_id]
        while todo:
            t = todo[-1]
            if (t, ref) in self._cones:
                todo.pop()
                continue
            v = self.vertices[t]
            need = [
                p
                for p in v.tx.parents()
                if (p, ref) not in self._cones and not self.in_ledger(p, ref)
            ]
            if need:
                todo.extend(need)
                continue
            todo.pop()
            self._cones[(t, ref)] = self._compose(v.tx, ref)
        return self._cones[key]

    def _compose(self, tx: Transaction, ref: bytes) -> ConeInfo:
        parent_infos = []
        for p in tx.parents():
            if not self.in_ledger(p, ref):
                parent_infos.append((p, self._cones[(p, ref)]))
        base = _merge([i for _, i in parent_infos], [p for p, _ in parent_infos])
        consumers = dict(base.consumers)
        rooted = set(base.rooted)
        conflict = base.conflict
        state = self.records[ref].state.outputs
        tid = tx.id
        for oid in tx.inputs:
            prev = consumers.get(oid)
            if prev is not None and prev != tid:
                conflict = True
            consumers[oid] = tid
            if oid in state:
                rooted.add(oid)
            elif self.in_ledger(oid.tx_id, ref):
                conflict = True
        return ConeInfo(consumers, base.txs | {tid}, frozenset(rooted), conflict)

    # ---- attachment --------------------------------------------------------

    def attach(self, tx: Transaction, solicited: bool = False) -> AttachResult:
        """Add ``tx`` to the DAG, or park it until its parents are known.

        ``solicited`` transactions were requested by this node (sync or pull)
        and are exempt from the per-sender pending cap.
        """
        tid = tx.id
        v = self.vertices.get(tid)
        if v is not None:
            return AttachResult(v.status, None, tuple(sorted(v.missing)), v.reason or "")
        if tid in self.pruned_orphans:
            if tid not in self.waiting:
                return AttachResult(Status.REJECTED, Rule.INVALID_PARENT, (), "already pruned as orphan")
            # a pruned orphan turned out to be needed again (e.g. after a partition heals)
            self.pruned_orphans.discard(tid)
        self._arrivals += 1
        v = Vertex(tx, Status.PENDING, self._arrivals)
        for p in tx.parents():
            pv = self.vertices.get(p)
            if pv is None or pv.status is Status.PENDING:
                v.missing.add(p)
            elif pv.status is Status.REJECTED:
                return self._reject_new(v, Rule.INVALID_PARENT, "parent was rejected")
        if v.missing:
            if not solicited and self.pending_by_sender[tx.sender] >= self.max_pending_per_sender:
                return AttachResult(Status.REJECTED, Rule.PENDING_LIMIT, (), "too many pending transactions")
            self.vertices[tid] = v
            self.pending_by_sender[tx.sender] += 1
            self._pending_since[tid] = self.max_slot
            for p in v.missing:
                self.waiting[p].append(tid)
            return AttachResult(Status.PENDING, None, tuple(sorted(v.missing)))
        self.vertices[tid] = v
        result = self._solidify(v)
        self._wake(tid)
        return result

    def _reject_new(self, v: Vertex, rule: Rule, detail: str) -> AttachResult:
        v.status = Status.REJECTED
        v.reason = rule.value
        self.vertices[v.id] = v
        self.transitions.append((v.id, Status.REJECTED, rule))
        self._wake(v.id)
        return AttachResult(Status.REJECTED, rule, (), detail)

    def _wake(self, tid: bytes) -> None:
        stack = [tid]
        while stack:
            done = stack.pop()
            status = self.vertices[done].status
            for child in self.waiting.pop(done, ()):
                cv = self.vertices.get(child)
                if cv is None or cv.status is not Status.PENDING:
                    continue
                cv.missing.discard(done)
                if status is Status.REJECTED or not cv.missing:
                    self._pending_since.pop(child, None)
                if status is Status.REJECTED:
                    cv.status = Status.REJECTED
                    cv.reason = Rule.INVALID_PARENT.value
                    self.transitions.append((child, Status.REJECTED, Rule.INVALID_PARENT))
                    self.pending_by_sender[cv.tx.sender] -= 1
                    stack.append(child)
                elif not cv.missing:
                    self.pending_by_sender[cv.tx.sender] -= 1
                    self._solidify(cv)
                    stack.append(child)

    def _solidify(self, v: Vertex) -> AttachResult:
        try:
            self._evaluate(v, commit=True)
        except ValidationError as e:
            v.status = Status.REJECTED
            v.reason = e.rule.value
            self.transitions.append((v.id, Status.REJECTED, e.rule))
            return AttachResult(Status.REJECTED, e.rule, (), str(e))
        self.transitions.append((v.id, Status.VALID, None))
        return AttachResult(Status.VALID)

    def evaluate(self, tx: Transaction) -> Vertex:
        """Dry run: full validation and coverage of ``tx`` without adding it.

        Raises :class:`ValidationError` when the transaction would be rejected
        (including unknown parents, reported as missing-input).
        """
        for p in tx.parents():
            if not self.is_valid(p):
                raise ValidationError(Rule.MISSING_INPUT, f"parent {p[:8].hex()} not valid here")
        existing = self.vertices.get(tx.id)
        if existing is not None and existing.status is Status.VALID:
            return existing
        v = Vertex(tx, Status.PENDING, -1)
        self._evaluate(v, commit=False)
        return v

    def _resolve(self, tx: Transaction) -> list[Resolved]:
        out = []
        for oid in tx.inputs:
            pv = self.vertices[oid.tx_id]
            if oid.index >= len(pv.tx.outputs):
                raise ValidationError(Rule.MISSING_INPUT, f"output {oid.short()} does not exist")
            out.append(Resolved(oid, pv.tx.outputs[oid.index], pv.tx.timestamp))
        return out

    def _anchor_of(self, v: Vertex) -> bytes:
        return v.anchor if v.anchor is not None else self.genesis_id

    def _latest_anchor(self, anchors: Iterable[bytes]) -> bytes:
        best = self.genesis_id
        for a in anchors:
            if self.is_ancestor_branch(best, a):
                best = a
            elif not self.is_ancestor_branch(a, best):
                raise ValidationError(Rule.CONFLICT, "parents sit on diverging branches")
        return best

    def _sequencer_baseline(self, tx: Transaction, resolved: list[Resolved]) -> bytes:
        idx = tx.sequencer_index
        cid = tx.outputs[idx].chain.chain_id
        candidates = []
        pred = next(r for r in resolved if chain_id_of(r.oid, r.output) == cid)
        pv = self.vertices[pred.oid.tx_id]
        if slot_of(pred.timestamp) == tx.slot and pv.baseline is not None:
            candidates.append(pv.baseline)
        for e in tx.endorsements:
            ev = self.vertices[e]
            if ev.baseline is None:
                raise ValidationError(Rule.ENDORSEMENT, "endorsement target is not a sequencer transaction")
            candidates.append(ev.baseline)
        if not candidates:
            raise ValidationError(Rule.BASELINE, "baseline cannot be resolved")
        if any(c != candidates[0] for c in candidates):
            raise ValidationError(Rule.CONFLICT, "predecessor and endorsements disagree on baseline")
        return candidates[0]

    def _evaluate(self, v: Vertex, commit: bool) -> None:
        tx = v.tx
        tid = tx.id
        if tx.timestamp <= 0:
            raise ValidationError(Rule.SHAPE, "only genesis sits at tick 0")
        resolved = self._resolve(tx)
        endorsed_ts = [self.vertices[e].tx.timestamp for e in tx.endorsements]
        validate_transaction(tx, resolved, self.params, endorsed_ts, self.registry)
        for e in tx.endorsements:
            if self.vertices[e].baseline is None:
                raise ValidationError(Rule.ENDORSEMENT, "endorsement target is not a sequencer transaction")

        is_branch = tx.is_branch
        if is_branch:
            stem = next(r for r in resolved if r.output.stem)
            ref = stem.oid.tx_id
            if ref not in self.records:
                raise ValidationError(Rule.BRANCH_RULE, "stem is not produced by a known branch")
            baseline = tid
            anchor = tid
        elif tx.is_sequencer:
            baseline = self._sequencer_baseline(tx, resolved)
            if baseline not in self.records:
                raise ValidationError(Rule.BASELINE, "baseline branch is unknown here")
            ref = anchor = baseline
        else:
            baseline = None
            ref = anchor = self._latest_anchor(self._anchor_of(self.vertices[p]) for p in tx.parents())

        if commit:
            self.vertices[tid] = v
            info = self.cone_info(tid, ref)
        else:
            parents = [p for p in tx.parents() if not self.in_ledger(p, ref)]
            for p in parents:
                self.cone_info(p, ref)
            info = self._compose(tx, ref)
        if info.conflict:
            if commit:
                self._cones.pop((tid, ref), None)
            raise ValidationError(Rule.CONFLICT, "past cone contains a double spend")

        v.ref, v.anchor, v.baseline = ref, anchor, baseline
        rec = None
        if tx.is_sequencer:
            ref_rec = self.records[ref]
            rooted = set(info.rooted)
            if ref_rec.seq_oid is not None:
                rooted.add(ref_rec.seq_oid)
            slot = tx.slot
            for chain, dels in ref_rec.delegations.items():
                if ref_rec.state.chain_tips.get(chain) in rooted:
                    rooted.update(oid for oid, until in dels if until > slot)
            state = ref_rec.state.outputs
            delta = sum(state[o].amount for o in rooted)
            if is_branch:
                terms = ((slot, delta),) + tuple(
                    t for t in ref_rec.terms if t[0] > slot - COVERAGE_WINDOW_SLOTS
                )
                cov = weighted_floor(terms, slot)
            else:
                terms = ()
                cov = delta + weighted_floor(
                    (t for t in ref_rec.terms if t[0] > slot - COVERAGE_WINDOW_SLOTS), slot, 1
                )
            v.rooted, v.delta, v.coverage = frozenset(rooted), delta, cov
            self._probe(v, ref_rec)
            if is_branch and commit:
                new_state = apply_many(
                    ref_rec.state, sorted((self.vertices[t].tx for t in info.txs), key=lambda t: (t.timestamp, t.id))
                )
                audit = new_state.audit()
                self.probes["audit_checked"] += 1
                if not audit:
                    self.probes["audit_failures"] += 1
                sidx = next(i for i, o in enumerate(tx.outputs) if o.stem)
                rec = BranchRecord(
                    branch_id=tid,
                    slot=slot,
                    timestamp=tx.timestamp,
                    stem_pred=ref,
                    stem_oid=OutputId(tid, sidx),
                    seq_oid=OutputId(tid, tx.sequencer_index),
                    state=new_state,
                    delta_txs=info.txs,
                    terms=terms,
                    delegations=_delegation_index(new_state),
                    audit=audit,
                    delta=delta,
                    coverage=cov,
                )
        if not commit:
            return
        v.status = Status.VALID
        self._index(v, rec)

    def _probe(self, v: Vertex, ref_rec: BranchRecord) -> None:
        p = self.probes
        p["coverage_bound_checked"] += 1
        if not v.coverage < 2 * ref_rec.state.supply:
            p["coverage_bound_violations"] += 1
        if v.tx.is_branch:
            return
        for parent in v.tx.parents():
            pv = self.vertices[parent]
            if pv.delta is not None and not pv.tx.is_branch and pv.baseline == v.baseline:
                p["delta_monotonic_checked"] += 1
                if v.delta < pv.delta:
                    p["delta_monotonic_violations"] += 1

    def _index(self, v: Vertex, rec: BranchRecord | None) -> None:
        tx = v.tx
        tid = tx.id
        slot = v.slot
        self.max_slot = max(self.max_slot, slot)
        for oid in tx.inputs:
            self.consumers[oid].append(tid)
        for p in tx.parents():
            pv = self.vertices[p]
            pv.children.append(tid)
            self.tips.discard(p)
        self.tips.add(tid)
        if tx.is_sequencer:
            self.seq_by_slot[slot].append(tid)
        if rec is not None:
            self.records[tid] = rec
            self.branches[slot].append(tid)
        for i, o in enumerate(tx.outputs):
            if isinstance(o.lock, TagAlongLock):
                self.tag_alongs[o.lock.target_chain].append(OutputId(tid, i))
        if rec is not None:
            rec.seen_round = self._prune_round
        if slot <= self._pruned_through:
            self._late.append((tid, self._prune_round))

    # ---- pruning -----------------------------------------------------------

    def prune(self, keep_tip: bytes, horizon_slots: int, current_slot: int) -> dict[str, int]:
        """Drop orphaned history older than ``current_slot - horizon_slots``.

        ``keep_tip`` is a branch; whatever is neither in its ledger nor
        compatible with it (for non-sequencer transactions) is removed once it
        falls behind the horizon. Returns counts per removed kind.
        """
        counts: Counter = Counter()
        h = current_slot - horizon_slots
        keep_rec = self.records.get(keep_tip)
        if keep_rec is None or h < 1:
            return dict(counts)
        check: list[bytes] = []
        for s in range(self._pruned_through + 1, h + 1):
            check.extend(t for t in self.seq_by_slot.get(s, ()))
        if self._pruned_through < h:
            check.extend(
                tid
                for tid, v in self.vertices.items()
                if not v.tx.is_sequencer and self._pruned_through < v.slot <= h
            )
            self._pruned_through = h
        # late arrivals get a few rounds to be adopted before they are judged
        self._prune_round += 1
        ripe = self._prune_round - self.late_grace_rounds
        check.extend(t for t, r in self._late if r < ripe)
        self._late = [(t, r) for t, r in self._late if r >= ripe]
        doomed: set[bytes] = set()
        for tid in check:
            v = self.vertices.get(tid)
            if v is None or v.status is not Status.VALID or tid == self.genesis_id:
                continue
            if self.in_ledger(tid, keep_tip):
                continue
            if v.tx.is_sequencer or self.cone_info(tid, keep_tip).conflict:
                doomed.add(tid)
        # orphan branch records that are no longer on the kept chain
        kept_chain = set(self.branch_chain(keep_tip))
        for bid, rec in list(self.records.items()):
            if rec.slot <= h and rec.seen_round < ripe and bid not in kept_chain and bid not in doomed:
                if not self.in_ledger(bid, keep_tip):
                    doomed.add(bid)
        # descendants of doomed vertices are orphaned too
        stack = list(doomed)
        while stack:
            for c in self.vertices[stack.pop()].children:
                if c not in doomed and c in self.vertices:
                    doomed.add(c)
                    stack.append(c)
        for tid in sorted(doomed):
            v = self.vertices.pop(tid)
            self.pruned_orphans.add(tid)
            self.tips.discard(tid)
            counts["branches" if tid in self.records else "vertices"] += 1
            self.records.pop(tid, None)
            for oid in v.tx.inputs:
                lst = self.consumers.get(oid)
                if lst and tid in lst:
                    lst.remove(tid)
            for p in v.tx.parents():
                pv = self.vertices.get(p)
                if pv is not None and tid in pv.children:
                    pv.children.remove(tid)
        if doomed:
            for s, ids in self.branches.items():
                self.branches[s] = [b for b in ids if b not in doomed]
            for s, ids in self.seq_by_slot.items():
                self.seq_by_slot[s] = [t for t in ids if t not in doomed]
            for c, oids in self.tag_alongs.items():
                self.tag_alongs[c] = [o for o in oids if o.tx_id not in doomed]
        counts["pending"] += self._expire_pending(current_slot)
        stale = [
            k
            for k in self._cones
            if k[0] in doomed
            or k[1] not in self.records
            or (k[1] != self.genesis_id and self.records[k[1]].slot < h - 2)
        ]
        for k in stale:
            del self._cones[k]
        counts["cone_cache"] = len(stale)
        return dict(counts)

    def _expire_pending(self, current_slot: int) -> int:
        expired = [
            tid
            for tid, v in self.vertices.items()
            if v.status is Status.PENDING
            and self._pending_since.get(tid, v.slot) + self.pending_expiry_slots < current_slot
        ]
        for tid in expired:
            v = self.vertices.pop(tid)
            self._pending_since.pop(tid, None)
            self.pending_by_sender[v.tx.sender] -= 1
            for p in v.missing:
                lst = self.waiting.get(p)
                if lst and tid in lst:
                    lst.remove(tid)
        return len(expired)

    # ---- export ------------------------------------------------------------

    def dump(self, label=None) -> str:
        """One line per vertex, ordered by (timestamp, id)."""
        name = label or (lambda tid: tid[:8].hex())
        lines = []
        for v in sorted(self.vertices.values(), key=lambda v: (v.tx.timestamp, v.id)):
            tx = v.tx
            kind = "genesis" if v.id == self.genesis_id else (
                "branch" if tx.is_branch else "seq" if tx.is_sequencer else "user"
            )
            ins = ",".join(f"{name(o.tx_id)}:{o.index}" for o in tx.inputs)
            ends = ",".join(name(e) for e in tx.endorsements)
            base = name(v.baseline) if v.baseline else "-"
            lines.append(
                f"{name(v.id)} ts={tx.timestamp} slot={v.slot} kind={kind} status={v.status.value} "
                f"in=[{ins}] end=[{ends}] baseline={base} "
                f"delta={'-' if v.delta is None else v.delta} cov={'-' if v.coverage is None else v.coverage}"
            )
        return "\n".join(lines)


def _merge(infos: list[ConeInfo], ids: list[bytes] | None) -> ConeInfo:
    """Union of cone infos; double consumption across them is a conflict."""
    if not infos:
        return EMPTY_CONE
    order = sorted(range(len(infos)), key=lambda i: -len(infos[i].txs))
    big = infos[order[0]]
    consumers = dict(big.consumers)
    txs = set(big.txs)
    rooted = set(big.rooted)
    conflict = big.conflict
    for i in order[1:]:
        other = infos[i]
        if ids is not None and ids[i] in txs:
            continue  # cone of a member is contained in the bigger cone
        conflict = conflict or other.conflict
        for oid, c in other.consumers.items():
            prev = consumers.get(oid)
            if prev is None:
                consumers[oid] = c
            elif prev != c:
                conflict = True
        txs |= other.txs
        rooted |= other.rooted
    return ConeInfo(consumers, frozenset(txs), frozenset(rooted), conflict)
