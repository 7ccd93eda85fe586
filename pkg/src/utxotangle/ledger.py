"""Transaction and output model, canonical encoding, validity rules, state application.

Everything here is a pure function over immutable values. The byte layout
produced by :meth:`Transaction.body` is documented in ``docs/FORMATS.md``;
transaction IDs are SHA-256 over the body followed by the signature.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from typing import Iterable, NamedTuple, Sequence, Union

from .crypto import DEFAULT_REGISTRY, DIGEST_SIZE, ZERO_DIGEST, Identity, KeyRegistry, digest
from .inflation import BranchBonus, bonus_from_rnd, bonus_seed, chain_inflation, verify_branch_bonus
from .params import ConfigError, LedgerParams
from .timeline import U64_MAX, slot_of, ticks_of

U16_MAX = 2**16 - 1


class Rule(str, Enum):
    SHAPE = "shape"
    PACE = "pace"
    BALANCE = "balance"
    INFLATION_EXCESS = "inflation-excess"
    SIGNATURE = "signature"
    ENDORSEMENT = "endorsement-rule"
    STORAGE_DEPOSIT = "storage-deposit"
    LOCK = "lock"
    DUPLICATE_SUCCESSOR = "duplicate-successor"
    MISSING_SUCCESSOR = "missing-successor"
    CHAIN_ORIGIN = "chain-origin"
    SEQUENCER_AMOUNT = "sequencer-amount"
    BRANCH_RULE = "branch-rule"
    BRANCH_BONUS = "branch-bonus"
    BASELINE = "baseline"
    CONFLICT = "conflict"
    MISSING_INPUT = "missing-input"
    OVERFLOW = "overflow"
    INVALID_PARENT = "invalid-parent"
    PENDING_LIMIT = "pending-limit"


class ValidationError(ValueError):
    def __init__(self, rule: Rule, message: str = "") -> None:
        super().__init__(f"{rule.value}: {message}" if message else rule.value)
        self.rule = rule


def checked_add(a: int, b: int) -> int:
    r = a + b
    if r > U64_MAX or r < 0:
        raise ValidationError(Rule.OVERFLOW, f"{a} + {b} leaves the 64-bit range")
    return r


def checked_sum(values: Iterable[int]) -> int:
    total = 0
    for v in values:
        total = checked_add(total, v)
    return total


class OutputId(NamedTuple):
    tx_id: bytes
    index: int

    def encode(self) -> bytes:
        return self.tx_id + struct.pack("<H", self.index)

    def short(self) -> str:
        return f"{self.tx_id[:8].hex()}:{self.index}"


# ---- locks -------------------------------------------------------------------


@dataclass(frozen=True)
class AddressLock:
    address: bytes
    TAG = 1


@dataclass(frozen=True)
class ChainLock:
    chain_id: bytes
    TAG = 2


@dataclass(frozen=True)
class StemLock:
    TAG = 3


@dataclass(frozen=True)
class TagAlongLock:
    target_chain: bytes
    sender: bytes
    creation_slot: int
    TAG = 4


@dataclass(frozen=True)
class DelegationLock:
    owner: bytes
    target_chain: bytes
    freeze_until: int | None
    inflation_advance: int
    max_freeze_slots: int
    TAG = 5


Lock = Union[AddressLock, ChainLock, StemLock, TagAlongLock, DelegationLock]


def encode_lock(lock: Lock) -> bytes:
    tag = bytes([lock.TAG])
    if isinstance(lock, AddressLock):
        return tag + lock.address
    if isinstance(lock, ChainLock):
        return tag + lock.chain_id
    if isinstance(lock, StemLock):
        return tag
    if isinstance(lock, TagAlongLock):
        return tag + lock.target_chain + lock.sender + struct.pack("<Q", lock.creation_slot)
    if isinstance(lock, DelegationLock):
        freeze = b"\x00" if lock.freeze_until is None else b"\x01" + struct.pack("<Q", lock.freeze_until)
        return (
            tag
            + lock.owner
            + lock.target_chain
            + freeze
            + struct.pack("<QQ", lock.inflation_advance, lock.max_freeze_slots)
        )
    raise TypeError(f"not a lock: {lock!r}")


# ---- outputs and transactions -----------------------------------------------


@dataclass(frozen=True)
class ChainConstraint:
    chain_id: bytes  # all-zero on an origin; the effective id is derived from the OutputId
    origin: bool = False


@dataclass(frozen=True)
class Output:
    amount: int
    lock: Lock
    chain: ChainConstraint | None = None
    sequencer: bool = False
    stem: bool = False
    inflation: int = 0
    vrf: bytes | None = None

    @cached_property
    def encoded(self) -> bytes:
        parts = [struct.pack("<Q", self.amount), encode_lock(self.lock)]
        if self.chain is None:
            parts.append(b"\x00")
        else:
            parts.append(b"\x01" + self.chain.chain_id + (b"\x01" if self.chain.origin else b"\x00"))
        parts.append(bytes([(1 if self.sequencer else 0) | (2 if self.stem else 0)]))
        parts.append(struct.pack("<Q", self.inflation))
        parts.append(b"\x00" if self.vrf is None else b"\x01" + self.vrf)
        return b"".join(parts)

    @property
    def byte_size(self) -> int:
        return len(self.encoded)


def origin_chain_id(oid: OutputId) -> bytes:
    return digest(oid.encode())


def chain_id_of(oid: OutputId, output: Output) -> bytes | None:
    """Effective chain id of an output, deriving it for chain origins."""
    if output.chain is None:
        return None
    if output.chain.origin:
        return origin_chain_id(oid)
    return output.chain.chain_id


@dataclass(frozen=True)
class Transaction:
    inputs: tuple[OutputId, ...]
    outputs: tuple[Output, ...]
    endorsements: tuple[bytes, ...] = ()
    timestamp: int = 0
    sender: bytes = ZERO_DIGEST
    signature: bytes = b""
    terminations: tuple[bytes, ...] = ()  # chain ids explicitly ended by this tx

    @cached_property
    def body(self) -> bytes:
        if max(len(self.inputs), len(self.outputs), len(self.endorsements), len(self.terminations)) > U16_MAX:
            raise ValidationError(Rule.SHAPE, "list too long to encode")
        parts = [struct.pack("<H", len(self.inputs))]
        parts.extend(i.encode() for i in self.inputs)
        parts.append(struct.pack("<H", len(self.outputs)))
        for o in self.outputs:
            enc = o.encoded
            parts.append(struct.pack("<I", len(enc)) + enc)
        parts.append(struct.pack("<H", len(self.endorsements)))
        parts.extend(self.endorsements)
        parts.append(struct.pack("<Q", self.timestamp))
        parts.append(self.sender)
        parts.append(struct.pack("<H", len(self.terminations)))
        parts.extend(self.terminations)
        return b"".join(parts)

    @cached_property
    def id(self) -> bytes:
        return hashlib.sha256(self.body + self.signature).digest()

    def signed(self, identity: Identity) -> "Transaction":
        unsigned = replace(self, sender=identity.address, signature=b"")
        return replace(unsigned, signature=identity.sign(unsigned.body))

    def output_id(self, index: int) -> OutputId:
        return OutputId(self.id, index)

    @property
    def slot(self) -> int:
        return slot_of(self.timestamp)

    @property
    def is_branch(self) -> bool:
        return self.sequencer_index is not None and ticks_of(self.timestamp) == 0

    @cached_property
    def sequencer_index(self) -> int | None:
        for i, o in enumerate(self.outputs):
            if o.sequencer:
                return i
        return None

    @property
    def is_sequencer(self) -> bool:
        return self.sequencer_index is not None

    def parents(self) -> list[bytes]:
        """Distinct parent ids (producers of inputs, then endorsement targets)."""
        seen: dict[bytes, None] = {}
        for oid in self.inputs:
            seen.setdefault(oid.tx_id, None)
        for e in self.endorsements:
            seen.setdefault(e, None)
        return list(seen)


def compute_tx_id(tx: Transaction) -> bytes:
    return tx.id


class Resolved(NamedTuple):
    """A consumed output together with its id and its producer's timestamp."""

    oid: OutputId
    output: Output
    timestamp: int


def min_storage_deposit(byte_size: int, params: LedgerParams) -> int:
    if byte_size <= 0:
        raise ValueError("output byte size must be positive")
    return byte_size * params.storage_deposit_per_byte


def deposit_exempt(output: Output) -> bool:
    return isinstance(output.lock, (TagAlongLock, StemLock))


# ---- lock evaluation -------------------------------------------------------


@dataclass(frozen=True)
class LockContext:
    tx: Transaction
    slot: int
    consumed: bool
    params: LedgerParams
    unlocked_chains: frozenset = frozenset()
    is_branch: bool = False
    successor: Output | None = None


def _delegation_successor_ok(lock: DelegationLock, succ: Output | None) -> DelegationLock | None:
    if succ is None or not isinstance(succ.lock, DelegationLock):
        return None
    s = succ.lock
    if (s.owner, s.target_chain, s.inflation_advance, s.max_freeze_slots) != (
        lock.owner,
        lock.target_chain,
        lock.inflation_advance,
        lock.max_freeze_slots,
    ):
        return None
    return s


def _eval_delegation(output: Output, lock: DelegationLock, ctx: LockContext) -> bool:
    s = ctx.slot
    owner = ctx.tx.sender == lock.owner
    sequencer = lock.target_chain in ctx.unlocked_chains
    frozen_until = lock.freeze_until
    if frozen_until is not None and s < frozen_until:
        # only an early unfreeze by the sequencer; the funds stay put
        succ = _delegation_successor_ok(lock, ctx.successor)
        return bool(
            sequencer and succ is not None and succ.freeze_until == s and ctx.successor.amount >= output.amount
        )
    if frozen_until is not None and s < frozen_until + ctx.params.revocation_window_slots:
        return owner
    if owner:
        return True
    if not sequencer:
        return False
    succ = _delegation_successor_ok(lock, ctx.successor)
    if succ is None or succ.freeze_until is None:
        return False
    if not (s < succ.freeze_until <= s + lock.max_freeze_slots):
        return False
    return ctx.successor.amount >= output.amount + lock.inflation_advance


def evaluate_lock(output: Output, ctx: LockContext) -> bool:
    """Whether ``output`` may be consumed (or produced) by ``ctx.tx``. Never raises."""
    try:
        lock = output.lock
        if not ctx.consumed:
            if isinstance(lock, StemLock):
                return output.amount == 0 and output.stem
            if isinstance(lock, TagAlongLock):
                return lock.creation_slot == ctx.slot and lock.sender == ctx.tx.sender
            if isinstance(lock, DelegationLock):
                if lock.max_freeze_slots > ctx.params.max_freeze_slots:
                    return False
                return lock.freeze_until is None or lock.freeze_until - ctx.slot <= lock.max_freeze_slots
            return True
        if isinstance(lock, AddressLock):
            return ctx.tx.sender == lock.address
        if isinstance(lock, ChainLock):
            return lock.chain_id in ctx.unlocked_chains
        if isinstance(lock, StemLock):
            return ctx.is_branch
        if isinstance(lock, TagAlongLock):
            age = ctx.slot - lock.creation_slot
            if age < 0:
                return False
            seq_window = ctx.params.tag_along_sequencer_window_slots
            if age < seq_window:
                return lock.target_chain in ctx.unlocked_chains
            if age < seq_window + ctx.params.tag_along_sender_window_slots:
                return ctx.tx.sender == lock.sender
            return True
        if isinstance(lock, DelegationLock):
            return _eval_delegation(output, lock, ctx)
        return False
    except Exception:
        return False


# ---- validation ------------------------------------------------------------


def _check_output_shape(o: Output) -> None:
    if not (0 <= o.amount <= U64_MAX) or not (0 <= o.inflation <= U64_MAX):
        raise ValidationError(Rule.OVERFLOW, "amount outside the 64-bit range")
    if o.sequencer and o.chain is None:
        raise ValidationError(Rule.SHAPE, "sequencer milestone must be a chained output")
    if o.stem != isinstance(o.lock, StemLock):
        raise ValidationError(Rule.SHAPE, "stem flag and stem lock must go together")
    if o.stem and (o.amount != 0 or o.chain is not None or o.sequencer):
        raise ValidationError(Rule.SHAPE, "stem output must be a plain zero-amount output")
    if isinstance(o.lock, DelegationLock) and o.chain is None:
        raise ValidationError(Rule.SHAPE, "delegation output must be chained")
    if o.vrf is not None and not (o.sequencer or o.stem):
        raise ValidationError(Rule.SHAPE, "vrf value only on milestones and stems")
    if o.vrf is not None and len(o.vrf) != DIGEST_SIZE:
        raise ValidationError(Rule.SHAPE, "vrf value has the wrong width")
    if o.chain is not None and len(o.chain.chain_id) != DIGEST_SIZE:
        raise ValidationError(Rule.SHAPE, "chain id has the wrong width")


def check_shape(tx: Transaction, params: LedgerParams) -> None:
    if not tx.inputs:
        raise ValidationError(Rule.SHAPE, "no inputs")
    if not tx.outputs:
        raise ValidationError(Rule.SHAPE, "no outputs")
    if len(set(tx.inputs)) != len(tx.inputs):
        raise ValidationError(Rule.SHAPE, "duplicate input")
    if len(tx.endorsements) > params.max_endorsements:
        raise ValidationError(Rule.ENDORSEMENT, f"more than {params.max_endorsements} endorsements")
    if len(set(tx.endorsements)) != len(tx.endorsements):
        raise ValidationError(Rule.SHAPE, "duplicate endorsement")
    if not (0 <= tx.timestamp <= U64_MAX):
        raise ValidationError(Rule.SHAPE, "timestamp outside the 64-bit range")
    if len(tx.sender) != DIGEST_SIZE:
        raise ValidationError(Rule.SHAPE, "sender id has the wrong width")
    if sum(1 for o in tx.outputs if o.sequencer) > 1:
        raise ValidationError(Rule.SHAPE, "more than one sequencer milestone")
    for o in tx.outputs:
        _check_output_shape(o)


def _chain_pairs(tx: Transaction, resolved: Sequence[Resolved]) -> tuple[dict[bytes, Resolved], dict[bytes, list[int]]]:
    consumed: dict[bytes, Resolved] = {}
    for r in resolved:
        cid = chain_id_of(r.oid, r.output)
        if cid is None:
            continue
        if cid in consumed:
            raise ValidationError(Rule.SHAPE, "two consumed outputs claim the same chain")
        consumed[cid] = r
    produced: dict[bytes, list[int]] = {}
    for i, o in enumerate(tx.outputs):
        if o.chain is not None and not o.chain.origin:
            produced.setdefault(o.chain.chain_id, []).append(i)
    return consumed, produced


def inflation_entitlement(
    tx: Transaction,
    index: int,
    resolved: Sequence[Resolved],
    params: LedgerParams,
) -> int:
    """Chain inflation the output at ``index`` may declare, excluding any branch bonus."""
    o = tx.outputs[index]
    if o.chain is None or o.chain.origin:
        return 0
    for r in resolved:
        if chain_id_of(r.oid, r.output) == o.chain.chain_id:
            return chain_inflation(r.output.amount, slot_of(r.timestamp), slot_of(tx.timestamp), params)
    return 0


def _stem_input(tx: Transaction, resolved: Sequence[Resolved]) -> list[Resolved]:
    return [r for r in resolved if r.output.stem]


def branch_bonus_claim(tx: Transaction, resolved: Sequence[Resolved]) -> BranchBonus | None:
    """Reconstruct the bonus record a branch milestone carries (None when malformed)."""
    idx = tx.sequencer_index
    stems = _stem_input(tx, resolved)
    if idx is None or len(stems) != 1:
        return None
    ms = tx.outputs[idx]
    if ms.vrf is None:
        return None
    pred_vrf = stems[0].output.vrf or ZERO_DIGEST
    rnd = int.from_bytes(ms.vrf, "little")
    return BranchBonus(rnd=rnd, proof=ms.vrf, bonus=0, seed_input=bonus_seed(pred_vrf, tx.slot))


def validate_transaction_level(
    tx: Transaction,
    resolved: Sequence[Resolved],
    params: LedgerParams,
    endorsed_timestamps: Sequence[int] | None = None,
    registry: KeyRegistry | None = None,
) -> None:
    """Raise :class:`ValidationError` unless ``tx`` passes every transaction-level rule.

    ``endorsed_timestamps`` lines up with ``tx.endorsements``; pass None when
    the endorsed transactions are unknown (pure state application), which
    skips the endorsement pace and same-slot checks.
    """
    check_shape(tx, params)
    if len(resolved) != len(tx.inputs) or any(r.oid != i for r, i in zip(resolved, tx.inputs)):
        raise ValidationError(Rule.SHAPE, "resolved inputs do not match the input list")
    if not (registry or DEFAULT_REGISTRY).verify(tx.sender, tx.body, tx.signature):
        raise ValidationError(Rule.SIGNATURE, "signature does not verify against sender")

    is_seq = tx.is_sequencer
    pace = params.sequencer_pace_ticks if is_seq else params.user_pace_ticks
    for r in resolved:
        if r.timestamp + pace > tx.timestamp:
            raise ValidationError(Rule.PACE, f"input at tick {r.timestamp} too close to {tx.timestamp}")
    if tx.endorsements and not is_seq:
        raise ValidationError(Rule.ENDORSEMENT, "only sequencer transactions may endorse")
    if endorsed_timestamps is not None:
        if len(endorsed_timestamps) != len(tx.endorsements):
            raise ValidationError(Rule.SHAPE, "endorsement timestamps do not match")
        for ets in endorsed_timestamps:
            if ets + pace > tx.timestamp:
                raise ValidationError(Rule.PACE, f"endorsement at tick {ets} too close to {tx.timestamp}")
            if slot_of(ets) != tx.slot:
                raise ValidationError(Rule.ENDORSEMENT, "endorsed transaction is in another slot")

    for o in tx.outputs:
        if not deposit_exempt(o) and o.amount < min_storage_deposit(o.byte_size, params):
            raise ValidationError(Rule.STORAGE_DEPOSIT, f"amount {o.amount} below deposit for {o.byte_size} bytes")

    total_in = checked_sum(r.output.amount for r in resolved)
    total_out = checked_sum(o.amount for o in tx.outputs)
    declared = checked_sum(o.inflation for o in tx.outputs)
    if total_out > checked_add(total_in, declared):
        raise ValidationError(Rule.BALANCE, f"outputs {total_out} exceed inputs {total_in} + inflation {declared}")

    branch = tx.is_branch
    for i, o in enumerate(tx.outputs):
        if o.inflation == 0:
            continue
        if o.chain is None or o.chain.origin:
            raise ValidationError(Rule.INFLATION_EXCESS, "inflation declared on an unchained output")
        allowed = inflation_entitlement(tx, i, resolved, params)
        if branch and o.sequencer:
            claim = branch_bonus_claim(tx, resolved)
            if claim is not None:
                allowed += bonus_from_rnd(claim.rnd, params)
        if o.inflation > allowed:
            raise ValidationError(Rule.INFLATION_EXCESS, f"declared {o.inflation} exceeds entitlement {allowed}")


def validate_locks(tx: Transaction, resolved: Sequence[Resolved], params: LedgerParams) -> None:
    slot = tx.slot
    consumed_chains, produced = _chain_pairs(tx, resolved)
    unlocked = frozenset(consumed_chains)
    branch = tx.is_branch
    for r in resolved:
        cid = chain_id_of(r.oid, r.output)
        succ = None
        if cid is not None and len(produced.get(cid, ())) == 1:
            succ = tx.outputs[produced[cid][0]]
        ctx = LockContext(tx, slot, True, params, unlocked, branch, succ)
        if not evaluate_lock(r.output, ctx):
            raise ValidationError(Rule.LOCK, f"cannot unlock {type(r.output.lock).__name__} {r.oid.short()}")
    for o in tx.outputs:
        if not evaluate_lock(o, LockContext(tx, slot, False, params, unlocked, branch)):
            raise ValidationError(Rule.LOCK, f"produced {type(o.lock).__name__} is malformed")


def validate_chain_transition(tx: Transaction, resolved: Sequence[Resolved]) -> None:
    consumed, produced = _chain_pairs(tx, resolved)
    for cid, idxs in produced.items():
        if len(idxs) > 1:
            raise ValidationError(Rule.DUPLICATE_SUCCESSOR, f"chain {cid[:6].hex()} has {len(idxs)} successors")
        if cid not in consumed:
            raise ValidationError(Rule.CHAIN_ORIGIN, f"chain {cid[:6].hex()} continued without its predecessor")
    terminated = set(tx.terminations)
    for cid in consumed:
        if cid in produced:
            if cid in terminated:
                raise ValidationError(Rule.SHAPE, "chain both continued and terminated")
        elif cid not in terminated:
            raise ValidationError(Rule.MISSING_SUCCESSOR, f"chain {cid[:6].hex()} consumed without successor")
    if not terminated <= set(consumed):
        raise ValidationError(Rule.SHAPE, "termination of a chain that is not consumed")


def validate_sequencer_rules(
    tx: Transaction,
    resolved: Sequence[Resolved],
    params: LedgerParams,
    registry: KeyRegistry | None = None,
) -> None:
    stems_in = _stem_input(tx, resolved)
    stems_out = [o for o in tx.outputs if o.stem]
    idx = tx.sequencer_index
    if idx is None:
        if stems_in or stems_out:
            raise ValidationError(Rule.BRANCH_RULE, "only branch transactions touch stems")
        return
    ms = tx.outputs[idx]
    if ms.amount < params.min_sequencer_amount:
        raise ValidationError(
            Rule.SEQUENCER_AMOUNT, f"milestone amount {ms.amount} below minimum {params.min_sequencer_amount}"
        )
    if ms.chain is None or ms.chain.origin:
        raise ValidationError(Rule.CHAIN_ORIGIN, "milestone must continue an existing sequencer chain")
    pred = next((r for r in resolved if chain_id_of(r.oid, r.output) == ms.chain.chain_id), None)
    if pred is None:
        raise ValidationError(Rule.CHAIN_ORIGIN, "milestone has no chain predecessor")
    if tx.is_branch:
        if len(stems_in) != 1 or len(stems_out) != 1:
            raise ValidationError(Rule.BRANCH_RULE, "branch must consume exactly one stem and produce exactly one")
        if tx.endorsements:
            raise ValidationError(Rule.BRANCH_RULE, "branch transactions cannot endorse")
        if ms.vrf is None or stems_out[0].vrf != ms.vrf:
            raise ValidationError(Rule.BRANCH_RULE, "branch must carry its vrf value on milestone and stem")
        claim = branch_bonus_claim(tx, resolved)
        assert claim is not None
        claim = replace(claim, bonus=bonus_from_rnd(claim.rnd, params))
        if not verify_branch_bonus(tx.sender, claim.seed_input, claim, params, registry):
            raise ValidationError(Rule.BRANCH_BONUS, "vrf value does not verify")
        return
    if stems_in or stems_out:
        raise ValidationError(Rule.BRANCH_RULE, "only branch transactions touch stems")
    if ms.vrf is not None:
        raise ValidationError(Rule.SHAPE, "vrf value only on branch milestones")
    same_slot_pred = slot_of(pred.timestamp) == tx.slot
    if not same_slot_pred and not tx.endorsements:
        raise ValidationError(
            Rule.BASELINE, "milestone neither extends a same-slot predecessor nor endorses a same-slot transaction"
        )


def validate_transaction(
    tx: Transaction,
    resolved: Sequence[Resolved],
    params: LedgerParams,
    endorsed_timestamps: Sequence[int] | None = None,
    registry: KeyRegistry | None = None,
) -> None:
    """All ledger-level rules: transaction level, locks, chains and sequencer rules."""
    validate_transaction_level(tx, resolved, params, endorsed_timestamps, registry)
    validate_chain_transition(tx, resolved)
    validate_locks(tx, resolved, params)
    validate_sequencer_rules(tx, resolved, params, registry)


# ---- ledger state ------------------------------------------------------------


class LedgerState:
    """Set of unspent outputs with a chain index and a supply audit trail.

    Instances are treated as values: :func:`apply` returns a new state and
    leaves its argument untouched.
    """

    __slots__ = ("outputs", "stamps", "chain_tips", "slot", "initial_supply", "minted", "burned", "_commitment")

    def __init__(
        self,
        outputs: dict[OutputId, Output],
        stamps: dict[OutputId, int],
        chain_tips: dict[bytes, OutputId],
        slot: int,
        initial_supply: int,
        minted: int = 0,
        burned: int = 0,
    ) -> None:
        self.outputs = outputs
        self.stamps = stamps
        self.chain_tips = chain_tips
        self.slot = slot
        self.initial_supply = initial_supply
        self.minted = minted
        self.burned = burned
        self._commitment: bytes | None = None

    def copy(self) -> "LedgerState":
        return LedgerState(
            dict(self.outputs),
            dict(self.stamps),
            dict(self.chain_tips),
            self.slot,
            self.initial_supply,
            self.minted,
            self.burned,
        )

    @property
    def supply(self) -> int:
        return sum(o.amount for o in self.outputs.values())

    def audit(self) -> bool:
        """Supply conservation: everything on the ledger is genesis plus net minting."""
        return self.supply == self.initial_supply + self.minted - self.burned

    @property
    def commitment(self) -> bytes:
        if self._commitment is None:
            h = hashlib.sha256()
            for oid in sorted(self.outputs):
                h.update(oid.encode())
                h.update(self.outputs[oid].encoded)
            self._commitment = h.digest()
        return self._commitment

    def resolve(self, tx: Transaction) -> list[Resolved]:
        out = []
        for oid in tx.inputs:
            o = self.outputs.get(oid)
            if o is None:
                raise ValidationError(Rule.MISSING_INPUT, f"input {oid.short()} not in state")
            out.append(Resolved(oid, o, self.stamps[oid]))
        return out

    def __contains__(self, oid: object) -> bool:
        return oid in self.outputs

    def __len__(self) -> int:
        return len(self.outputs)


def _mutate(state: LedgerState, tx: Transaction) -> None:
    tid = tx.id
    total_in = 0
    for oid in tx.inputs:
        o = state.outputs.pop(oid, None)
        if o is None:
            raise ValidationError(Rule.MISSING_INPUT, f"input {oid.short()} not in state")
        del state.stamps[oid]
        total_in = checked_add(total_in, o.amount)
        cid = chain_id_of(oid, o)
        if cid is not None and state.chain_tips.get(cid) == oid:
            del state.chain_tips[cid]
    total_out = 0
    declared = 0
    for i, o in enumerate(tx.outputs):
        oid = OutputId(tid, i)
        state.outputs[oid] = o
        state.stamps[oid] = tx.timestamp
        total_out = checked_add(total_out, o.amount)
        declared = checked_add(declared, o.inflation)
        cid = chain_id_of(oid, o)
        if cid is not None:
            state.chain_tips[cid] = oid
    state.minted += declared
    state.burned += total_in + declared - total_out
    state.slot = max(state.slot, slot_of(tx.timestamp))
    state._commitment = None


def apply(
    state: LedgerState,
    tx: Transaction,
    params: LedgerParams | None = None,
    registry: KeyRegistry | None = None,
) -> LedgerState:
    """New state with ``tx`` applied. Validates ledger rules when ``params`` is given."""
    if params is not None:
        validate_transaction(tx, state.resolve(tx), params, None, registry)
    new = state.copy()
    _mutate(new, tx)
    return new


def apply_many(
    state: LedgerState,
    txs: Iterable[Transaction],
    params: LedgerParams | None = None,
    registry: KeyRegistry | None = None,
) -> LedgerState:
    """Apply a sequence in order, copying the starting state once."""
    new = state.copy()
    for tx in txs:
        if params is not None:
            validate_transaction(tx, new.resolve(tx), params, None, registry)
        _mutate(new, tx)
    return new


# ---- genesis -----------------------------------------------------------------


def stem_output(vrf: bytes = ZERO_DIGEST) -> Output:
    return Output(0, StemLock(), stem=True, vrf=vrf)


def address_output(address: bytes, amount: int) -> Output:
    return Output(amount, AddressLock(address))


def sequencer_origin(address: bytes, amount: int) -> Output:
    return Output(amount, AddressLock(address), ChainConstraint(ZERO_DIGEST, origin=True), sequencer=True)


@dataclass(frozen=True)
class Genesis:
    tx: Transaction
    state: LedgerState
    labels: dict[str, OutputId] = field(default_factory=dict)

    @property
    def id(self) -> bytes:
        return self.tx.id

    @property
    def stem(self) -> OutputId:
        return OutputId(self.tx.id, 0)


def make_genesis(params: LedgerParams, allocations: Sequence[tuple[str, Output]]) -> Genesis:
    """Genesis transaction: the first stem at index 0 followed by the labelled allocations.

    Any supply not allocated is parked on an idle address so the total always
    equals ``initial_supply``.
    """
    outputs = [stem_output()]
    labels: list[str] = []
    for label, o in allocations:
        outputs.append(o)
        labels.append(label)
    allocated = sum(o.amount for o in outputs)
    if allocated > params.initial_supply:
        raise ConfigError(f"genesis allocates {allocated} > initial supply {params.initial_supply}")
    if allocated < params.initial_supply:
        outputs.append(address_output(digest(b"idle"), params.initial_supply - allocated))
        labels.append("idle")
    tx = Transaction(inputs=(), outputs=tuple(outputs), timestamp=0)
    tid = tx.id
    out_map: dict[OutputId, Output] = {}
    stamps: dict[OutputId, int] = {}
    tips: dict[bytes, OutputId] = {}
    for i, o in enumerate(outputs):
        oid = OutputId(tid, i)
        out_map[oid] = o
        stamps[oid] = 0
        cid = chain_id_of(oid, o)
        if cid is not None:
            tips[cid] = oid
    state = LedgerState(out_map, stamps, tips, 0, params.initial_supply)
    return Genesis(tx, state, {label: OutputId(tid, i + 1) for i, label in enumerate(labels)})
