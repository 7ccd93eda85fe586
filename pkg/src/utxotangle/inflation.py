"""Chain inflation entitlement and the pseudo-random branch bonus."""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .crypto import DEFAULT_REGISTRY, DIGEST_SIZE, KeyRegistry, keyed_hash
from .params import LedgerParams


def chain_inflation(amount: int, pred_slot: int, succ_slot: int, params: LedgerParams) -> int:
    """Inflation a chain successor may claim over its predecessor.

    One slot's worth regardless of the gap, and nothing within a slot.
    """
    if succ_slot < pred_slot:
        raise ValueError("successor slot precedes predecessor slot")
    if succ_slot == pred_slot:
        return 0
    return amount // (params.inflation_c + pred_slot)


def projected_amount(amount: int, slot: int, k: int, params: LedgerParams) -> tuple[int, int]:
    """Return (closed form, stepped) balance after ``k`` consecutive slots.

    The closed form ``A + k*A/(C+t)`` is an analysis aid. The stepped value
    applies :func:`chain_inflation` once per slot, which is what the ledger
    actually enforces.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    closed = amount + k * amount // (params.inflation_c + slot)
    stepped = amount
    for j in range(k):
        stepped += chain_inflation(stepped, slot + j, slot + j + 1, params)
    return closed, stepped


def bonus_seed(pred_vrf: bytes, slot: int) -> bytes:
    return pred_vrf + struct.pack("<Q", slot)


@dataclass(frozen=True)
class BranchBonus:
    rnd: int
    proof: bytes
    bonus: int
    seed_input: bytes


def bonus_from_rnd(rnd: int, params: LedgerParams) -> int:
    if not params.random_branch_bonus:
        return params.max_branch_bonus
    return rnd % (params.max_branch_bonus + 1)


def evaluate_branch_bonus(secret: bytes, pred_vrf: bytes, slot: int, params: LedgerParams) -> BranchBonus:
    seed = bonus_seed(pred_vrf, slot)
    proof = keyed_hash(secret, seed)
    rnd = int.from_bytes(proof, "little")
    return BranchBonus(rnd=rnd, proof=proof, bonus=bonus_from_rnd(rnd, params), seed_input=seed)


def verify_branch_bonus(
    sender: bytes,
    seed_input: bytes,
    bonus: BranchBonus,
    params: LedgerParams,
    registry: KeyRegistry | None = None,
) -> bool:
    registry = registry or DEFAULT_REGISTRY
    secret = registry.secret_of(sender)
    if secret is None or len(bonus.proof) != DIGEST_SIZE:
        return False
    if bonus.seed_input != seed_input:
        return False
    expected = keyed_hash(secret, seed_input)
    if expected != bonus.proof or int.from_bytes(expected, "little") != bonus.rnd:
        return False
    return bonus.bonus == bonus_from_rnd(bonus.rnd, params)
