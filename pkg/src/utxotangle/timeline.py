"""Ledger time: ticks, slots and their mapping onto wall-clock milliseconds.

A timestamp counts ticks since genesis. Slots group 128 ticks, and the
first tick of a slot is the only place a branch transaction may sit.
"""

from __future__ import annotations

from dataclasses import dataclass

from .params import LedgerParams

U64_MAX = 2**64 - 1


def slot_of(ts: int, ticks_per_slot: int = 128) -> int:
    return ts // ticks_per_slot


def ticks_of(ts: int, ticks_per_slot: int = 128) -> int:
    return ts % ticks_per_slot


def slot_start(slot: int, ticks_per_slot: int = 128) -> int:
    return slot * ticks_per_slot


def real_time_of(ts: int, params: LedgerParams) -> int:
    """Wall-clock millisecond at which timestamp ``ts`` becomes current."""
    if ts < 0 or ts > U64_MAX:
        raise OverflowError(f"timestamp {ts} outside the 64-bit tick range")
    ms = params.genesis_time_ms + ts * params.tick_duration_ms
    if ms > U64_MAX:
        raise OverflowError(f"real time of tick {ts} overflows 64 bits")
    return ms


def ticks_at(clock_ms: int, params: LedgerParams) -> int:
    """Latest tick whose real time is not after ``clock_ms`` (0 before genesis)."""
    if clock_ms <= params.genesis_time_ms:
        return 0
    return (clock_ms - params.genesis_time_ms) // params.tick_duration_ms


def cooldown_delay(ts: int, local_clock_ms: int, params: LedgerParams) -> int:
    """Milliseconds a node must hold a transaction before it may be processed."""
    return max(0, real_time_of(ts, params) - local_clock_ms)


@dataclass(frozen=True)
class TimeConversion:
    params: LedgerParams

    def slot_of(self, ts: int) -> int:
        return slot_of(ts, self.params.ticks_per_slot)

    def ticks_of(self, ts: int) -> int:
        return ticks_of(ts, self.params.ticks_per_slot)

    def real_time_of(self, ts: int) -> int:
        return real_time_of(ts, self.params)

    def ticks_at(self, clock_ms: int) -> int:
        return ticks_at(clock_ms, self.params)

    def cooldown_delay(self, ts: int, local_clock_ms: int) -> int:
        return cooldown_delay(ts, local_clock_ms, self.params)
