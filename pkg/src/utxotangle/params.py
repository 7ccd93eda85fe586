"""Ledger constants shared by every module."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from typing import Any, Mapping

TICKS_PER_SLOT = 128


class ConfigError(ValueError):
    """Raised for parameter sets or scenarios that violate a documented rule."""


@dataclass(frozen=True)
class LedgerParams:
    ticks_per_slot: int = TICKS_PER_SLOT
    tick_duration_ms: int = 80
    genesis_time_ms: int = 0
    initial_supply: int = 1_000_000_000_000_000
    inflation_c: int = 30_303_030
    max_branch_bonus: int = 10_000_000
    max_endorsements: int = 8
    sequencer_pace_ticks: int = 1
    user_pace_ticks: int = 25
    min_sequencer_amount: int = 1_000_000_000_000
    storage_deposit_per_byte: int = 1
    tag_along_sequencer_window_slots: int = 12
    tag_along_sender_window_slots: int = 100
    max_freeze_slots: int = 4218
    revocation_window_slots: int = 59
    # False switches the branch bonus to the constant I_max (used by the A/B experiment)
    random_branch_bonus: bool = True

    def __post_init__(self) -> None:
        if self.ticks_per_slot != TICKS_PER_SLOT:
            raise ConfigError(f"ticks_per_slot must be {TICKS_PER_SLOT}")
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool):
                continue
            if f.name == "max_branch_bonus":
                if value < 0:
                    raise ConfigError("max_branch_bonus must be >= 0")
            elif f.name == "genesis_time_ms":
                if value < 0:
                    raise ConfigError("genesis_time_ms must be >= 0")
            elif value <= 0:
                raise ConfigError(f"{f.name} must be > 0, got {value}")
        if self.min_sequencer_amount > self.initial_supply:
            raise ConfigError("min_sequencer_amount exceeds initial_supply")
        if self.initial_supply >= 2**64:
            raise ConfigError("initial_supply does not fit in 64 bits")

    @property
    def slot_duration_ms(self) -> int:
        return self.ticks_per_slot * self.tick_duration_ms

    def with_overrides(self, overrides: Mapping[str, Any]) -> "LedgerParams":
        known = {f.name for f in fields(self)}
        unknown = sorted(set(overrides) - known)
        if unknown:
            raise ConfigError(f"unknown ledger parameter(s): {', '.join(unknown)}")
        return replace(self, **dict(overrides))

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)
