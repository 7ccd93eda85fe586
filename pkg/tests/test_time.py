import pytest
from hypothesis import given
from hypothesis import strategies as st

from utxotangle.params import LedgerParams
from utxotangle.timeline import (
    TimeConversion,
    cooldown_delay,
    real_time_of,
    slot_of,
    slot_start,
    ticks_at,
    ticks_of,
)

P = LedgerParams()


def test_slot_examples():
    assert slot_of(0) == 0
    assert slot_of(256) == 2
    assert (slot_of(130), ticks_of(130)) == (1, 2)
    assert slot_start(3) == 384


def test_real_time_examples():
    assert real_time_of(128, P) == 10_240
    assert real_time_of(0, LedgerParams(genesis_time_ms=777)) == 777
    assert real_time_of(1, LedgerParams(genesis_time_ms=1000, tick_duration_ms=80)) == 1080


def test_real_time_overflow():
    with pytest.raises(OverflowError):
        real_time_of(2**64, P)
    with pytest.raises(OverflowError):
        real_time_of(2**63, P)


def test_cooldown_examples():
    p = LedgerParams(tick_duration_ms=1)
    assert cooldown_delay(500, 600, p) == 0
    assert cooldown_delay(600, 500, p) == 100
    assert cooldown_delay(600, 600, p) == 0


def test_time_conversion_wraps_params():
    tc = TimeConversion(LedgerParams(genesis_time_ms=5))
    assert tc.real_time_of(2) == 165
    assert tc.ticks_at(165) == 2
    assert tc.slot_of(129) == 1 and tc.ticks_of(129) == 1
    assert tc.cooldown_delay(2, 100) == 65


@given(st.integers(0, 2**64 - 1))
def test_slot_round_trip(ts):
    assert slot_of(ts) * 128 + ticks_of(ts) == ts
    assert 0 <= ticks_of(ts) < 128


@given(st.integers(0, 2**50), st.integers(1, 2**20))
def test_real_time_strictly_monotone(ts, step):
    assert real_time_of(ts, P) < real_time_of(ts + step, P)


@given(st.integers(0, 2**40))
def test_ticks_at_inverts_real_time(ts):
    assert ticks_at(real_time_of(ts, P), P) == ts
    assert ticks_at(real_time_of(ts, P) + P.tick_duration_ms - 1, P) == ts
