import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from utxotangle.crypto import Identity, KeyRegistry  # noqa: E402
from utxotangle.ledger import address_output, make_genesis, sequencer_origin  # noqa: E402
from utxotangle.params import LedgerParams  # noqa: E402

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture
def params():
    return LedgerParams(initial_supply=10**9, min_sequencer_amount=10**6, max_branch_bonus=0)


@pytest.fixture
def world(params):
    """Registry, two users, one sequencer and their genesis."""
    reg = KeyRegistry()
    alice = Identity.create("t:alice", reg)
    bob = Identity.create("t:bob", reg)
    seq = Identity.create("t:seq", reg)
    g = make_genesis(
        params,
        [
            ("alice", address_output(alice.address, 1_000_000)),
            ("bob", address_output(bob.address, 1_000_000)),
            ("seq", sequencer_origin(seq.address, 10**8)),
        ],
    )
    return {"reg": reg, "alice": alice, "bob": bob, "seq": seq, "genesis": g, "params": params}


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
