"""Small hand-built tangles for ``utxotangle inspect``.

``fig-branches`` reproduces the milestone-numbering walkthrough: chains A, B
and C, two conflicting branches in slot 2, and chain B forking into
milestones 5 and 8 after endorsing into different branches.
``coverage-basic`` is the minimal tag-along / endorsement coverage example.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

from .agents import SequencerAgent, Selection, _build_milestone, make_branch
from .crypto import Identity, KeyRegistry
from .ledger import (
    AddressLock,
    Output,
    OutputId,
    TagAlongLock,
    Transaction,
    address_output,
    make_genesis,
    origin_chain_id,
    sequencer_origin,
)
from .params import LedgerParams
from .tangle import Status, UtxoTangle
from .timeline import slot_start

FIXTURE_PARAMS = LedgerParams(initial_supply=10_000, min_sequencer_amount=1_000, max_branch_bonus=0)


@dataclass
class Fixture:
    name: str
    tangle: UtxoTangle
    names: dict[bytes, str] = field(default_factory=dict)

    def label(self, tid: bytes) -> str:
        return self.names.get(tid, tid[:8].hex())

    def id_of(self, label: str) -> bytes:
        return next(t for t, n in self.names.items() if n == label)

    def add(self, label: str, tx: Transaction) -> bytes:
        res = self.tangle.attach(tx)
        if res.status is not Status.VALID:
            raise RuntimeError(f"fixture {self.name}: {label} did not attach ({res.rule}: {res.detail})")
        self.names[tx.id] = label
        return tx.id

    def coverage_table(self) -> list[tuple[str, str, str, int, int]]:
        t = self.tangle
        rows = []
        for tid, label in self.names.items():
            v = t.vertices[tid]
            if v.tx.is_sequencer or tid == t.genesis_id:
                rows.append((label, self.label(v.baseline), str(v.slot), v.delta, v.coverage))
        rows.sort(key=lambda r: (int(r[2]), r[0]))
        return rows

    def conflicts(self) -> list[tuple[str, str]]:
        t = self.tangle
        seqs = sorted(
            (tid for tid in self.names if tid != t.genesis_id and t.vertices[tid].tx.is_sequencer),
            key=self.label,
        )
        out = []
        for a, b in combinations(seqs, 2):
            if t.is_conflicting(a, b):
                out.append(tuple(sorted((self.label(a), self.label(b)))))
        return sorted(out)

    def report(self) -> str:
        lines = [f"# fixture {self.name}", "", "## dag"]
        lines.append(self.tangle.dump(self.label))
        lines += ["", "## coverage", f"{'tx':<10} {'baseline':<10} {'slot':>4} {'delta':>8} {'coverage':>8}"]
        for label, base, slot, delta, cov in self.coverage_table():
            lines.append(f"{label:<10} {base:<10} {slot:>4} {delta:>8} {cov:>8}")
        lines += ["", "## conflicting sequencer transactions"]
        lines += [f"{a} <> {b}" for a, b in self.conflicts()] or ["none"]
        return "\n".join(lines) + "\n"


def _sequencers(params: LedgerParams, registry: KeyRegistry, spec: list[tuple[str, int]], extra=()):
    ids = {name: Identity.create(f"fixture:{name}", registry) for name, _ in spec}
    alloc = [(f"seq:{name}", sequencer_origin(ids[name].address, amount)) for name, amount in spec]
    alloc += list(extra)
    genesis = make_genesis(params, alloc)
    agents = {
        name: SequencerAgent(name, ids[name], genesis.labels[f"seq:{name}"], params) for name, _ in spec
    }
    return genesis, agents


def fig_branches() -> Fixture:
    p = FIXTURE_PARAMS
    reg = KeyRegistry()
    genesis, ag = _sequencers(p, reg, [("A", 3_000), ("B", 2_000), ("C", 1_000)])
    t = UtxoTangle(genesis, p, reg)
    fx = Fixture("fig-branches", t, {genesis.id: "genesis"})
    A, B, C = ag["A"], ag["B"], ag["C"]
    s1, s2 = slot_start(1), slot_start(2)

    def seq_out(tid: bytes) -> OutputId:
        return OutputId(tid, t.vertices[tid].tx.sequencer_index)

    a_prev = fx.add("A@1", make_branch(A, t, s1))
    b6 = fx.add("6", _build_milestone(B, t, Selection(B.origin, (a_prev,)), s1 + 10))
    fx.add("C@1", _build_milestone(C, t, Selection(C.origin, (a_prev,)), s1 + 12))
    # slot 2: chains A and C both branch from the same stem
    b4 = fx.add("4", make_branch(A, t, s2))
    b9 = fx.add("9", make_branch(C, t, s2))
    m3 = fx.add("3", _build_milestone(A, t, Selection(seq_out(b4), ()), s2 + 5))
    # chain B continues twice from milestone 6, once per side of the fork
    fx.add("5", _build_milestone(B, t, Selection(seq_out(b6), (m3,)), s2 + 10))
    fx.add("8", _build_milestone(B, t, Selection(seq_out(b6), (b9,)), s2 + 12))
    return fx


def coverage_basic() -> Fixture:
    p = FIXTURE_PARAMS
    reg = KeyRegistry()
    user = Identity.create("fixture:user", reg)
    genesis, ag = _sequencers(p, reg, [("A", 1_000), ("X", 1_000)], [("user", address_output(user.address, 50))])
    t = UtxoTangle(genesis, p, reg)
    fx = Fixture("coverage-basic", t, {genesis.id: "genesis"})
    A, X = ag["A"], ag["X"]
    s1 = slot_start(1)
    b1 = fx.add("B1", make_branch(A, t, s1))
    # user hands its whole 50 to chain A as a tag-along
    tag = Output(50, TagAlongLock(origin_chain_id(A.origin), user.address, 1))
    u = fx.add("u", Transaction((genesis.labels["user"],), (tag,), (), s1 + 2).signed(user))
    seq_b1 = OutputId(b1, t.vertices[b1].tx.sequencer_index)
    m1 = fx.add("m1", _build_milestone(A, t, Selection(seq_b1, (), (OutputId(u, 0),)), s1 + 5))
    fx.add("x1", _build_milestone(X, t, Selection(X.origin, (m1,)), s1 + 8))
    return fx


FIXTURES = {"fig-branches": fig_branches, "coverage-basic": coverage_basic}


def load_fixture(name: str) -> Fixture:
    try:
        return FIXTURES[name]()
    except KeyError:
        raise KeyError(f"unknown fixture {name!r}; known: {', '.join(sorted(FIXTURES))}") from None


__all__ = ["FIXTURES", "Fixture", "load_fixture", "AddressLock"]
