"""Post-hoc analysis of simulation traces: finality, safety bound, convergence."""

from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, NamedTuple, Sequence

MAX_TERMS = 64
MU_WINDOW = 4


class AnalysisError(ValueError):
    def __init__(self, kind: str, msg: str) -> None:
        super().__init__(f"{kind}: {msg}")
        self.kind = kind


class BranchInfo(NamedTuple):
    id: str
    slot: int
    pred: str | None
    delta: int
    coverage: int
    supply: int
    txs: frozenset = frozenset()  # tracked transactions first included by this branch
    audit: bool = True


def parse_theta(theta: Any) -> Fraction:
    try:
        t = Fraction(str(theta)) if not isinstance(theta, Fraction) else theta
    except (ValueError, ZeroDivisionError):
        raise AnalysisError("theta-range", f"cannot parse theta {theta!r}") from None
    if not Fraction(1, 2) < t < 1:
        raise AnalysisError("theta-range", f"theta must lie strictly between 1/2 and 1, got {theta}")
    return t


def _check_chain(chain: Sequence[BranchInfo]) -> None:
    for a, b in zip(chain, chain[1:]):
        if a.pred != b.id:
            raise AnalysisError("broken-chain", f"{b.id} is not the stem predecessor of {a.id}")


def inclusion_index(tx_id: str, chain: Sequence[BranchInfo]) -> int | None:
    """Index (tip = 0) of the branch whose delta brought ``tx_id`` in, if any."""
    for i, b in enumerate(chain):
        if tx_id in b.txs:
            return i
    return None


def beta_exact(tx_id: str, chain: Sequence[BranchInfo]) -> Fraction:
    """Weighted sum of deltas over a tip-first chain in which every branch holds ``tx_id``.

    A branch holds the transaction if it, or an older branch of the chain,
    included it; so the chain may not extend past the including branch.
    """
    if not chain:
        raise AnalysisError("tx-not-included", "empty chain")
    _check_chain(chain)
    idx = inclusion_index(tx_id, chain)
    if idx is None:
        raise AnalysisError("tx-not-included", f"{tx_id} is not in the ledger of {chain[-1].id}")
    if idx < len(chain) - 1:
        raise AnalysisError("tx-not-included", f"{tx_id} is not in the ledger of {chain[idx + 1].id}")
    return sum((Fraction(b.delta, 2**i) for i, b in enumerate(chain[:MAX_TERMS])), Fraction(0))


def beta(tx_id: str, chain: Sequence[BranchInfo]) -> int:
    """Integer form of :func:`beta_exact` (single floor at the end, like coverage)."""
    b = beta_exact(tx_id, chain)
    return b.numerator // b.denominator


def chain_upto_inclusion(tx_id: str, chain: Sequence[BranchInfo]) -> list[BranchInfo] | None:
    idx = inclusion_index(tx_id, chain)
    return None if idx is None else list(chain[: idx + 1])


def is_final(tx_id: str, theta: Any, chains: Iterable[Sequence[BranchInfo]], total_supply: int | None = None) -> bool:
    """True iff some observed chain holding ``tx_id`` has beta > 2 * theta * supply.

    ``total_supply`` defaults to the supply recorded in each chain's tip.
    """
    t = parse_theta(theta)
    for chain in chains:
        sub = chain_upto_inclusion(tx_id, chain)
        if sub is None:
            continue
        supply = total_supply if total_supply is not None else chain[0].supply
        if beta_exact(tx_id, sub) > 2 * t * supply:
            return True
    return False


def mu_bound(chain: Sequence[BranchInfo], total_supply: int) -> int:
    """Least capital an attacker needs to outweigh ``chain``; may be <= 0."""
    if not chain:
        raise AnalysisError("empty-chain", "mu_bound needs at least one branch")
    return min(2 * b.delta - total_supply for b in chain)


# ---- traces ---------------------------------------------------------------


@dataclass
class Snapshot:
    slot: int
    tip: str
    branch: str
    cov: int


@dataclass
class TraceData:
    header: dict
    branches: dict[str, BranchInfo]
    snaps: dict[str, list[Snapshot]]
    emits: dict[str, dict]
    rejects: Counter = field(default_factory=Counter)  # (node, rule) -> count
    delays: Counter = field(default_factory=Counter)  # node -> count
    prunes: Counter = field(default_factory=Counter)  # node -> pruned branches
    partitions: list = field(default_factory=list)

    @property
    def supply(self) -> int:
        return self.header["supply"]

    @property
    def honest(self) -> list[str]:
        return self.header["honest"]

    @property
    def duration(self) -> int:
        return self.header["duration_slots"]


def load_trace(source: str | Path | Iterable[str]) -> TraceData:
    if isinstance(source, (str, Path)):
        lines: Iterable[str] = Path(source).read_text().splitlines()
    else:
        lines = source
    header: dict | None = None
    branches: dict[str, BranchInfo] = {}
    snaps: dict[str, list[Snapshot]] = defaultdict(list)
    emits: dict[str, dict] = {}
    data = None
    for n, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            e = json.loads(line)
            ev = e["ev"]
        except (json.JSONDecodeError, KeyError, TypeError):
            raise AnalysisError("bad-trace", f"line {n} is not a trace event") from None
        if ev == "header":
            header = e
            g = e["genesis"]
            branches[g] = BranchInfo(g, 0, None, e["supply"], e["supply"], e["supply"])
            data = TraceData(header, branches, snaps, emits)
        elif data is None:
            raise AnalysisError("bad-trace", "trace does not start with a header")
        elif ev == "branch":
            if e["id"] not in branches:
                branches[e["id"]] = BranchInfo(
                    e["id"], e["slot"], e["pred"], e["delta"], e["cov"], e["supply"], frozenset(e["incl"]), e["audit"]
                )
        elif ev == "snap":
            snaps[e["node"]].append(Snapshot(e["slot"], e["tip"], e["tip_branch"], e["cov"]))
        elif ev == "emit":
            emits.setdefault(e["id"], e)
        elif ev == "reject":
            data.rejects[(e["node"], e["rule"])] += 1
        elif ev == "delay":
            data.delays[e["node"]] += 1
        elif ev == "prune":
            data.prunes[e["node"]] += e["branches"]
        elif ev in ("partition", "heal"):
            data.partitions.append(e)
    if data is None:
        raise AnalysisError("bad-trace", "empty trace")
    return data


class ChainIndex:
    """Memoized tip-first branch chains over a trace's branch map."""

    def __init__(self, branches: dict[str, BranchInfo]) -> None:
        self.branches = branches
        self._lists: dict[str, list[BranchInfo]] = {}
        self._sets: dict[str, frozenset] = {}

    def chain(self, tip: str) -> list[BranchInfo]:
        got = self._lists.get(tip)
        if got is None:
            got = []
            cur: str | None = tip
            while cur is not None and cur in self.branches:
                b = self.branches[cur]
                got.append(b)
                cur = b.pred
            self._lists[tip] = got
        return got

    def ids(self, tip: str) -> frozenset:
        got = self._sets.get(tip)
        if got is None:
            got = self._sets[tip] = frozenset(b.id for b in self.chain(tip))
        return got


def final_branch(td: TraceData) -> str:
    """Heaviest tip branch among the honest nodes' last snapshots."""
    last = [td.snaps[n][-1] for n in td.honest if td.snaps.get(n)]
    best = max(last, key=lambda s: (td.branches[s.branch].coverage, s.branch))
    return best.branch


def convergence_metrics(td: TraceData, settle: int = 3) -> dict[str, Any]:
    idx = ChainIndex(td.branches)
    final = idx.chain(final_branch(td))
    final_ids = {b.id for b in final}
    honest = [n for n in td.honest if td.snaps.get(n)]
    T = td.duration
    # chain sets per node per snapshot slot
    seen: dict[str, list[frozenset]] = {}
    for n in honest:
        by_slot: list[frozenset] = [frozenset()] * T
        for s in td.snaps[n]:
            by_slot[s.slot] = idx.ids(s.branch)
        seen[n] = by_slot
    by_slot_final = {b.slot: b for b in final}
    branches_at: dict[int, list[str]] = defaultdict(list)
    for b in td.branches.values():
        branches_at[b.slot].append(b.id)

    rows = []
    latest: BranchInfo = final[-1]
    stats = []
    for s in range(T):
        if s in by_slot_final:
            latest = by_slot_final[s]
        target = latest.id
        a = s
        for k in range(T - 1, s - 1, -1):
            if any(target not in seen[n][k] for n in honest):
                a = k + 1
                break
        settled = a <= T - 1
        sta = a - s if settled else None
        if 1 <= s <= T - 1 - settle:
            stats.append(sta)
        rows.append(
            {
                "slot": s,
                "branch_count": len(branches_at.get(s, ())),
                "final_branch": target,
                "final_branch_coverage": latest.coverage,
                "covered_ppm": latest.delta * 1_000_000 // latest.supply,
                "slots_to_agreement": sta,
                "orphans": sum(1 for b in branches_at.get(s, ()) if b not in final_ids),
                "mu": mu_bound([b for b in final if s - MU_WINDOW < b.slot <= s] or [latest], latest.supply),
            }
        )
    reorgs = []
    for n in honest:
        prev = None
        for snap in td.snaps[n]:
            if prev is not None and prev != snap.branch:
                depth = len(idx.ids(prev) - idx.ids(snap.branch))
                if depth:
                    reorgs.append({"node": n, "slot": snap.slot, "depth": depth})
            prev = snap.branch
    # agreement of the nodes' final views
    ends = {n: idx.ids(td.snaps[n][-1].branch) for n in honest}
    agreed_through = -1
    for b in final:
        if all(b.id in ids for ids in ends.values()):
            agreed_through = b.slot
            break
    ok = [x for x in stats if x is not None and x <= settle]
    finite = [x for x in stats if x is not None]
    audit_failures = sorted(b.id for b in td.branches.values() if not b.audit)
    return {
        "slots": rows,
        "final_branch": final[0].id,
        "agreed_through_slot": agreed_through,
        "single_chain": agreed_through >= T - 1 - settle,
        "evaluated_slots": len(stats),
        "within_settle_fraction": (len(ok) / len(stats)) if stats else 1.0,
        "mean_slots_to_agreement": (sum(finite) / len(finite)) if finite else None,
        "unsettled_slots": sum(1 for x in stats if x is None),
        "reorgs": reorgs,
        "max_reorg_depth": max((r["depth"] for r in reorgs), default=0),
        "orphan_branches": sum(r["orphans"] for r in rows),
        "supply_audit_ok": not audit_failures,
        "audit_failures": audit_failures,
    }


def finality_report(td: TraceData, theta: Any) -> dict[str, Any]:
    t = parse_theta(theta)
    idx = ChainIndex(td.branches)
    final_ids = idx.ids(final_branch(td))
    tracked = {tid: e["tag"] for tid, e in td.emits.items() if "tag" in e}
    included_at: dict[str, str] = {}
    for b in td.branches.values():
        for tx in b.txs:
            if b.id in final_ids:
                included_at[tx] = b.id
    out: dict[str, Any] = {}
    for tx in sorted(tracked):
        per_node: dict[str, int | None] = {}
        reverted = False
        for n in sorted(td.snaps):
            first = None
            for snap in td.snaps[n]:
                chain = idx.chain(snap.branch)
                sub = chain_upto_inclusion(tx, chain)
                if sub is None:
                    continue
                if beta_exact(tx, sub) > 2 * t * chain[0].supply:
                    first = snap.slot
                    break
            per_node[n] = first
            if first is not None and tx not in included_at:
                reverted = True
        out[tx] = {
            "tag": tracked[tx],
            "emitted_by": td.emits[tx]["node"],
            "in_final_chain": tx in included_at,
            "final_slot": per_node,
            "reverted": reverted,
        }
    return out


def attack_outcome(td: TraceData, finality: dict[str, Any]) -> dict[str, Any] | None:
    victims = [tx for tx, r in finality.items() if r["tag"] == "victim"]
    doubles = [tx for tx, r in finality.items() if r["tag"] == "double"]
    if not victims and not doubles:
        return None
    v_final = any(finality[v]["in_final_chain"] for v in victims)
    d_final = any(finality[d]["in_final_chain"] for d in doubles)
    honest = set(td.honest)
    return {
        "victim": victims,
        "double": doubles,
        "victim_in_final_chain": v_final,
        "double_in_final_chain": d_final,
        "victim_final_on_honest": any(
            r is not None for v in victims for n, r in finality[v]["final_slot"].items() if n in honest
        ),
        "reverted": d_final and not v_final,
    }


def analyze(td: TraceData, theta: Any = Fraction(2, 3)) -> dict[str, Any]:
    t = parse_theta(theta)
    conv = convergence_metrics(td)
    fin = finality_report(td, t)
    rejects: dict[str, dict[str, int]] = defaultdict(dict)
    for (node, rule), c in sorted(td.rejects.items()):
        rejects[node][rule] = c
    return {
        "scenario": td.header["scenario"],
        "seed": td.header["seed"],
        "theta": str(t),
        "convergence": conv,
        "finality": fin,
        "reverted": sorted(tx for tx, r in fin.items() if r["reverted"]),
        "attack": attack_outcome(td, fin),
        "rejects": dict(rejects),
        "delays": dict(sorted(td.delays.items())),
        "pruned_branches": dict(sorted(td.prunes.items())),
    }
