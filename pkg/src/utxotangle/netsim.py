"""Virtual-time network of nodes hosting agents.

Events sit in a heap keyed by (wall ms, sequence number); the sequence number
is a global counter, so equal times resolve in scheduling order and a run is a
pure function of the scenario. Every node keeps its own tangle and its own
clock (wall + offset). Nothing here reads the real clock.
"""

from __future__ import annotations

import heapq
import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Any

from .agents import (
    AdversaryAgent,
    Emission,
    SequencerAgent,
    SequencerConfig,
    SpammerAgent,
    WalletAgent,
    adversary_run,
    sequencer_step,
    spam_burst,
    wallet_step,
)
from .crypto import Identity
from .ledger import Transaction
from .scenario import Scenario, World, build_world, rng_for
from .tangle import Status, UtxoTangle
from .timeline import real_time_of, slot_of

TRACE_SCHEMA = 1
METRIC_COLUMNS = (
    "slot", "node", "tip", "tip_branch", "branch_slot", "tip_coverage", "branch_delta",
    "branch_coverage", "covered_ppm", "supply", "branches_seen", "vertices", "pending",
    "attached", "rejected", "delayed",
)

# event kinds
AGENT, DELIVER, RELEASE, PULL, SYNC, TICK, NETWORK = range(7)


def short(tx_id: bytes) -> str:
    return tx_id[:8].hex()


class Trace:
    """Line-delimited JSON events plus per-slot metric rows."""

    def __init__(self) -> None:
        self.lines: list[str] = []
        self.metrics: list[dict[str, Any]] = []

    def event(self, ms: int, ev: str, **fields: Any) -> None:
        self.lines.append(json.dumps({"ms": ms, "ev": ev, **fields}, sort_keys=True, separators=(",", ":")))

    def text(self) -> str:
        return "\n".join(self.lines) + "\n"

    def events(self):
        for line in self.lines:
            yield json.loads(line)


@dataclass
class Node:
    name: str
    offset: int
    tangle: UtxoTangle
    honest: bool = True
    agents: list = field(default_factory=list)
    next_allowed: dict = field(default_factory=dict)  # sender -> local ms
    inflight: set = field(default_factory=set)  # held back by cool-down or rate limit
    hidden: set = field(default_factory=set)  # private txs not yet released
    by_slot: dict = field(default_factory=lambda: defaultdict(list))
    counters: Counter = field(default_factory=Counter)

    def local(self, wall_ms: int) -> int:
        return wall_ms + self.offset


@dataclass
class RunResult:
    trace: Trace
    nodes: dict[str, Node]
    world: World
    summary: dict[str, Any]


class Simulation:
    def __init__(self, scenario: Scenario) -> None:
        self.sc = scenario
        self.params = scenario.params
        self.world = build_world(scenario)
        self.trace = Trace()
        self.heap: list = []
        self.seq = 0
        self.now = 0
        self.lat_rng = rng_for(scenario.seed, "latency")
        self.net_rng = rng_for(scenario.seed, "network")
        self.tracked: dict[bytes, str] = {}
        self.labels: dict[bytes, str] = {}
        self.slot_ms = self.params.slot_duration_ms
        self.nodes: dict[str, Node] = {}
        adversary_nodes = {a.node for a in scenario.adversaries}
        for spec in scenario.nodes:
            t = UtxoTangle(
                self.world.genesis,
                self.params,
                self.world.registry,
                scenario.max_pending_per_sender,
                scenario.pending_expiry_slots,
            )
            self.nodes[spec.name] = Node(spec.name, spec.clock_offset_ms, t, spec.name not in adversary_nodes)
        self._build_agents()

    # ---- setup -------------------------------------------------------------

    def _build_agents(self) -> None:
        sc, w = self.sc, self.world
        g = w.genesis
        wallet_addr = {ws.name: w.identities[ws.name].address for ws in sc.wallets}
        for s in sc.sequencers:
            cfg = SequencerConfig(
                beat_ticks=s.beat_ticks,
                fanout=s.fanout,
                min_tag_along_fee=s.min_tag_along_fee,
                freeze_slots=s.freeze_slots,
            )
            agent = SequencerAgent(s.name, w.identities[s.name], w.origin_of[s.name], self.params, cfg)
            self.nodes[s.node].agents.append(agent)
        for ws in sc.wallets:
            agent = WalletAgent(
                ws.name,
                w.identities[ws.name],
                g.labels[f"wallet:{ws.name}"],
                ws.amount,
                self.params,
                rng_for(sc.seed, "agents", ws.name),
                recipients=[wallet_addr[t] for t in ws.to],
                tag_along_targets=[w.chain_of[t] for t in ws.tag_along],
                amount=ws.transfer,
                fee=ws.fee,
                every_slots=ws.every_slots,
                start_slot=ws.start_slot,
                stop_slot=ws.stop_slot,
            )
            if ws.delegate_to is not None:
                agent.delegate_chain = w.chain_of[ws.delegate_to]
                agent.delegate_amount = ws.delegate_amount
                agent.delegate_advance = ws.delegate_advance
            self.nodes[ws.node].agents.append(agent)
        for a in sc.adversaries:
            seq = SequencerAgent(
                a.name, w.identities[a.name], w.origin_of[a.name], self.params, SequencerConfig(beat_ticks=a.beat_ticks)
            )
            wid = w.identities[f"{a.name}-wallet"]
            wallet = WalletAgent(
                f"{a.name}-wallet",
                wid,
                g.labels[f"wallet:{a.name}"],
                a.wallet_amount,
                self.params,
                rng_for(sc.seed, "agents", a.name),
                amount=a.transfer,
                next_ts=0,
            )
            if a.merchant:
                merchant = wallet_addr[a.merchant]
            else:
                merchant = Identity.create(f"{sc.name}:merchant:{a.name}", w.registry).address
            agent = AdversaryAgent(
                a.name,
                seq if a.seq_amount > 0 else None,
                wallet if a.wallet_amount > 0 else None,
                a.fork_slot,
                a.release_slot,
                merchant,
                w.chain_of[a.victim_tag_along],
            )
            self.nodes[a.node].agents.append(agent)
        for s in sc.spammers:
            utxos = [(g.labels[f"spam:{s.name}:{i}"], s.amount, 0) for i in range(s.count)]
            agent = SpammerAgent(s.name, w.identities[s.name], utxos, self.params, s.kind, s.count, s.start_slot)
            self.nodes[s.node].agents.append(agent)
        for name, ident in w.identities.items():
            self.labels[ident.address] = name
        self.chain_labels = {cid: name for name, cid in w.chain_of.items()}

    # ---- scheduling --------------------------------------------------------

    def push(self, ms: int, kind: int, data: tuple) -> None:
        self.seq += 1
        heapq.heappush(self.heap, (ms, self.seq, kind, data))

    def latency(self) -> int:
        j = self.sc.jitter_ms
        return max(1, self.sc.latency_ms + (self.lat_rng.randint(-j, j) if j else 0))

    def current_slot(self, wall_ms: int) -> int:
        return max(0, (wall_ms - self.params.genesis_time_ms)) // self.slot_ms

    def reachable(self, a: str, b: str, wall_ms: int) -> bool:
        if a == b:
            return True
        slot = self.current_slot(wall_ms)
        for p in self.sc.partitions:
            if p.from_slot <= slot < p.to_slot:
                ga = next((i for i, g in enumerate(p.groups) if a in g), f"solo:{a}")
                gb = next((i for i, g in enumerate(p.groups) if b in g), f"solo:{b}")
                if ga != gb:
                    return False
        return True

    def send(self, src: str, dst: str, tx: Transaction, pulled: bool) -> None:
        if not self.reachable(src, dst, self.now):
            self.trace.event(self.now, "drop", src=src, dst=dst, id=short(tx.id))
            return
        self.push(self.now + self.latency(), DELIVER, (dst, tx, pulled, False, src))

    # ---- main loop ---------------------------------------------------------

    def run(self) -> RunResult:
        sc = self.sc
        g0 = self.params.genesis_time_ms
        self._header()
        for name in sorted(self.nodes):
            node = self.nodes[name]
            for i, agent in enumerate(node.agents):
                wake = agent.wake_ms()
                if wake is not None:
                    self.push(max(g0, wake - node.offset), AGENT, (name, i))
        # snapshot just before the slot ends on the fastest clock
        lead = max(0, max(n.offset for n in self.nodes.values()))
        for s in range(sc.duration_slots):
            self.push(g0 + (s + 1) * self.slot_ms - 1 - lead, TICK, (s,))
        for p in sc.partitions:
            self.push(g0 + p.from_slot * self.slot_ms, NETWORK, ("partition", p))
            self.push(g0 + p.to_slot * self.slot_ms, NETWORK, ("heal", p))
        self.advance(g0 + sc.duration_slots * self.slot_ms)
        return RunResult(self.trace, self.nodes, self.world, self._summary())

    def advance(self, until_ms: int) -> None:
        """Process queued events strictly before ``until_ms``."""
        while self.heap and self.heap[0][0] < until_ms:
            ms, _, kind, data = heapq.heappop(self.heap)
            self.now = ms
            if kind == AGENT:
                self._agent(*data)
            elif kind == DELIVER:
                self._deliver(*data)
            elif kind == PULL:
                self._pull(*data)
            elif kind == SYNC:
                self._sync_deliver(*data)
            elif kind == TICK:
                self._tick(*data)
            elif kind == NETWORK:
                self._network(*data)

    def _header(self) -> None:
        sc = self.sc
        self.trace.event(
            0,
            "header",
            schema=TRACE_SCHEMA,
            scenario=sc.name,
            seed=sc.seed,
            duration_slots=sc.duration_slots,
            supply=self.params.initial_supply,
            params=self.params.to_dict(),
            nodes=sorted(self.nodes),
            honest=sorted(n for n, node in self.nodes.items() if node.honest),
            genesis=short(self.world.genesis.id),
            chains={name: short(cid) for name, cid in sorted(self.world.chain_of.items())},
        )

    def _agent(self, node_name: str, idx: int) -> None:
        node = self.nodes[node_name]
        agent = node.agents[idx]
        local = node.local(self.now)
        view = node.tangle
        if isinstance(agent, SequencerAgent):
            tx = sequencer_step(agent, view, local)
            emissions = [Emission(tx, agent.private)] if tx is not None else []
        elif isinstance(agent, WalletAgent):
            tx = wallet_step(agent, view, local)
            emissions = [Emission(tx, False, "transfer")] if tx is not None else []
        elif isinstance(agent, AdversaryAgent):
            emissions = adversary_run(agent, view, local)
        elif isinstance(agent, SpammerAgent):
            emissions = [Emission(tx, False, f"spam-{agent.kind}") for tx in spam_burst(agent)]
        else:  # pragma: no cover
            raise TypeError(agent)
        for e in emissions:
            self._emit(node, agent.name, e)
        if isinstance(agent, AdversaryAgent) and agent.state == "released" and node.hidden:
            self._release(node)
        wake = agent.wake_ms()
        if wake is not None:
            self.push(max(self.now + 1, wake - node.offset), AGENT, (node_name, idx))

    def _emit(self, node: Node, agent_name: str, e: Emission) -> None:
        tx = e.tx
        kind = "branch" if tx.is_branch else "seq" if tx.is_sequencer else "user"
        if e.tag is not None:
            self.tracked[tx.id] = e.tag
        fields = dict(node=node.name, id=short(tx.id), agent=agent_name, kind=kind, ts=tx.timestamp)
        if e.tag is not None:
            fields["tag"] = e.tag
        if e.private:
            fields["private"] = True
        self.trace.event(self.now, "emit", **fields)
        if e.private:
            node.hidden.add(tx.id)
        self._ingest(node, tx, node.name)
        if not e.private:
            for other in sorted(self.nodes):
                if other != node.name:
                    self.send(node.name, other, tx, False)

    def _release(self, node: Node) -> None:
        self.trace.event(self.now, "release", node=node.name, count=len(node.hidden))
        node.hidden.clear()
        for other in sorted(self.nodes):
            if other != node.name:
                self._sync_pair(node, self.nodes[other], self.sc.duration_slots)

    # ---- delivery ----------------------------------------------------------

    def _deliver(self, node_name: str, tx: Transaction, pulled: bool, released: bool, src: str) -> None:
        node = self.nodes[node_name]
        tid = tx.id
        if tid in node.tangle.vertices:
            node.inflight.discard(tid)
            return
        local = node.local(self.now)
        if not pulled and not released:
            pace = self.params.sequencer_pace_ticks if tx.is_sequencer else self.params.user_pace_ticks
            pace_ms = pace * self.params.tick_duration_ms
            allowed = node.next_allowed.get(tx.sender)
            if allowed is not None and local < allowed:
                node.next_allowed[tx.sender] = allowed + pace_ms
                node.inflight.add(tid)
                node.counters["delay"] += 1
                self.trace.event(self.now, "delay", node=node.name, id=short(tid), wait=allowed - local)
                self.push(allowed - node.offset, DELIVER, (node_name, tx, False, True, src))
                return
            node.next_allowed[tx.sender] = local + pace_ms
        self._ingest(node, tx, src, pulled)

    def _ingest(self, node: Node, tx: Transaction, src: str, solicited: bool = False) -> None:
        tid = tx.id
        due = real_time_of(tx.timestamp, self.params)
        now_local = node.local(self.now)
        if due > now_local:
            node.inflight.add(tid)
            node.counters["cooldown"] += 1
            self.trace.event(self.now, "cooldown", node=node.name, id=short(tid), wait=due - now_local)
            self.push(due - node.offset, DELIVER, (node.name, tx, solicited, True, src))
            return
        node.inflight.discard(tid)
        res = node.tangle.attach(tx, solicited)
        self._drain(node)
        if res.status is Status.PENDING:
            node.counters["pending"] += 1
            self.trace.event(self.now, "pending", node=node.name, id=short(tid), missing=len(res.missing))
            # whoever sent the child holds its parents
            if src != node.name:
                for m in res.missing:
                    self._request(node, m, src)

    def _drain(self, node: Node) -> None:
        t = node.tangle
        for tid, status, rule in t.transitions:
            v = t.vertices.get(tid)
            if status is Status.VALID:
                node.counters["attach"] += 1
                node.by_slot[v.slot].append(tid)
                self.trace.event(self.now, "attach", node=node.name, id=short(tid))
                if tid in t.records:
                    self._branch_event(node, t.records[tid])
            else:
                node.counters[f"reject:{rule.value}"] += 1
                node.counters["reject"] += 1
                self.trace.event(self.now, "reject", node=node.name, id=short(tid), rule=rule.value)
        t.transitions.clear()

    def _branch_event(self, node: Node, rec) -> None:
        incl = sorted(short(t) for t in rec.delta_txs if t in self.tracked)
        v = node.tangle.vertices[rec.branch_id]
        seq_chain = v.tx.outputs[v.tx.sequencer_index].chain.chain_id
        self.trace.event(
            self.now,
            "branch",
            node=node.name,
            id=short(rec.branch_id),
            slot=rec.slot,
            pred=short(rec.stem_pred),
            seq=self.chain_labels.get(seq_chain, short(seq_chain)),
            delta=rec.delta,
            cov=rec.coverage,
            supply=rec.state.supply,
            minted=rec.state.minted,
            audit=rec.audit,
            incl=incl,
        )

    def _request(self, node: Node, tx_id: bytes, peer: str) -> None:
        if not self.reachable(node.name, peer, self.now):
            return
        self.trace.event(self.now, "pull", node=node.name, peer=peer, id=short(tx_id))
        node.counters["pull"] += 1
        self.push(self.now + self.latency(), PULL, (node.name, tx_id, peer))

    def _repull(self, node: Node) -> None:
        """Ask every reachable peer for parents that are still missing."""
        t = node.tangle
        wanted = sorted({p for v in t.vertices.values() if v.status is Status.PENDING for p in v.missing if p not in t.vertices})
        for m in wanted:
            for peer in sorted(self.nodes):
                if peer != node.name:
                    self._request(node, m, peer)

    def _pull(self, requester: str, tx_id: bytes, responder: str) -> None:
        node = self.nodes[responder]
        v = node.tangle.vertices.get(tx_id)
        if v is None or v.status is not Status.VALID or tx_id in node.hidden:
            return
        if not self.reachable(responder, requester, self.now):
            self.trace.event(self.now, "drop", src=responder, dst=requester, id=short(tx_id))
            return
        self.push(self.now + self.latency(), DELIVER, (requester, v.tx, True, False, responder))

    # ---- anti-entropy --------------------------------------------------------

    def _sync_pair(self, src: Node, dst: Node, window: int) -> None:
        """``dst`` pulls every recent valid tx of ``src`` it does not know yet."""
        if not self.reachable(src.name, dst.name, self.now):
            return
        cur = self.current_slot(self.now)
        want = []
        known = dst.tangle.vertices
        gone = dst.tangle.pruned_orphans
        for s in range(max(0, cur - window), cur + 1):
            for tid in src.by_slot.get(s, ()):
                if tid not in known and tid not in dst.inflight and tid not in src.hidden and tid not in gone:
                    v = src.tangle.vertices.get(tid)
                    if v is not None and v.status is Status.VALID:
                        want.append(v.tx)
        if not want:
            return
        want.sort(key=lambda tx: (tx.timestamp, tx.id))
        self.trace.event(self.now, "sync", src=src.name, dst=dst.name, count=len(want))
        dst.counters["synced"] += len(want)
        self.push(self.now + 2 * self.latency(), SYNC, (dst.name, src.name, tuple(want)))

    def _sync_deliver(self, dst: str, src: str, txs: tuple) -> None:
        for tx in txs:
            self._deliver(dst, tx, True, False, src)

    def _network(self, what: str, part) -> None:
        self.trace.event(self.now, what, groups=part.groups, from_slot=part.from_slot, to_slot=part.to_slot)
        if what == "heal":
            self._anti_entropy(self.sc.sync_window_slots)

    def _anti_entropy(self, window: int) -> None:
        names = sorted(self.nodes)
        for a in names:
            for b in names:
                if a != b:
                    self._sync_pair(self.nodes[a], self.nodes[b], window)

    # ---- per-slot bookkeeping ----------------------------------------------------

    def _tick(self, slot: int) -> None:
        for name in sorted(self.nodes):
            node = self.nodes[name]
            t = node.tangle
            tip = t.preferred_tip()
            tv = t.vertices[tip]
            tip_branch = tv.baseline or t.genesis_id
            rec = t.records[tip_branch]
            supply = rec.state.supply
            self.trace.event(
                self.now,
                "snap",
                node=name,
                slot=slot,
                tip=short(tip),
                tip_branch=short(tip_branch),
                cov=tv.coverage,
            )
            self.trace.metrics.append(
                {
                    "slot": slot,
                    "node": name,
                    "tip": short(tip),
                    "tip_branch": short(tip_branch),
                    "branch_slot": rec.slot,
                    "tip_coverage": tv.coverage,
                    "branch_delta": rec.delta,
                    "branch_coverage": rec.coverage,
                    "covered_ppm": rec.delta * 1_000_000 // supply,
                    "supply": supply,
                    "branches_seen": len(t.branches.get(slot, ())),
                    "vertices": len(t.vertices),
                    "pending": sum(1 for v in t.vertices.values() if v.status is Status.PENDING),
                    "attached": node.counters["attach"],
                    "rejected": node.counters["reject"],
                    "delayed": node.counters["delay"],
                }
            )
            if not node.hidden:
                counts = t.prune(tip_branch, self.sc.prune_horizon_slots, slot)
                if counts.get("branches") or counts.get("vertices") or counts.get("pending"):
                    node.counters["pruned_branches"] += counts.get("branches", 0)
                    node.counters["pruned_vertices"] += counts.get("vertices", 0)
                    self.trace.event(
                        self.now,
                        "prune",
                        node=name,
                        slot=slot,
                        branches=counts.get("branches", 0),
                        vertices=counts.get("vertices", 0),
                        pending=counts.get("pending", 0),
                    )
        self._anti_entropy(min(self.sc.sync_window_slots, 4))
        for name in sorted(self.nodes):
            self._repull(self.nodes[name])

    def _summary(self) -> dict[str, Any]:
        nodes = {}
        for name in sorted(self.nodes):
            node = self.nodes[name]
            t = node.tangle
            tip = t.preferred_tip()
            kept = set(t.branch_chain(t.vertices[tip].baseline or t.genesis_id))
            horizon = self.sc.duration_slots - 1 - self.sc.prune_horizon_slots
            stale = [b for b, r in t.records.items() if r.slot <= horizon - t.late_grace_rounds and b not in kept]
            nodes[name] = {
                "honest": node.honest,
                "counters": dict(sorted(node.counters.items())),
                "probes": dict(sorted(t.probes.items())),
                "final_tip": short(tip),
                "final_branch": short(t.vertices[tip].baseline or t.genesis_id),
                "vertices": len(t.vertices),
                "branch_records": len(t.records),
                "stale_orphan_branches": len(stale),
            }
        return {
            "scenario": self.sc.name,
            "seed": self.sc.seed,
            "duration_slots": self.sc.duration_slots,
            "nodes": nodes,
            "tracked": {short(k): v for k, v in sorted(self.tracked.items(), key=lambda kv: kv[0])},
        }


def run(scenario: Scenario) -> RunResult:
    return Simulation(scenario).run()
