"""Scenario files: parsing, validation and construction of the simulated world.

Scenarios are TOML documents (``schema = 1``). See ``docs/FORMATS.md`` for the
full key list. Everything random in a run derives from ``seed`` through
:func:`rng_for`, one namespace per subsystem.
"""

from __future__ import annotations

import hashlib
import random
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .crypto import Identity, KeyRegistry
from .ledger import Genesis, OutputId, address_output, make_genesis, origin_chain_id, sequencer_origin
from .params import ConfigError, LedgerParams

SCHEMA_VERSION = 1
BUNDLED_DIR = Path(__file__).parent / "scenarios"


def rng_for(seed: int, *namespace: str) -> random.Random:
    h = hashlib.sha256(str(seed).encode())
    for part in namespace:
        h.update(b"/" + part.encode())
    return random.Random(int.from_bytes(h.digest()[:8], "big"))


@dataclass
class NodeSpec:
    name: str
    clock_offset_ms: int = 0


@dataclass
class PartitionSpec:
    from_slot: int
    to_slot: int
    groups: list[list[str]]


@dataclass
class SequencerSpec:
    name: str
    node: str
    amount: int
    beat_ticks: int = 12
    fanout: int = 1
    min_tag_along_fee: int = 0
    freeze_slots: int = 20


@dataclass
class WalletSpec:
    name: str
    node: str
    amount: int
    transfer: int = 1000
    fee: int = 100
    every_slots: int = 3
    start_slot: int = 2
    stop_slot: int | None = None
    to: list[str] = field(default_factory=list)
    tag_along: list[str] = field(default_factory=list)
    delegate_to: str | None = None
    delegate_amount: int = 0
    delegate_advance: int = 0


@dataclass
class AdversarySpec:
    name: str
    node: str
    seq_amount: int
    wallet_amount: int
    fork_slot: int
    release_slot: int
    victim_tag_along: str
    merchant: str = ""
    transfer: int = 1000
    beat_ticks: int = 12


@dataclass
class SpammerSpec:
    name: str
    node: str
    kind: str
    count: int
    amount: int = 100_000
    start_slot: int = 3


@dataclass
class Scenario:
    name: str
    seed: int
    duration_slots: int
    params: LedgerParams
    nodes: list[NodeSpec]
    latency_ms: int = 50
    jitter_ms: int = 20
    partitions: list[PartitionSpec] = field(default_factory=list)
    sequencers: list[SequencerSpec] = field(default_factory=list)
    wallets: list[WalletSpec] = field(default_factory=list)
    adversaries: list[AdversarySpec] = field(default_factory=list)
    spammers: list[SpammerSpec] = field(default_factory=list)
    prune_horizon_slots: int = 8
    sync_window_slots: int = 24
    max_pending_per_sender: int = 64
    pending_expiry_slots: int = 4

    def with_seed(self, seed: int) -> "Scenario":
        from dataclasses import replace

        return replace(self, seed=seed)


_TOP_KEYS = {
    "schema", "name", "seed", "duration_slots", "params", "network", "nodes", "sequencers",
    "wallets", "adversaries", "spammers", "prune_horizon_slots", "sync_window_slots",
    "max_pending_per_sender", "pending_expiry_slots",
}


def _build(cls, raw: Mapping[str, Any], where: str):
    known = set(cls.__dataclass_fields__)
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    try:
        return cls(**raw)
    except TypeError as e:
        raise ConfigError(f"{where}: {e}") from None


def parse_scenario(data: Mapping[str, Any]) -> Scenario:
    if data.get("schema") != SCHEMA_VERSION:
        raise ConfigError(f"scenario schema must be {SCHEMA_VERSION}, got {data.get('schema')!r}")
    unknown = sorted(set(data) - _TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    try:
        params = LedgerParams().with_overrides(data.get("params", {}))
    except TypeError as e:
        raise ConfigError(f"[params]: {e}") from None
    net = dict(data.get("network", {}))
    partitions = [_build(PartitionSpec, p, "[[network.partitions]]") for p in net.pop("partitions", [])]
    net_unknown = sorted(set(net) - {"latency_ms", "jitter_ms"})
    if net_unknown:
        raise ConfigError(f"[network]: unknown key(s) {', '.join(net_unknown)}")
    sc = Scenario(
        name=str(data.get("name", "unnamed")),
        seed=int(data.get("seed", 0)),
        duration_slots=int(data.get("duration_slots", 10)),
        params=params,
        nodes=[_build(NodeSpec, n, "[[nodes]]") for n in data.get("nodes", [])],
        latency_ms=int(net.get("latency_ms", 50)),
        jitter_ms=int(net.get("jitter_ms", 20)),
        partitions=partitions,
        sequencers=[_build(SequencerSpec, s, "[[sequencers]]") for s in data.get("sequencers", [])],
        wallets=[_build(WalletSpec, w, "[[wallets]]") for w in data.get("wallets", [])],
        adversaries=[_build(AdversarySpec, a, "[[adversaries]]") for a in data.get("adversaries", [])],
        spammers=[_build(SpammerSpec, s, "[[spammers]]") for s in data.get("spammers", [])],
    )
    for key in ("prune_horizon_slots", "sync_window_slots", "max_pending_per_sender", "pending_expiry_slots"):
        if key in data:
            setattr(sc, key, int(data[key]))
    validate_scenario(sc)
    return sc


def load_scenario(path: str | Path) -> Scenario:
    p = Path(path)
    if not p.exists() and (BUNDLED_DIR / f"{path}.toml").exists():
        p = BUNDLED_DIR / f"{path}.toml"
    try:
        with open(p, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"scenario file not found: {path}") from None
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{p}: {e}") from None
    return parse_scenario(data)


def bundled_scenarios() -> list[str]:
    return sorted(p.stem for p in BUNDLED_DIR.glob("*.toml"))


def validate_scenario(sc: Scenario) -> None:
    p = sc.params
    if sc.duration_slots < 1:
        raise ConfigError("duration_slots must be >= 1")
    if sc.latency_ms < 1 or sc.jitter_ms < 0 or sc.jitter_ms >= sc.latency_ms:
        raise ConfigError("network: need latency_ms >= 1 and 0 <= jitter_ms < latency_ms")
    for key in ("prune_horizon_slots", "sync_window_slots", "max_pending_per_sender", "pending_expiry_slots"):
        if getattr(sc, key) < 1:
            raise ConfigError(f"{key} must be >= 1")
    node_names = [n.name for n in sc.nodes]
    if not node_names:
        raise ConfigError("at least one [[nodes]] entry is required")
    if len(set(node_names)) != len(node_names):
        raise ConfigError("duplicate node name")
    agents = [*sc.sequencers, *sc.wallets, *sc.adversaries, *sc.spammers]
    names = [a.name for a in agents]
    if len(set(names)) != len(names):
        raise ConfigError("duplicate agent name")
    for a in agents:
        if a.node not in node_names:
            raise ConfigError(f"agent {a.name!r} is hosted on unknown node {a.node!r}")
    if not sc.sequencers and not sc.adversaries:
        raise ConfigError("at least one sequencer is required")
    seq_names = {s.name for s in sc.sequencers}
    wallet_names = {w.name for w in sc.wallets}
    for s in sc.sequencers:
        if s.amount < p.min_sequencer_amount:
            raise ConfigError(
                f"sequencer {s.name!r}: amount {s.amount} is below min_sequencer_amount "
                f"{p.min_sequencer_amount} (sequencer-amount rule)"
            )
        if not 1 <= s.fanout <= p.max_endorsements:
            raise ConfigError(f"sequencer {s.name!r}: fanout must be in [1, max_endorsements]")
        if s.beat_ticks < 1:
            raise ConfigError(f"sequencer {s.name!r}: beat_ticks must be >= 1")
        if not 1 <= s.freeze_slots <= p.max_freeze_slots:
            raise ConfigError(f"sequencer {s.name!r}: freeze_slots must be in [1, max_freeze_slots]")
    for w in sc.wallets:
        if w.amount <= 0 or w.transfer <= 0 or w.fee < 0 or w.every_slots < 1 or w.start_slot < 1:
            raise ConfigError(f"wallet {w.name!r}: amounts and schedule must be positive")
        for t in w.to:
            if t not in wallet_names or t == w.name:
                raise ConfigError(f"wallet {w.name!r}: recipient {t!r} is not another wallet")
        for t in w.tag_along:
            if t not in seq_names:
                raise ConfigError(f"wallet {w.name!r}: tag-along target {t!r} is not a sequencer")
        if w.delegate_to is not None:
            if w.delegate_to not in seq_names:
                raise ConfigError(f"wallet {w.name!r}: delegate_to {w.delegate_to!r} is not a sequencer")
            if not 0 < w.delegate_amount < w.amount:
                raise ConfigError(f"wallet {w.name!r}: delegate_amount must be in (0, amount)")
    for a in sc.adversaries:
        if a.seq_amount < p.min_sequencer_amount:
            raise ConfigError(
                f"adversary {a.name!r}: seq_amount below min_sequencer_amount (sequencer-amount rule)"
            )
        if not 1 <= a.fork_slot < a.release_slot:
            raise ConfigError(f"adversary {a.name!r}: need 1 <= fork_slot < release_slot")
        if a.victim_tag_along not in seq_names:
            raise ConfigError(f"adversary {a.name!r}: victim_tag_along must name a sequencer")
        if a.merchant and a.merchant not in wallet_names:
            raise ConfigError(f"adversary {a.name!r}: merchant must name a wallet")
        if any(s.node == a.node for s in sc.sequencers) or any(w.node == a.node for w in sc.wallets):
            raise ConfigError(f"adversary {a.name!r}: needs a node of its own")
    for s in sc.spammers:
        if s.kind not in ("pace", "deposit", "rate"):
            raise ConfigError(f"spammer {s.name!r}: kind must be pace, deposit or rate")
        if not 1 <= s.count <= 20:
            raise ConfigError(f"spammer {s.name!r}: count must be in [1, 20]")
    for part in sc.partitions:
        if not 0 <= part.from_slot < part.to_slot:
            raise ConfigError("partition: need from_slot < to_slot")
        flat = [n for g in part.groups for n in g]
        if len(set(flat)) != len(flat) or any(n not in node_names for n in flat):
            raise ConfigError("partition: groups must list distinct known nodes")
    total = sum(s.amount for s in sc.sequencers) + sum(w.amount for w in sc.wallets)
    total += sum(a.seq_amount + a.wallet_amount for a in sc.adversaries)
    total += sum(s.amount * s.count for s in sc.spammers)
    if total > p.initial_supply:
        raise ConfigError(f"genesis allocations {total} exceed initial_supply {p.initial_supply}")


@dataclass
class World:
    scenario: Scenario
    registry: KeyRegistry
    genesis: Genesis
    identities: dict[str, Identity]
    chain_of: dict[str, bytes]  # sequencer or adversary name -> chain id
    origin_of: dict[str, OutputId]


def build_world(sc: Scenario) -> World:
    """Identities and genesis ledger for a scenario (agents are built by the simulator)."""
    registry = KeyRegistry()
    ids: dict[str, Identity] = {}

    def ident(label: str) -> Identity:
        if label not in ids:
            ids[label] = Identity.create(f"{sc.name}:{label}", registry)
        return ids[label]

    alloc = []
    for s in sc.sequencers:
        alloc.append((f"seq:{s.name}", sequencer_origin(ident(s.name).address, s.amount)))
    for w in sc.wallets:
        alloc.append((f"wallet:{w.name}", address_output(ident(w.name).address, w.amount)))
    for a in sc.adversaries:
        alloc.append((f"seq:{a.name}", sequencer_origin(ident(a.name).address, a.seq_amount)))
        alloc.append((f"wallet:{a.name}", address_output(ident(f"{a.name}-wallet").address, a.wallet_amount)))
    for s in sc.spammers:
        for i in range(s.count):
            alloc.append((f"spam:{s.name}:{i}", address_output(ident(s.name).address, s.amount)))
    genesis = make_genesis(sc.params, alloc)
    origins = {label.split(":", 1)[1]: oid for label, oid in genesis.labels.items() if label.startswith("seq:")}
    chains = {name: origin_chain_id(oid) for name, oid in origins.items()}
    return World(sc, registry, genesis, ids, chains, origins)
