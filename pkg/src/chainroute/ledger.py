"""Anchor-side peer registry and the seeker's cached snapshot of it.

The registry holds one :class:`PeerRecord` per compute peer: the layer shard
it serves, its trust score, a smoothed latency estimate and the time of its
last heartbeat. Records are immutable; every update swaps in a new record,
which lets a :class:`CachedView` share records with the registry without
copying them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Iterable, Mapping, Optional


class LedgerError(Exception):
    """Base class for registry errors."""


class UnknownPeerError(LedgerError, KeyError):
    def __init__(self, peer_id):
        super().__init__(peer_id)
        self.peer_id = peer_id

    def __str__(self):
        return f"unknown peer {self.peer_id!r}"


class FeedbackContractError(LedgerError, ValueError):
    """Raised when an execution report is inconsistent (e.g. failure without a culprit)."""


@dataclass(frozen=True)
class LedgerParams:
    beta: float = 0.30
    delta_r_plus: float = 0.03
    delta_r_minus: float = 0.2
    t_hb: float = 2.0
    t_ttl: float = 15.0
    t_gossip: float = 2.0
    latency_init: float = 0.25
    trust_init: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")
        for name in ("delta_r_plus", "delta_r_minus"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {value}")
        if not self.t_ttl > self.t_hb > 0.0:
            raise ValueError("need t_ttl > t_hb > 0")
        if self.t_gossip <= 0.0:
            raise ValueError("t_gossip must be positive")
        if self.latency_init < 0.0:
            raise ValueError("latency_init must be non-negative")
        if not 0.0 <= self.trust_init <= 1.0:
            raise ValueError("trust_init must lie in [0, 1]")


@dataclass(frozen=True)
class PeerRecord:
    peer_id: str
    layer_start: int
    layer_end: int
    trust: float = 1.0
    latency_est: float = 0.25
    last_heartbeat: float = 0.0
    profile_ref: Optional[str] = None

    def __post_init__(self):
        if not 1 <= self.layer_start <= self.layer_end:
            raise ValueError(
                f"peer {self.peer_id!r}: bad layer range [{self.layer_start}, {self.layer_end}]"
            )
        if not 0.0 <= self.trust <= 1.0:
            raise ValueError(f"peer {self.peer_id!r}: trust {self.trust} outside [0, 1]")
        if self.latency_est < 0.0:
            raise ValueError(f"peer {self.peer_id!r}: negative latency estimate")

    @property
    def layers(self) -> tuple[int, int]:
        return (self.layer_start, self.layer_end)

    @property
    def n_layers(self) -> int:
        return self.layer_end - self.layer_start + 1


class Registry:
    """Global state held by the Anchor: peer_id -> PeerRecord, plus the clock."""

    def __init__(self, records: Iterable[PeerRecord] = (), now: float = 0.0):
        self.records: dict[str, PeerRecord] = {}
        self.now = float(now)
        for rec in records:
            if rec.peer_id in self.records:
                raise ValueError(f"duplicate peer id {rec.peer_id!r}")
            self.records[rec.peer_id] = rec

    def __len__(self):
        return len(self.records)

    def __contains__(self, peer_id):
        return peer_id in self.records

    def __getitem__(self, peer_id) -> PeerRecord:
        try:
            return self.records[peer_id]
        except KeyError:
            raise UnknownPeerError(peer_id) from None

    def add(self, record: PeerRecord) -> None:
        if record.peer_id in self.records:
            raise ValueError(f"duplicate peer id {record.peer_id!r}")
        self.records[record.peer_id] = record

    def advance(self, now: float) -> None:
        if now < self.now:
            raise ValueError(f"clock cannot move backwards ({now} < {self.now})")
        self.now = float(now)

    def snapshot(self) -> "CachedView":
        return CachedView(MappingProxyType(dict(self.records)), self.now)

    def to_json(self) -> dict:
        return _dump(self.records, self.now)


@dataclass(frozen=True)
class CachedView:
    """Immutable seeker-side copy of the registry as of ``as_of``."""

    records: Mapping[str, PeerRecord] = field(default_factory=lambda: MappingProxyType({}))
    as_of: float = 0.0

    def __len__(self):
        return len(self.records)

    def __contains__(self, peer_id):
        return peer_id in self.records

    def __getitem__(self, peer_id) -> PeerRecord:
        try:
            return self.records[peer_id]
        except KeyError:
            raise UnknownPeerError(peer_id) from None

    def to_json(self) -> dict:
        return _dump(self.records, self.as_of)


def _dump(records: Mapping[str, PeerRecord], as_of: float) -> dict:
    return {
        "as_of": as_of,
        "peers": [
            {
                "id": r.peer_id,
                "layer_start": r.layer_start,
                "layer_end": r.layer_end,
                "trust": r.trust,
                "latency_est": r.latency_est,
                "last_heartbeat": r.last_heartbeat,
            }
            for r in sorted(records.values(), key=lambda r: r.peer_id)
        ],
    }


def dumps(state: "Registry | CachedView") -> str:
    return json.dumps(state.to_json(), indent=None, separators=(",", ":"))


def view_from_json(doc: "dict | str") -> CachedView:
    if isinstance(doc, str):
        doc = json.loads(doc)
    records = {}
    for p in doc["peers"]:
        rec = PeerRecord(
            peer_id=p["id"],
            layer_start=int(p["layer_start"]),
            layer_end=int(p["layer_end"]),
            trust=float(p["trust"]),
            latency_est=float(p["latency_est"]),
            last_heartbeat=float(p["last_heartbeat"]),
        )
        records[rec.peer_id] = rec
    return CachedView(MappingProxyType(records), float(doc["as_of"]))


def registry_from_json(doc: "dict | str") -> Registry:
    view = view_from_json(doc)
    return Registry(view.records.values(), now=view.as_of)


def record_heartbeat(registry: Registry, peer: str, now: float) -> Registry:
    rec = registry[peer]
    registry.records[peer] = replace(rec, last_heartbeat=float(now))
    return registry


def is_live(record: PeerRecord, now: float, t_ttl: float) -> bool:
    return now - record.last_heartbeat <= t_ttl


def update_latency(record: PeerRecord, observed: float, beta: float) -> PeerRecord:
    """EWMA step: new = (1 - beta) * old + beta * observed."""
    if observed < 0.0:
        raise ValueError(f"negative latency observation {observed}")
    if not 0.0 < beta < 1.0:
        raise ValueError(f"beta must lie in (0, 1), got {beta}")
    est = (1.0 - beta) * record.latency_est + beta * observed
    return replace(record, latency_est=est)


def observe_latency(registry: Registry, peer: str, observed: float, beta: float) -> Registry:
    registry.records[peer] = update_latency(registry[peer], observed, beta)
    return registry


def _clamp(x: float) -> float:
    return 0.0 if x < 0.0 else 1.0 if x > 1.0 else x


def apply_feedback(
    registry: Registry,
    executed_chain: Iterable[str],
    success: bool,
    culprit: Optional[str],
    params: LedgerParams,
) -> Registry:
    """Targeted trust update for one execution attempt.

    On success every peer of the executed chain gains ``delta_r_plus``; on
    failure only the culprit loses ``delta_r_minus``. Trust is clamped to
    [0, 1].
    """
    chain = list(executed_chain)
    for p in chain:
        if p not in registry:
            raise UnknownPeerError(p)
    if success:
        for p in dict.fromkeys(chain):
            rec = registry.records[p]
            registry.records[p] = replace(rec, trust=_clamp(rec.trust + params.delta_r_plus))
        return registry
    if culprit is None:
        raise FeedbackContractError("failure report without a culprit")
    rec = registry[culprit]
    registry.records[culprit] = replace(rec, trust=_clamp(rec.trust - params.delta_r_minus))
    return registry


def sync_view(registry: Registry, view: CachedView, now: float, t_gossip: float) -> CachedView:
    """Refresh the cached view once a full gossip period has elapsed."""
    if now < view.as_of:
        raise ValueError(f"sync time {now} precedes view time {view.as_of}")
    if now - view.as_of >= t_gossip:
        return CachedView(MappingProxyType(dict(registry.records)), float(now))
    return view
