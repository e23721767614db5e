"""Trust floor, candidate pruning and the contiguous-layer routing DAG."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Mapping, Optional

from .ledger import CachedView, PeerRecord, is_live

SOURCE = "<source>"
SINK = "<sink>"


@dataclass(frozen=True)
class ModelSpec:
    total_layers: int = 36
    min_shard: int = 3

    def __post_init__(self):
        if self.total_layers < 1:
            raise ValueError("total_layers must be positive")
        if not 1 <= self.min_shard <= self.total_layers:
            raise ValueError("need 1 <= min_shard <= total_layers")

    @property
    def k_max(self) -> int:
        return k_max(self)


def k_max(model: ModelSpec) -> int:
    """Longest possible chain: ceil(L / l_min)."""
    return -(-model.total_layers // model.min_shard)


def trust_floor(epsilon: float, k_max: int) -> float:
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    return (1.0 - epsilon) ** (1.0 / k_max)


@dataclass(frozen=True)
class RiskBudget:
    """Risk tolerance ``epsilon`` and the per-peer trust floor ``tau``.

    Build with :meth:`from_epsilon` (tau derived) or :meth:`from_tau`
    (explicit tau wins; epsilon is recomputed as ``1 - tau**k_max``).
    """

    epsilon: float
    tau: float

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError(f"tau must lie in (0, 1], got {self.tau}")

    @classmethod
    def from_epsilon(cls, epsilon: float, k_max: int) -> "RiskBudget":
        return cls(epsilon=epsilon, tau=trust_floor(epsilon, k_max))

    @classmethod
    def from_tau(cls, tau: float, k_max: int) -> "RiskBudget":
        eps = 1.0 - tau**k_max
        # tau == 1 leaves no risk budget at all; keep epsilon inside (0, 1).
        return cls(epsilon=max(eps, 1e-15), tau=tau)

    @property
    def reliability_target(self) -> float:
        return 1.0 - self.epsilon


def prune(view: CachedView, now: float, tau: float, t_ttl: float) -> list[PeerRecord]:
    """Live peers with trust >= tau, in peer-id order."""
    return [
        r
        for _, r in sorted(view.records.items())
        if r.trust >= tau and is_live(r, now, t_ttl)
    ]


class OverlayDag:
    """Routing DAG over admitted peers.

    A peer ``q`` follows ``p`` iff ``p.layer_end + 1 == q.layer_start``, so
    the edge set is stored implicitly by grouping peers on ``layer_start``.
    Node costs sit on incoming edges; edges into SINK are free.
    """

    def __init__(self, peers: Mapping[str, PeerRecord], cost: Mapping[str, float], total_layers: int):
        self.peers = dict(peers)
        self.cost = dict(cost)
        self.total_layers = total_layers
        by_start: dict[int, list[str]] = {}
        for pid in sorted(self.peers):
            by_start.setdefault(self.peers[pid].layer_start, []).append(pid)
        self.by_start = by_start

    def __len__(self):
        return len(self.peers)

    def successors(self, node: str) -> list[str]:
        if node == SOURCE:
            return self.by_start.get(1, [])
        if node == SINK:
            return []
        end = self.peers[node].layer_end
        if end == self.total_layers:
            return [SINK]
        return self.by_start.get(end + 1, [])

    def edge_cost(self, u: str, v: str) -> float:
        return 0.0 if v == SINK else self.cost[v]

    def edges(self) -> Iterator[tuple[str, str, float]]:
        for u in [SOURCE, *sorted(self.peers)]:
            for v in self.successors(u):
                yield u, v, self.edge_cost(u, v)

    def edge_count(self) -> int:
        return sum(len(self.successors(u)) for u in [SOURCE, *self.peers])

    def topological_order(self) -> Optional[list[str]]:
        """Kahn's algorithm; None if a cycle exists (never, by construction)."""
        nodes = [SOURCE, *sorted(self.peers), SINK]
        indeg = {n: 0 for n in nodes}
        for _, v, _ in self.edges():
            indeg[v] += 1
        queue = [n for n in nodes if indeg[n] == 0]
        order = []
        while queue:
            n = queue.pop()
            order.append(n)
            for v in self.successors(n):
                indeg[v] -= 1
                if indeg[v] == 0:
                    queue.append(v)
        return order if len(order) == len(nodes) else None

    def full_paths(self, limit: Optional[int] = None, check: Optional[Callable[[], None]] = None) -> Iterator[tuple[str, ...]]:
        """Depth-first enumeration of SOURCE->SINK chains, successors in id order.

        ``check`` is called periodically so callers can abort long enumerations.
        """
        count = steps = 0
        stack: list[tuple[str, ...]] = [()]
        while stack:
            steps += 1
            if check is not None and steps % 2048 == 0:
                check()
            path = stack.pop()
            succ = self.successors(path[-1] if path else SOURCE)
            if succ and succ[0] == SINK:
                yield path
                count += 1
                if limit is not None and count >= limit:
                    return
                continue
            for v in reversed(succ):
                stack.append(path + (v,))

    def to_edge_list(self) -> str:
        return "".join(f"{u} {v} {c!r}\n" for u, v, c in self.edges())


def build_dag(
    admitted: Iterable[PeerRecord],
    model: ModelSpec,
    cost_of: Callable[[PeerRecord], float],
) -> OverlayDag:
    peers: dict[str, PeerRecord] = {}
    cost: dict[str, float] = {}
    for r in admitted:
        if r.layer_end > model.total_layers:
            raise ValueError(f"peer {r.peer_id!r} exceeds model depth {model.total_layers}")
        c = cost_of(r)
        if not c >= 0.0 or math.isnan(c):
            raise ValueError(f"peer {r.peer_id!r}: cost must be non-negative, got {c}")
        peers[r.peer_id] = r
        cost[r.peer_id] = c
    return OverlayDag(peers, cost, model.total_layers)


def parse_edge_list(text: str) -> list[tuple[str, str, float]]:
    out = []
    for line in text.splitlines():
        if line.strip():
            u, v, c = line.split()
            out.append((u, v, float(c)))
    return out
