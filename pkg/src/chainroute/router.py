"""Chain selection over the cached view.

Every router returns a :class:`ChainPlan`, or ``None`` when no live
contiguous chain exists (the "abort" case). Ties are broken the same way
everywhere: objective value, then hop count, then the ordered tuple of
peer ids, so a given (view, query, seed) always yields the same plan.
"""

from __future__ import annotations

import enum
import heapq
import math
import random
import time
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .ledger import CachedView, PeerRecord, is_live
from .topology import SINK, ModelSpec, OverlayDag, RiskBudget, build_dag, prune

# Slack for float round-off when comparing a chain's reliability to 1 - epsilon.
FEASIBILITY_TOL = 1e-12


class Algorithm(str, enum.Enum):
    GTRAC = "gtrac"
    SP = "sp"
    MR = "mr"
    NAIVE = "naive"
    LARAC = "larac"
    ORACLE = "oracle"

    @classmethod
    def parse(cls, name: "str | Algorithm") -> "Algorithm":
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).lower().replace("-", ""))
        except ValueError:
            raise ValueError(f"unknown algorithm {name!r}") from None


# The five strategies compared in experiments (the oracle is test-only).
COMPARED = (Algorithm.GTRAC, Algorithm.SP, Algorithm.MR, Algorithm.NAIVE, Algorithm.LARAC)

# Strategies that consult trust when choosing a chain.
TRUST_AWARE = frozenset({Algorithm.GTRAC, Algorithm.MR, Algorithm.LARAC, Algorithm.ORACLE})


class SelectionTimeout(Exception):
    """Raised when a router overruns its wall-clock deadline."""


class OracleTooLarge(Exception):
    """The exhaustive oracle refused an instance with too many chains."""


@dataclass(frozen=True)
class LaracParams:
    max_iters: int = 50
    lambda_tol: float = 1e-6


@dataclass(frozen=True)
class RouteQuery:
    model: ModelSpec
    budget: RiskBudget
    algorithm: Algorithm = Algorithm.GTRAC
    t_timeout: float = 25.0
    naive_cap: Optional[int] = 1000
    larac: LaracParams = field(default_factory=LaracParams)
    t_ttl: float = 15.0

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm.parse(self.algorithm))
        if self.t_timeout <= 0:
            raise ValueError("t_timeout must be positive")
        if self.naive_cap is not None and self.naive_cap < 1:
            raise ValueError("naive_cap must be >= 1 (or None for unbounded)")


@dataclass(frozen=True)
class ChainPlan:
    algo: str
    peers: tuple[str, ...]
    predicted_cost: float
    reliability: float

    @property
    def hop_count(self) -> int:
        return len(self.peers)

    def to_json(self) -> dict:
        return {
            "algo": self.algo,
            "peers": list(self.peers),
            "predicted_cost": self.predicted_cost,
            "reliability": self.reliability,
            "hops": self.hop_count,
        }


def effective_cost(record: PeerRecord, t_timeout: float) -> float:
    """Expected hop time: latency estimate plus the failure-weighted timeout."""
    return record.latency_est + (1.0 - record.trust) * t_timeout


def chain_reliability(plan: "ChainPlan | Sequence[str]", view: CachedView) -> float:
    peers = plan.peers if isinstance(plan, ChainPlan) else plan
    rel = 1.0
    for p in peers:
        rel *= view[p].trust
    return rel


def chain_risk(plan: "ChainPlan | Sequence[str]", view: CachedView) -> float:
    return 1.0 - chain_reliability(plan, view)


def shortest_chain(
    dag: OverlayDag,
    weight: Optional[Mapping[str, float]] = None,
    secondary: Optional[Mapping[str, float]] = None,
) -> Optional[tuple[str, ...]]:
    """Dijkstra from SOURCE to SINK over node-weighted edges.

    Labels are ``(weight, secondary, hops, path)`` compared lexicographically.
    All peers starting at layer ``b + 1`` share the same predecessor set (every
    peer ending at ``b``), so once the best peer ending at ``b`` is settled the
    rest of that boundary's out-edges cannot improve anything and are skipped.
    """
    w = dag.cost if weight is None else weight
    last = dag.total_layers
    peers = dag.peers
    by_start = dag.by_start
    heap: list = []
    best: dict[str, tuple] = {}
    for v in by_start.get(1, ()):
        label = (w[v], secondary[v] if secondary is not None else 0.0, 1, (v,))
        best[v] = label
        heap.append(label)
    heapq.heapify(heap)
    settled: set[str] = set()
    expanded: set[int] = set()
    while heap:
        cost, sec, hops, path = heapq.heappop(heap)
        u = path[-1]
        if u in settled:
            continue
        settled.add(u)
        end = peers[u].layer_end
        if end == last:
            return path
        if end in expanded:
            continue
        expanded.add(end)
        for v in by_start.get(end + 1, ()):
            if v in settled:
                continue
            label = (
                cost + w[v],
                sec + secondary[v] if secondary is not None else 0.0,
                hops + 1,
                path + (v,),
            )
            old = best.get(v)
            if old is None or label < old:
                best[v] = label
                heapq.heappush(heap, label)
    return None


def _plan(algo: Algorithm, path: Sequence[str], records: Mapping[str, PeerRecord], cost: Mapping[str, float]) -> ChainPlan:
    total = 0.0
    rel = 1.0
    for p in path:
        total += cost[p]
        rel *= records[p].trust
    return ChainPlan(algo.value, tuple(path), total, rel)


def _live(view: CachedView, now: float, query: RouteQuery) -> list[PeerRecord]:
    return prune(view, now, 0.0, query.t_ttl)


def route_gtrac(view: CachedView, now: float, query: RouteQuery) -> Optional[ChainPlan]:
    admitted = prune(view, now, query.budget.tau, query.t_ttl)
    T = query.t_timeout
    dag = build_dag(admitted, query.model, lambda r: effective_cost(r, T))
    path = shortest_chain(dag)
    if path is None:
        return None
    return _plan(Algorithm.GTRAC, path, dag.peers, dag.cost)


def route_sp(view: CachedView, now: float, query: RouteQuery) -> Optional[ChainPlan]:
    dag = build_dag(_live(view, now, query), query.model, lambda r: r.latency_est)
    path = shortest_chain(dag)
    if path is None:
        return None
    return _plan(Algorithm.SP, path, dag.peers, dag.cost)


def route_mr(view: CachedView, now: float, query: RouteQuery) -> Optional[ChainPlan]:
    live = [r for r in _live(view, now, query) if r.trust > 0.0]
    dag = build_dag(live, query.model, lambda r: -math.log(r.trust))
    lat = {p: r.latency_est for p, r in dag.peers.items()}
    path = shortest_chain(dag, secondary=lat)
    if path is None:
        return None
    return _plan(Algorithm.MR, path, dag.peers, lat)


def route_naive(
    view: CachedView,
    now: float,
    query: RouteQuery,
    rng: random.Random,
    deadline: Optional[float] = None,
) -> Optional[ChainPlan]:
    """Enumerate chains depth-first (up to ``naive_cap``) and pick one uniformly.

    ``deadline`` is a ``time.perf_counter()`` value; overrunning it raises
    :class:`SelectionTimeout`.
    """
    dag = build_dag(_live(view, now, query), query.model, lambda r: r.latency_est)
    check = None
    if deadline is not None:
        def check():
            if time.perf_counter() > deadline:
                raise SelectionTimeout("naive enumeration exceeded its deadline")
    chains = list(dag.full_paths(limit=query.naive_cap, check=check))
    if not chains:
        return None
    path = chains[rng.randrange(len(chains))]
    return _plan(Algorithm.NAIVE, path, dag.peers, dag.cost)


def route_larac(view: CachedView, now: float, query: RouteQuery) -> Optional[ChainPlan]:
    """Lagrangian relaxation: minimise sum(latency) s.t. sum(-ln trust) <= -ln(1 - eps).

    The multiplier is located by bisection on ``latency + lam * (-ln trust)``;
    the cheapest feasible chain seen along the way is returned.
    """
    live = [r for r in _live(view, now, query) if r.trust > 0.0]
    dag = build_dag(live, query.model, lambda r: r.latency_est)
    c = dag.cost
    d = {p: -math.log(r.trust) for p, r in dag.peers.items()}
    bound = -math.log(query.budget.reliability_target) + FEASIBILITY_TOL

    def delay(path):
        return sum(d[p] for p in path)

    def price(path):
        return sum(c[p] for p in path)

    p_c = shortest_chain(dag, c)
    if p_c is None:
        return None
    if delay(p_c) <= bound:
        return _plan(Algorithm.LARAC, p_c, dag.peers, c)
    p_d = shortest_chain(dag, d, secondary=c)
    if delay(p_d) > bound:
        return None

    def key(path):
        return (price(path), len(path), path)

    best = p_d
    params = query.larac
    iters = 0
    lo = 0.0
    gap = delay(p_c) - delay(p_d)
    hi = max((price(p_d) - price(p_c)) / gap, params.lambda_tol) if gap > 0 else 1.0
    while iters < params.max_iters:
        iters += 1
        r = shortest_chain(dag, {p: c[p] + hi * d[p] for p in c})
        if delay(r) <= bound:
            if key(r) < key(best):
                best = r
            break
        lo, hi = hi, hi * 2.0
    while hi - lo > params.lambda_tol and iters < params.max_iters:
        iters += 1
        mid = 0.5 * (lo + hi)
        r = shortest_chain(dag, {p: c[p] + mid * d[p] for p in c})
        if delay(r) <= bound:
            hi = mid
            if key(r) < key(best):
                best = r
        else:
            lo = mid
    return _plan(Algorithm.LARAC, best, dag.peers, c)


def brute_force_oracle(
    view: CachedView,
    now: float,
    query: RouteQuery,
    max_chains: int = 1_000_000,
) -> Optional[ChainPlan]:
    """Exact risk-bounded optimum by enumerating every live contiguous chain."""
    T = query.t_timeout
    dag = build_dag(_live(view, now, query), query.model, lambda r: effective_cost(r, T))
    target = query.budget.reliability_target - FEASIBILITY_TOL
    best = None
    best_key = None
    count = 0
    for path in dag.full_paths():
        count += 1
        if count > max_chains:
            raise OracleTooLarge(f"more than {max_chains} chains")
        rel = 1.0
        cost = 0.0
        for p in path:
            rel *= dag.peers[p].trust
            cost += dag.cost[p]
        if rel < target:
            continue
        k = (cost, len(path), path)
        if best_key is None or k < best_key:
            best, best_key = path, k
    if best is None:
        return None
    return _plan(Algorithm.ORACLE, best, dag.peers, dag.cost)


def find_replacement(view: CachedView, now: float, failed: str, tau: float, t_ttl: float = 15.0) -> Optional[str]:
    """Fastest trusted live peer serving exactly the failed peer's layers."""
    layers = view[failed].layers
    best = None
    for pid, r in view.records.items():
        if pid == failed or r.layers != layers or r.trust < tau or not is_live(r, now, t_ttl):
            continue
        if best is None or (r.latency_est, pid) < (best.latency_est, best.peer_id):
            best = r
    return None if best is None else best.peer_id


def repair_floor(query: RouteQuery) -> float:
    """Trust floor for repair candidates: tau for trust-aware routers, liveness only otherwise."""
    return query.budget.tau if query.algorithm in TRUST_AWARE else 0.0


def route(
    view: CachedView,
    now: float,
    query: RouteQuery,
    rng: Optional[random.Random] = None,
    deadline: Optional[float] = None,
) -> Optional[ChainPlan]:
    algo = query.algorithm
    if algo is Algorithm.GTRAC:
        return route_gtrac(view, now, query)
    if algo is Algorithm.SP:
        return route_sp(view, now, query)
    if algo is Algorithm.MR:
        return route_mr(view, now, query)
    if algo is Algorithm.NAIVE:
        if rng is None:
            raise ValueError("naive routing needs a seeded generator")
        return route_naive(view, now, query, rng, deadline)
    if algo is Algorithm.LARAC:
        return route_larac(view, now, query)
    return brute_force_oracle(view, now, query)
