"""Request-level simulator for pipelined inference over unreliable peers.

Each request is routed on the seeker's cached view, executed token by token
along the chosen chain, repaired at most once on a hop failure, and reported
back to the registry (trust feedback plus latency observations). All
randomness comes from string-keyed substreams of the run seed, so outcomes
depend only on (scenario, algorithm, seed).
"""

from __future__ import annotations

import enum
import json
import math
import random
import time
from dataclasses import asdict, dataclass, field
from typing import TYPE_CHECKING, Iterable, Mapping, Optional, Sequence

from .ledger import (
    CachedView,
    LedgerParams,
    PeerRecord,
    Registry,
    apply_feedback,
    observe_latency,
    sync_view,
)
from .router import TRUST_AWARE, Algorithm, RouteQuery, find_replacement, repair_floor, route

if TYPE_CHECKING:
    from .scenario import ScenarioConfig


class ProfileKind(str, enum.Enum):
    HONEY_POT = "honey_pot"
    TURTLE = "turtle"
    GOLDEN = "golden"
    CUSTOM = "custom"


@dataclass(frozen=True)
class PeerProfile:
    kind: ProfileKind
    net_delay: float
    p_fail: float
    compute_per_layer: float = 0.06
    jitter_max: float = 0.02
    # Fixed per-hop cost (activation serialization and forwarding).
    hop_overhead: float = 0.0
    # Compute slowdown per already-emitted token (context growth); off by default.
    context_growth: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.p_fail <= 1.0:
            raise ValueError(f"p_fail must lie in [0, 1], got {self.p_fail}")
        if min(self.net_delay, self.compute_per_layer, self.jitter_max, self.hop_overhead, self.context_growth) < 0.0:
            raise ValueError("profile delays must be non-negative")


@dataclass(frozen=True)
class RequestSpec:
    request_id: int
    n_tokens: int
    submitted_at: float = 0.0

    def __post_init__(self):
        if self.n_tokens < 1:
            raise ValueError("n_tokens must be >= 1")


class RepairScope(str, enum.Enum):
    """Which routers get the one-shot replacement retry after a hop failure."""

    TRUST_AWARE = "trust_aware"
    ALL = "all"


@dataclass(frozen=True)
class SimParams:
    t_timeout: float = 25.0
    repair_enabled: bool = True
    ledger: LedgerParams = field(default_factory=LedgerParams)
    seed: int = 0
    repair_scope: RepairScope = RepairScope.TRUST_AWARE

    def repairs(self, algorithm: Algorithm) -> bool:
        if not self.repair_enabled:
            return False
        return self.repair_scope is RepairScope.ALL or algorithm in TRUST_AWARE

    def __post_init__(self):
        if self.t_timeout <= 0:
            raise ValueError("t_timeout must be positive")


@dataclass
class RequestOutcome:
    request_id: int
    algo: str
    n_tokens: int
    success: bool
    token_latencies: list[float]
    executed_chain: list[str]
    planned_chain: list[str]
    repair_used: bool
    culprit: Optional[str]
    penalized: list[str]
    chain_execs: int
    started_at: float
    elapsed: float
    # (peer_id, trust, latency_est) of each planned peer as seen by the router.
    decision: list[tuple[str, float, float]]
    selection_time: float = 0.0

    @property
    def aborted(self) -> bool:
        return not self.planned_chain

    def to_json(self, include_timing: bool = False) -> dict:
        d = asdict(self)
        d["decision"] = [list(x) for x in self.decision]
        if not include_timing:
            del d["selection_time"]
        return d


@dataclass
class ChainResult:
    success: bool
    failed_peer: Optional[str]
    token_latencies: list[float]
    # hop_latencies[t][k]: latency of hop k while emitting token t (partial for a stalled token)
    hop_latencies: list[list[float]]
    elapsed: float

    def observations(self, chain: Sequence[str]) -> dict[str, float]:
        """Mean completed-hop latency per peer, as reported to the Anchor."""
        sums: dict[str, list[float]] = {}
        for row in self.hop_latencies:
            for k, lat in enumerate(row):
                sums.setdefault(chain[k], []).append(lat)
        return {p: math.fsum(v) / len(v) for p, v in sums.items()}


def sample_peer_failure(seed: int, peer: str, request_id: int, p_fail: float) -> bool:
    """Bernoulli(p_fail) draw that depends only on (seed, peer, request_id)."""
    if p_fail <= 0.0:
        return False
    if p_fail >= 1.0:
        return True
    return random.Random(f"fail:{seed}:{peer}:{request_id}").random() < p_fail


def hop_latency(peer: PeerRecord, profile: PeerProfile, rng: random.Random, token_index: int = 0) -> float:
    compute = profile.compute_per_layer * peer.n_layers
    if profile.context_growth:
        compute *= 1.0 + profile.context_growth * token_index
    base = compute + profile.net_delay + profile.hop_overhead
    if profile.jitter_max > 0.0:
        return base + rng.uniform(0.0, profile.jitter_max)
    return base


def execute_chain(
    chain: Sequence[str],
    request: RequestSpec,
    failures: Mapping[str, bool],
    params: SimParams,
    profiles: Mapping[str, PeerProfile],
    peers: Mapping[str, PeerRecord],
    rng: random.Random,
) -> ChainResult:
    """Push ``n_tokens`` tokens through ``chain``.

    The first flagged peer (lowest stage) stalls the first token that reaches
    it; that attempt costs ``t_timeout`` and returns the peer as culprit.
    """
    tokens: list[float] = []
    hops: list[list[float]] = []
    elapsed = 0.0
    for t in range(request.n_tokens):
        row: list[float] = []
        for p in chain:
            if failures.get(p, False):
                hops.append(row)
                return ChainResult(False, p, tokens, hops, elapsed + math.fsum(row) + params.t_timeout)
            row.append(hop_latency(peers[p], profiles[p], rng, t))
        hops.append(row)
        tok = math.fsum(row)
        tokens.append(tok)
        elapsed += tok
    return ChainResult(True, None, tokens, hops, elapsed)


def _report(registry: Registry, chain: Sequence[str], result: ChainResult, beta: float) -> None:
    for p, obs in result.observations(chain).items():
        observe_latency(registry, p, obs, beta)


def execute_request(
    registry: Registry,
    view: CachedView,
    query: RouteQuery,
    request: RequestSpec,
    params: SimParams,
    profiles: Mapping[str, PeerProfile],
) -> RequestOutcome:
    """Route, execute, repair at most once, and feed the result back.

    Routing reads only ``view``; feedback is written to ``registry``.
    """
    now = request.submitted_at
    seed = params.seed
    rid = request.request_id
    lp = params.ledger
    naive_rng = random.Random(f"naive:{seed}:{rid}")
    t0 = time.perf_counter()
    plan = route(view, now, query, rng=naive_rng)
    selection_time = time.perf_counter() - t0

    if plan is None:
        return RequestOutcome(
            rid, query.algorithm.value, request.n_tokens, False, [], [], [], False, None, [], 0,
            now, 0.0, [], selection_time,
        )

    decision = [(p, view[p].trust, view[p].latency_est) for p in plan.peers]
    chain = list(plan.peers)
    flags = {p: sample_peer_failure(seed, p, rid, profiles[p].p_fail) for p in chain}
    peers = registry.records

    res = execute_chain(chain, request, flags, params, profiles, peers, random.Random(f"lat:{seed}:{rid}:0"))
    execs = 1
    elapsed = res.elapsed
    _report(registry, chain, res, lp.beta)
    penalized: list[str] = []
    culprit = None
    repair_used = False
    if not res.success:
        culprit = res.failed_peer
        apply_feedback(registry, chain, False, culprit, lp)
        penalized.append(culprit)
        if params.repairs(query.algorithm):
            repl = find_replacement(view, now, culprit, repair_floor(query), query.t_ttl)
            if repl is not None:
                repair_used = True
                chain[chain.index(culprit)] = repl
                flags[repl] = sample_peer_failure(seed, repl, rid, profiles[repl].p_fail)
                res = execute_chain(chain, request, flags, params, profiles, peers, random.Random(f"lat:{seed}:{rid}:1"))
                execs = 2
                elapsed += res.elapsed
                _report(registry, chain, res, lp.beta)
                if not res.success:
                    apply_feedback(registry, chain, False, res.failed_peer, lp)
                    penalized.append(res.failed_peer)
    if res.success:
        apply_feedback(registry, chain, True, None, lp)

    return RequestOutcome(
        request_id=rid,
        algo=query.algorithm.value,
        n_tokens=request.n_tokens,
        success=res.success,
        token_latencies=list(res.token_latencies) if res.success else [],
        executed_chain=chain,
        planned_chain=list(plan.peers),
        repair_used=repair_used,
        culprit=culprit,
        penalized=penalized,
        chain_execs=execs,
        started_at=now,
        elapsed=elapsed,
        decision=decision,
        selection_time=selection_time,
    )


def emit_heartbeats(registry: Registry, now: float, t_hb: float) -> None:
    """Every peer beats on the t_hb grid; stamp the latest beat at or before ``now``."""
    beat = math.floor(now / t_hb) * t_hb
    for pid, rec in registry.records.items():
        if rec.last_heartbeat < beat:
            registry.records[pid] = PeerRecord(
                rec.peer_id, rec.layer_start, rec.layer_end, rec.trust, rec.latency_est, beat, rec.profile_ref
            )


def run_experiment(
    scenario: "ScenarioConfig",
    algorithm: "Algorithm | str",
    n_requests: int,
    tokens: int,
    seed: int,
) -> list[RequestOutcome]:
    """Run ``n_requests`` sequential requests on a freshly built population.

    Trust and latency state start from the configured priors on every call,
    so results for different algorithms never share learned state.
    """
    from .scenario import build_scenario

    if n_requests < 0:
        raise ValueError("n_requests must be non-negative")
    algorithm = Algorithm.parse(algorithm)
    registry, profiles = build_scenario(scenario, seed)
    lp = scenario.ledger
    params = SimParams(
        t_timeout=scenario.sim.t_timeout,
        repair_enabled=scenario.sim.repair_enabled,
        ledger=lp,
        seed=seed,
        repair_scope=scenario.sim.repair_scope,
    )
    query = scenario.query(algorithm)
    view = registry.snapshot()
    now = 0.0
    outcomes = []
    for i in range(n_requests):
        emit_heartbeats(registry, now, lp.t_hb)
        registry.advance(now)
        view = sync_view(registry, view, now, lp.t_gossip)
        out = execute_request(registry, view, query, RequestSpec(i, tokens, now), params, profiles)
        outcomes.append(out)
        now += out.elapsed
    return outcomes


def dump_outcomes(outcomes: Iterable[RequestOutcome], include_timing: bool = False) -> str:
    return "".join(json.dumps(o.to_json(include_timing)) + "\n" for o in outcomes)
