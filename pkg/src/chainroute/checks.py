"""Random small instances for comparing G-TRAC against the exhaustive oracle.

Trusts are drawn either at or above the trust floor or strictly below the
reliability target, never in between. In that regime no sub-floor peer can
appear in a feasible chain, so floor pruning loses nothing and G-TRAC must
match the oracle's optimum exactly.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from types import MappingProxyType
from typing import Callable, Optional

from .ledger import CachedView, PeerRecord, dumps, view_from_json
from .router import (
    FEASIBILITY_TOL,
    Algorithm,
    ChainPlan,
    RouteQuery,
    brute_force_oracle,
    chain_reliability,
    route_gtrac,
    route_larac,
)
from .topology import ModelSpec, RiskBudget

MAX_PEERS = 12


@dataclass(frozen=True)
class Instance:
    view: CachedView
    now: float
    query: RouteQuery

    def to_json(self) -> dict:
        return {
            "model": {"total_layers": self.query.model.total_layers, "min_shard": self.query.model.min_shard},
            "epsilon": self.query.budget.epsilon,
            "tau": self.query.budget.tau,
            "t_timeout": self.query.t_timeout,
            "t_ttl": self.query.t_ttl,
            "now": self.now,
            "view": json.loads(dumps(self.view)),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Instance":
        model = ModelSpec(**doc["model"])
        budget = RiskBudget(doc["epsilon"], doc["tau"])
        query = RouteQuery(model, budget, Algorithm.GTRAC, t_timeout=doc["t_timeout"], t_ttl=doc["t_ttl"])
        return cls(view_from_json(doc["view"]), doc["now"], query)


def _partition(rng: random.Random, total: int, stages: int, min_shard: int) -> list[tuple[int, int]]:
    """Split 1..total into ``stages`` contiguous pieces of at least ``min_shard`` layers."""
    slack = total - stages * min_shard
    cuts = sorted(rng.randint(0, slack) for _ in range(stages - 1))
    sizes = [b - a + min_shard for a, b in zip([0, *cuts], [*cuts, slack])]
    out, start = [], 1
    for s in sizes:
        out.append((start, start + s - 1))
        start += s
    return out


def random_instance(seed: int, max_peers: int = MAX_PEERS) -> Instance:
    rng = random.Random(f"oracle:{seed}")
    model = ModelSpec(total_layers=12, min_shard=3)
    budget = RiskBudget.from_epsilon(rng.uniform(0.05, 0.4), model.k_max)
    tau, target = budget.tau, budget.reliability_target
    now, t_ttl = 100.0, 15.0
    stages = set()
    for _ in range(rng.randint(1, 3)):
        stages.update(_partition(rng, model.total_layers, rng.randint(2, 4), model.min_shard))
    stages = sorted(stages)
    n_peers = rng.randint(len(stages), max(len(stages), max_peers))
    n_peers = min(n_peers, max_peers)
    assign = list(stages)[:n_peers] + [rng.choice(stages) for _ in range(n_peers - min(n_peers, len(stages)))]
    records = {}
    for i, (start, end) in enumerate(assign):
        if rng.random() < 0.7:
            trust = rng.uniform(tau, 1.0)
        else:
            trust = rng.uniform(0.0, target) * (1.0 - 1e-9)
        lat = rng.uniform(0.05, 1.0)
        hb = now - (rng.uniform(t_ttl + 1.0, 3 * t_ttl) if rng.random() < 0.1 else rng.uniform(0.0, t_ttl))
        pid = f"n{i:02d}"
        records[pid] = PeerRecord(pid, start, end, trust, lat, hb)
    query = RouteQuery(model, budget, Algorithm.GTRAC, t_timeout=rng.choice([5.0, 25.0]), t_ttl=t_ttl)
    return Instance(CachedView(MappingProxyType(records), now), now, query)


@dataclass
class CheckResult:
    ok: bool
    reason: str
    gtrac: Optional[ChainPlan]
    oracle: Optional[ChainPlan]
    larac: Optional[ChainPlan]


def check_instance(
    inst: Instance,
    gtrac: Callable = route_gtrac,
    oracle: Callable = brute_force_oracle,
    larac: Callable = route_larac,
) -> CheckResult:
    g = gtrac(inst.view, inst.now, inst.query)
    o = oracle(inst.view, inst.now, inst.query)
    lq = RouteQuery(inst.query.model, inst.query.budget, Algorithm.LARAC, t_timeout=inst.query.t_timeout, t_ttl=inst.query.t_ttl)
    lr = larac(inst.view, inst.now, lq)
    target = inst.query.budget.reliability_target - FEASIBILITY_TOL
    if (g is None) != (o is None):
        return CheckResult(False, "feasibility disagreement", g, o, lr)
    if g is not None and g.predicted_cost != o.predicted_cost:
        return CheckResult(False, f"cost {g.predicted_cost!r} != oracle {o.predicted_cost!r}", g, o, lr)
    if g is not None and chain_reliability(g, inst.view) < target:
        return CheckResult(False, "G-TRAC chain violates the risk budget", g, o, lr)
    if lr is not None and chain_reliability(lr, inst.view) < target:
        return CheckResult(False, "LARAC chain violates the risk budget", g, o, lr)
    return CheckResult(True, "ok", g, o, lr)
