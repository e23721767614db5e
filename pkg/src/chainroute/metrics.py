"""Evaluation metrics and the selection-overhead benchmark.

All aggregations are pure functions over lists of :class:`RequestOutcome`.
Percentiles use the nearest-rank rule. CSV writers emit fixed headers (see
``*_HEADER`` constants) so downstream plotting scripts can rely on them.
"""

from __future__ import annotations

import csv
import io
import math
import random
import statistics
import time
from collections import Counter
from dataclasses import dataclass
from types import MappingProxyType
from typing import Iterable, Mapping, Optional, Sequence

from .ledger import CachedView, PeerRecord
from .router import Algorithm, RouteQuery, SelectionTimeout, route
from .sim import RequestOutcome
from .topology import ModelSpec, RiskBudget

Z95 = 1.959964


@dataclass(frozen=True)
class SsrResult:
    successes: int
    n: int
    rate: float
    ci_low: float
    ci_high: float


@dataclass(frozen=True)
class LatencyStats:
    count: int
    mean: float
    p50: float
    p99: float
    max: float

    @property
    def empty(self) -> bool:
        return self.count == 0


EMPTY_LATENCY = LatencyStats(0, math.nan, math.nan, math.nan, math.nan)


@dataclass(frozen=True)
class OverheadRow:
    algorithm: str
    network_size: int
    median_decision: float
    mean_decision: float
    trials: int = 0
    censored: int = 0
    infeasible: int = 0


def wilson_ci(successes: int, n: int, z: float = Z95) -> tuple[float, float]:
    if n < 1:
        raise ValueError("wilson_ci needs n >= 1")
    if not 0 <= successes <= n:
        raise ValueError(f"need 0 <= successes <= n, got {successes}/{n}")
    if z <= 0:
        raise ValueError("z must be positive")
    p = successes / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (p + z2 / (2 * n)) / denom
    half = z * math.sqrt(p * (1.0 - p) / n + z2 / (4 * n * n)) / denom
    # At p = 0 or 1 one bound is exactly 0 or 1; avoid round-off there.
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == n else min(1.0, center + half)
    return lo, hi


def ssr(outcomes: Sequence[RequestOutcome], z: float = Z95) -> SsrResult:
    if not outcomes:
        raise ValueError("ssr needs at least one outcome")
    n = len(outcomes)
    k = sum(1 for o in outcomes if o.success)
    lo, hi = wilson_ci(k, n, z)
    return SsrResult(k, n, k / n, lo, hi)


def nearest_rank(sorted_values: Sequence[float], q: float) -> float:
    """Smallest value with at least ``q`` percent of the pool at or below it."""
    if not sorted_values:
        raise ValueError("empty pool")
    if not 0.0 < q <= 100.0:
        raise ValueError("q must lie in (0, 100]")
    rank = math.ceil(q / 100.0 * len(sorted_values))
    return sorted_values[max(rank, 1) - 1]


def token_pool(outcomes: Iterable[RequestOutcome]) -> list[float]:
    return [t for o in outcomes if o.success for t in o.token_latencies]


def latency_stats(outcomes: Iterable[RequestOutcome]) -> LatencyStats:
    pool = sorted(token_pool(outcomes))
    if not pool:
        return EMPTY_LATENCY
    return LatencyStats(
        count=len(pool),
        mean=math.fsum(pool) / len(pool),
        p50=nearest_rank(pool, 50),
        p99=nearest_rank(pool, 99),
        max=pool[-1],
    )


def hop_histogram(outcomes: Iterable[RequestOutcome]) -> dict[int, int]:
    counts = Counter(len(o.executed_chain) for o in outcomes if o.planned_chain)
    return dict(sorted(counts.items()))


def median_hops(hist: Mapping[int, int]) -> float:
    values = [h for h, c in sorted(hist.items()) for _ in range(c)]
    return statistics.median(values) if values else math.nan


@dataclass(frozen=True)
class LandscapeRow:
    request_id: int
    peer_id: str
    trust: float
    latency_est: float
    algorithm: str


def selection_landscape(
    outcomes: Iterable[RequestOutcome],
    snapshots: Optional[Mapping[int, CachedView]] = None,
) -> list[LandscapeRow]:
    """One row per (request, planned peer) with decision-time trust and latency.

    ``snapshots`` maps request_id to the view the router saw; when absent the
    values recorded in each outcome's ``decision`` field are used.
    """
    rows = []
    for o in outcomes:
        if snapshots is not None and o.request_id in snapshots:
            view = snapshots[o.request_id]
            items = [(p, view[p].trust, view[p].latency_est) for p in o.planned_chain]
        else:
            items = o.decision
        for p, trust, lat in items:
            rows.append(LandscapeRow(o.request_id, p, trust, lat, o.algo))
    return rows


# Selection-overhead benchmark.


def bench_topology(n: int, seed: int, model: ModelSpec = ModelSpec(), shard_sizes=(9, 6, 3)) -> CachedView:
    """Random N-peer overlay resembling a learned registry.

    Peers are dealt round-robin over every stage of every shard plan, so any
    N >= (stages of the coarsest plan) contains a full chain. A third of the
    peers are fast but poorly trusted, the rest reliable with a spread of
    trust and latency.
    """
    if n < 1:
        raise ValueError("network size must be positive")
    from .scenario import make_partition

    stages = [st for s in shard_sizes for st in make_partition(model, s)]
    rng = random.Random(f"bench:{seed}:{n}")
    records = {}
    width = max(3, len(str(n - 1)))
    for i in range(n):
        start, end = stages[i % len(stages)]
        layers = end - start + 1
        if rng.random() < 1.0 / 3.0:
            trust = rng.uniform(0.5, 0.9)
            lat = layers * 0.06 + rng.uniform(0.0, 0.02)
        else:
            trust = rng.uniform(0.9, 1.0)
            lat = layers * 0.06 + rng.uniform(0.02, 0.3)
        pid = f"b{i:0{width}d}"
        records[pid] = PeerRecord(pid, start, end, trust, lat, 0.0)
    return CachedView(MappingProxyType(records), 0.0)


def time_selection(
    view: CachedView,
    query: RouteQuery,
    rng: random.Random,
    timeout: float,
) -> tuple[float, str]:
    """Wall-clock one routing call; returns (seconds, status)."""
    t0 = time.perf_counter()
    try:
        plan = route(view, 0.0, query, rng=rng, deadline=t0 + timeout)
    except SelectionTimeout:
        return timeout, "censored"
    dt = time.perf_counter() - t0
    if dt > timeout:
        return timeout, "censored"
    return dt, "ok" if plan is not None else "infeasible"


def bench_selection(
    algorithms: Iterable["Algorithm | str"],
    sizes: Sequence[int],
    trials: int,
    seed: int,
    timeout: float = 2.0,
    model: ModelSpec = ModelSpec(),
    budget: Optional[RiskBudget] = None,
) -> list[OverheadRow]:
    """Median and mean decision time per (algorithm, N) over ``trials`` topologies.

    Timing covers pruning, DAG construction and search. Naive runs unbounded
    (no enumeration cap); a trial that overruns ``timeout`` is censored and
    counted at ``timeout``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if budget is None:
        budget = RiskBudget.from_tau(0.96, model.k_max)
    algos = [Algorithm.parse(a) for a in algorithms]
    rows = []
    for n in sizes:
        views = [bench_topology(n, seed * 100_003 + t, model) for t in range(trials)]
        for algo in algos:
            query = RouteQuery(model=model, budget=budget, algorithm=algo, naive_cap=None)
            times = []
            censored = infeasible = 0
            for t, view in enumerate(views):
                rng = random.Random(f"bench-naive:{seed}:{n}:{t}")
                dt, status = time_selection(view, query, rng, timeout)
                times.append(dt)
                censored += status == "censored"
                infeasible += status == "infeasible"
            rows.append(
                OverheadRow(
                    algo.value, n, statistics.median(times), math.fsum(times) / len(times),
                    trials, censored, infeasible,
                )
            )
    return rows


# CSV output.

SSR_HEADER = ["algo", "tokens", "rate", "ci_low", "ci_high", "n"]
LATENCY_HEADER = ["algo", "tokens", "mean", "p50", "p99"]
HOPS_HEADER = ["algo", "tokens", "hops", "count"]
LANDSCAPE_HEADER = ["algo", "tokens", "request_id", "peer_id", "trust", "latency_est"]
OVERHEAD_HEADER = ["algorithm", "network_size", "median_decision", "mean_decision", "trials", "censored", "infeasible"]


def _csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(x) if isinstance(x, float) else x for x in r])
    return buf.getvalue()


Runs = Mapping[tuple[str, int], Sequence[RequestOutcome]]


def ssr_csv(runs: Runs) -> str:
    rows = []
    for (algo, tok), outs in runs.items():
        s = ssr(outs)
        rows.append((algo, tok, s.rate, s.ci_low, s.ci_high, s.n))
    return _csv(SSR_HEADER, rows)


def latency_csv(runs: Runs) -> str:
    rows = []
    for (algo, tok), outs in runs.items():
        st = latency_stats(outs)
        rows.append((algo, tok, st.mean, st.p50, st.p99))
    return _csv(LATENCY_HEADER, rows)


def hops_csv(runs: Runs) -> str:
    rows = [
        (algo, tok, h, c)
        for (algo, tok), outs in runs.items()
        for h, c in hop_histogram(outs).items()
    ]
    return _csv(HOPS_HEADER, rows)


def landscape_csv(runs: Runs) -> str:
    rows = [
        (algo, tok, r.request_id, r.peer_id, r.trust, r.latency_est)
        for (algo, tok), outs in runs.items()
        for r in selection_landscape(outs)
    ]
    return _csv(LANDSCAPE_HEADER, rows)


def overhead_csv(rows: Iterable[OverheadRow]) -> str:
    return _csv(
        OVERHEAD_HEADER,
        [
            (r.algorithm, r.network_size, r.median_decision, r.mean_decision, r.trials, r.censored, r.infeasible)
            for r in rows
        ],
    )
