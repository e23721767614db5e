"""Small builders shared by the test modules."""

from types import MappingProxyType

from chainroute.ledger import CachedView, PeerRecord
from chainroute.router import Algorithm, RouteQuery
from chainroute.topology import ModelSpec, RiskBudget


def rec(pid, start, end, trust=1.0, lat=0.25, hb=0.0):
    return PeerRecord(pid, start, end, trust, lat, hb)


def view_of(*records, as_of=0.0):
    return CachedView(MappingProxyType({r.peer_id: r for r in records}), as_of)


def query(algo=Algorithm.GTRAC, L=4, min_shard=1, tau=0.96, epsilon=None, **kw):
    model = ModelSpec(L, min_shard)
    budget = RiskBudget.from_epsilon(epsilon, model.k_max) if epsilon is not None else RiskBudget.from_tau(tau, model.k_max)
    return RouteQuery(model, budget, algo, **kw)
