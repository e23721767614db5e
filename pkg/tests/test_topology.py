import math
import random

import pytest
from hypothesis import given, strategies as st

from chainroute.topology import (
    SINK,
    SOURCE,
    ModelSpec,
    RiskBudget,
    build_dag,
    k_max,
    parse_edge_list,
    prune,
    trust_floor,
)
from helpers import rec, view_of


@pytest.mark.parametrize("L,lmin,k", [(36, 3, 12), (36, 9, 4), (10, 3, 4)])
def test_k_max(L, lmin, k):
    assert k_max(ModelSpec(L, lmin)) == k


def test_model_validation():
    with pytest.raises(ValueError):
        ModelSpec(10, 11)
    with pytest.raises(ValueError):
        ModelSpec(0, 1)


def test_trust_floor_examples():
    assert trust_floor(0.3, 1) == pytest.approx(0.7, abs=1e-12)
    eps = 1 - 0.96**12
    assert trust_floor(eps, 12) == pytest.approx(0.96, abs=1e-12)
    assert trust_floor(0.3873, 12) == pytest.approx(0.96, abs=1e-4)
    assert trust_floor(0.2, 4) == pytest.approx(0.94574, abs=1e-5)
    assert trust_floor(0.2, 4) == pytest.approx(math.exp(math.log(0.8) / 4), abs=1e-12)


@pytest.mark.parametrize("eps", [0.0, 1.0, -0.1, 1.5])
def test_trust_floor_rejects(eps):
    with pytest.raises(ValueError):
        trust_floor(eps, 4)


def test_budget_parameterisations():
    b = RiskBudget.from_tau(0.96, 12)
    assert b.epsilon == pytest.approx(1 - 0.96**12)
    assert RiskBudget.from_epsilon(b.epsilon, 12).tau == pytest.approx(0.96)


def test_prune_examples():
    v = view_of(rec("a", 1, 1, 0.99), rec("b", 1, 1, 0.95), rec("c", 1, 1, 0.97), rec("d", 1, 1, 0.96))
    assert [r.peer_id for r in prune(v, 0.0, 0.96, 15.0)] == ["a", "c", "d"]
    stale = view_of(rec("a", 1, 1, 1.0, hb=0.0))
    assert prune(stale, 20.0, 0.96, 15.0) == []
    assert len(prune(v, 0.0, 0.0, 15.0)) == 4


def test_dag_single_chain():
    dag = build_dag([rec("A", 1, 2), rec("B", 3, 4)], ModelSpec(4, 1), lambda r: 1.0)
    assert set((u, v) for u, v, _ in dag.edges()) == {(SOURCE, "A"), ("A", "B"), ("B", SINK)}
    assert list(dag.full_paths()) == [("A", "B")]


def test_dag_gap():
    dag = build_dag([rec("A", 1, 2), rec("C", 4, 4)], ModelSpec(4, 1), lambda r: 1.0)
    assert list(dag.full_paths()) == []


def test_dag_two_by_two():
    peers = [rec("A1", 1, 2), rec("A2", 1, 2), rec("B1", 3, 4), rec("B2", 3, 4)]
    dag = build_dag(peers, ModelSpec(4, 1), lambda r: 1.0)
    assert len(list(dag.full_paths())) == 4
    assert dag.edge_count() == 2 + 4 + 2


def test_dag_edge_costs_and_export():
    dag = build_dag([rec("A", 1, 2, lat=0.5), rec("B", 3, 4, lat=0.7)], ModelSpec(4, 1), lambda r: r.latency_est)
    edges = parse_edge_list(dag.to_edge_list())
    assert edges == [(SOURCE, "A", 0.5), ("A", "B", 0.7), ("B", SINK, 0.0)]


def test_build_dag_rejects():
    with pytest.raises(ValueError):
        build_dag([rec("A", 1, 5)], ModelSpec(4, 1), lambda r: 1.0)
    with pytest.raises(ValueError):
        build_dag([rec("A", 1, 4)], ModelSpec(4, 1), lambda r: -1.0)


def test_full_paths_limit_and_check():
    peers = [rec(f"{s}{i}", s, s) for s in range(1, 5) for i in range(3)]
    dag = build_dag(peers, ModelSpec(4, 1), lambda r: 1.0)
    assert len(list(dag.full_paths())) == 81
    assert len(list(dag.full_paths(limit=5))) == 5
    calls = []
    list(dag.full_paths(check=lambda: calls.append(1)))
    assert len(calls) == 0  # fewer steps than the check interval


@st.composite
def shard_sets(draw):
    L = draw(st.integers(2, 12))
    peers = []
    for i in range(draw(st.integers(1, 14))):
        a = draw(st.integers(1, L))
        b = draw(st.integers(a, L))
        peers.append(rec(f"p{i:02d}", a, b))
    return L, peers


@given(shard_sets())
def test_paths_cover_layers_exactly(case):
    L, peers = case
    dag = build_dag(peers, ModelSpec(L, 1), lambda r: 1.0)
    assert dag.topological_order() is not None
    for path in dag.full_paths(limit=500):
        covered = [layer for p in path for layer in range(dag.peers[p].layer_start, dag.peers[p].layer_end + 1)]
        assert covered == list(range(1, L + 1))


@given(shard_sets())
def test_paths_match_brute_enumeration(case):
    L, peers = case
    dag = build_dag(peers, ModelSpec(L, 1), lambda r: 1.0)
    # independent count by dynamic programming over layer boundaries
    ways = {0: 1}
    for b in range(0, L):
        for p in peers:
            if p.layer_start == b + 1:
                ways[p.layer_end] = ways.get(p.layer_end, 0) + ways.get(b, 0)
    assert len(list(dag.full_paths())) == ways.get(L, 0)


@given(st.lists(st.floats(0.9, 1.0), min_size=1, max_size=12))
def test_lemma_bound(trusts):
    tau = min(trusts)
    assert math.prod(trusts) >= tau ** len(trusts) - 1e-15


@given(st.floats(0.01, 0.99), st.integers(1, 12), st.integers(1, 12))
def test_floor_guarantee(eps, kmax, k):
    k = min(k, kmax)
    tau = trust_floor(eps, kmax)
    assert tau**k >= (1 - eps) - 1e-12
