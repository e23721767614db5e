import json
import statistics

import pytest

from chainroute.scenario import (
    DEFAULT_RANGES,
    ConfigError,
    ProfileRange,
    ScenarioConfig,
    build_scenario,
    config_from_dict,
    load_config,
    make_partition,
)
from chainroute.sim import ProfileKind, RepairScope
from chainroute.topology import ModelSpec, build_dag

H, T, G = ProfileKind.HONEY_POT, ProfileKind.TURTLE, ProfileKind.GOLDEN


def test_partitions():
    assert make_partition(ModelSpec(36, 3), 9) == [(1, 9), (10, 18), (19, 27), (28, 36)]
    assert len(make_partition(ModelSpec(36, 3), 3)) == 12
    assert make_partition(ModelSpec(10, 1), 4) == [(1, 4), (5, 8), (9, 10)]
    with pytest.raises(ValueError):
        make_partition(ModelSpec(10, 1), 11)


def test_default_population():
    cfg = ScenarioConfig()
    reg, profiles = build_scenario(cfg, 0)
    assert len(reg) == 336 == cfg.n_peers
    for pid, prof in profiles.items():
        r = cfg.profile_ranges[prof.kind]
        assert r.delay_min <= prof.net_delay <= r.delay_max
        assert r.p_fail_min <= prof.p_fail <= r.p_fail_max
        assert r.trust_min <= reg[pid].trust <= r.trust_max
        assert reg[pid].latency_est == 0.25
        assert reg[pid].profile_ref == prof.kind.value
    honey = [p for p in profiles.values() if p.kind is H]
    assert honey and all(0.20 <= p.p_fail <= 0.35 and abs(p.net_delay - 0.001) <= 0.0002 for p in honey)


def test_profile_ranges_match_profiles():
    assert DEFAULT_RANGES[T].p_fail_min == DEFAULT_RANGES[T].p_fail_max == 0.001
    assert (DEFAULT_RANGES[T].delay_min, DEFAULT_RANGES[T].delay_max) == (0.150, 0.300)
    assert (DEFAULT_RANGES[G].delay_min, DEFAULT_RANGES[G].delay_max, DEFAULT_RANGES[G].p_fail_max) == (0.020, 0.040, 0.0)


def test_deterministic_population():
    a = build_scenario(ScenarioConfig(), 5)
    b = build_scenario(ScenarioConfig(), 5)
    assert a[0].records == b[0].records and a[1] == b[1]
    assert build_scenario(ScenarioConfig(), 6)[1] != a[1]


def test_stage_coverage_each_plan():
    cfg = ScenarioConfig()
    reg, _ = build_scenario(cfg, 0)
    for s in cfg.shard_sizes:
        stages = make_partition(cfg.model, s)
        peers = [r for r in reg.records.values() if r.layers in stages]
        dag = build_dag(peers, cfg.model, lambda r: 0.0)
        assert next(iter(dag.full_paths(limit=1)), None) is not None


def test_replica_draws_independent():
    xs, ys = [], []
    for seed in range(200):
        _, prof = build_scenario(ScenarioConfig(), seed)
        honey = sorted((p for p in prof.values() if p.kind is H), key=lambda p: p.net_delay)
        xs.append(honey[0].p_fail)
        ys.append(honey[1].p_fail)
    assert abs(statistics.correlation(xs, ys)) < 0.2


def test_ids_carry_no_profile_order():
    _, prof = build_scenario(ScenarioConfig(), 0)
    first = [prof[p].kind for p in sorted(prof)[:40]]
    assert len(set(first)) > 1


def test_uniform_prior_fallback():
    ranges = {k: ProfileRange(r.delay_min, r.delay_max, r.p_fail_min, r.p_fail_max) for k, r in DEFAULT_RANGES.items()}
    reg, _ = build_scenario(ScenarioConfig(profile_ranges=ranges), 0)
    assert {r.trust for r in reg.records.values()} == {1.0}


def test_empty_config_gives_defaults(tmp_path):
    path = tmp_path / "c.json"
    path.write_text("{}")
    cfg = load_config(path)
    assert cfg.budget.tau == 0.96
    assert cfg.ledger.beta == 0.30 and cfg.sim.t_timeout == 25.0
    assert cfg.model.total_layers == 36 and cfg.n_peers == 336
    assert cfg.sim.repair_scope is RepairScope.TRUST_AWARE
    assert cfg.digest() == ScenarioConfig().digest()


def test_round_trip():
    cfg = ScenarioConfig()
    assert config_from_dict(json.loads(json.dumps(cfg.to_json()))).digest() == cfg.digest()


@pytest.mark.parametrize(
    "doc,key",
    [
        ({"profiles": {"ranges": {"honey_pot": {"p_fail_max": 1.5}}}}, "profiles.ranges.honey_pot.p_fail_max"),
        ({"profiles": {"ranges": {"golden": {"trust_min": 0.9, "trust_max": 0.8}}}}, "profiles.ranges.golden.trust_min"),
        ({"bogus": 1}, "bogus"),
        ({"sim": {"t_timeout": 0}}, "sim.t_timeout"),
        ({"sim": {"repair_scope": "some"}}, "sim.repair_scope"),
        ({"budget": {"epsilon": 2.0}}, "budget"),
        ({"shards": [2]}, "shards"),
        ({"profiles": {"counts": {"9": {"golden": -1}}}}, "profiles.counts.9.golden"),
        ({"profiles": {"counts": {"9": {"elf": 1}}}}, "profiles.counts.9.elf"),
    ],
)
def test_config_errors_name_the_key(doc, key):
    with pytest.raises(ConfigError) as e:
        config_from_dict(doc)
    assert e.value.key == key


def test_flat_counts_and_budget_forms():
    cfg = config_from_dict({"shards": [9], "profiles": {"counts": {"golden": 1}}, "budget": {"epsilon": 0.2}})
    assert cfg.n_peers == 4
    assert cfg.budget.tau == pytest.approx(0.8 ** (1 / 12))
    cfg = config_from_dict({"budget": {"tau": 0.9, "epsilon": 0.5}})
    assert cfg.budget.tau == 0.9 and cfg.budget.epsilon == pytest.approx(1 - 0.9**12)


def test_invalid_json(tmp_path):
    path = tmp_path / "c.json"
    path.write_text("{nope")
    with pytest.raises(ConfigError):
        load_config(path)
