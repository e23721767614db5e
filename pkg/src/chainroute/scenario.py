"""Testbed scenarios: shard plans, peer populations and run parameters.

The default scenario is the 336-peer desk-scale stand-in for the physical
testbed: a 36-layer model deployed with 9-, 6- and 3-layer shard plans, each
stage replicated across Honey-Pot, Turtle and Golden peers.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping, Optional

from .ledger import LedgerParams, PeerRecord, Registry
from .router import Algorithm, LaracParams, RouteQuery
from .sim import PeerProfile, ProfileKind, RepairScope, SimParams
from .topology import ModelSpec, RiskBudget


class ConfigError(ValueError):
    """Invalid scenario configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class ProfileRange:
    delay_min: float
    delay_max: float
    p_fail_min: float
    p_fail_max: float
    # Prior trust the Anchor assigns at start-up; None falls back to ledger.trust_init.
    trust_min: Optional[float] = None
    trust_max: Optional[float] = None

    def validate(self, key: str) -> None:
        if not 0.0 <= self.delay_min <= self.delay_max:
            raise ConfigError(f"{key}.delay_min", "need 0 <= delay_min <= delay_max")
        for name in ("p_fail_min", "p_fail_max"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{key}.{name}", f"probability {v} outside [0, 1]")
        if self.p_fail_min > self.p_fail_max:
            raise ConfigError(f"{key}.p_fail_min", "p_fail_min exceeds p_fail_max")
        if (self.trust_min is None) != (self.trust_max is None):
            raise ConfigError(f"{key}.trust_min", "set both trust_min and trust_max, or neither")
        if self.trust_min is not None:
            if not 0.0 <= self.trust_min <= self.trust_max <= 1.0:
                raise ConfigError(f"{key}.trust_min", "need 0 <= trust_min <= trust_max <= 1")

    def draw_trust(self, rng: random.Random, default: float) -> float:
        if self.trust_min is None:
            return default
        return rng.uniform(self.trust_min, self.trust_max)


DEFAULT_RANGES: dict[ProfileKind, ProfileRange] = {
    # Start-up reputation: honey pots sit below the trust floor, reliable
    # peers spread over [0.96, 1] so that trust still has to be earned.
    ProfileKind.HONEY_POT: ProfileRange(0.0008, 0.0012, 0.20, 0.35, 0.65, 0.80),
    ProfileKind.TURTLE: ProfileRange(0.150, 0.300, 0.001, 0.001, 0.96, 1.0),
    ProfileKind.GOLDEN: ProfileRange(0.020, 0.040, 0.0, 0.0, 0.96, 1.0),
}

# Peers per stage, per shard plan. 4*30 + 6*18 + 12*9 = 336.
DEFAULT_COUNTS: dict[int, dict[ProfileKind, int]] = {
    9: {ProfileKind.HONEY_POT: 20, ProfileKind.TURTLE: 5, ProfileKind.GOLDEN: 5},
    6: {ProfileKind.HONEY_POT: 12, ProfileKind.TURTLE: 3, ProfileKind.GOLDEN: 3},
    3: {ProfileKind.HONEY_POT: 5, ProfileKind.TURTLE: 2, ProfileKind.GOLDEN: 2},
}

DEFAULT_TAU = 0.96


@dataclass(frozen=True)
class ScenarioConfig:
    model: ModelSpec = field(default_factory=ModelSpec)
    shard_sizes: tuple[int, ...] = (9, 6, 3)
    profile_counts: Mapping[int, Mapping[ProfileKind, int]] = field(default_factory=lambda: DEFAULT_COUNTS)
    profile_ranges: Mapping[ProfileKind, ProfileRange] = field(default_factory=lambda: DEFAULT_RANGES)
    compute_per_layer: float = 0.06
    jitter_max: float = 0.02
    hop_overhead: float = 0.2
    context_growth: float = 0.0
    ledger: LedgerParams = field(default_factory=LedgerParams)
    sim: SimParams = field(default_factory=SimParams)
    budget: Optional[RiskBudget] = None
    naive_cap: int = 1000
    larac: LaracParams = field(default_factory=LaracParams)

    def __post_init__(self):
        if self.budget is None:
            object.__setattr__(self, "budget", RiskBudget.from_tau(DEFAULT_TAU, self.model.k_max))
        if self.sim.ledger != self.ledger:
            object.__setattr__(self, "sim", replace(self.sim, ledger=self.ledger))
        self.validate()

    def validate(self) -> None:
        L = self.model.total_layers
        if not self.shard_sizes:
            raise ConfigError("shards", "at least one shard plan is required")
        total = 0
        for s in self.shard_sizes:
            if not 1 <= s <= L:
                raise ConfigError("shards", f"shard size {s} outside [1, {L}]")
            if s < self.model.min_shard:
                raise ConfigError("shards", f"shard size {s} below model.min_shard={self.model.min_shard}")
            counts = self.profile_counts.get(s)
            if counts is None:
                raise ConfigError(f"profiles.counts.{s}", "no peer counts for this shard plan")
            for kind, n in counts.items():
                if n < 0:
                    raise ConfigError(f"profiles.counts.{s}.{kind.value}", "count must be >= 0")
                if n and kind not in self.profile_ranges:
                    raise ConfigError(f"profiles.ranges.{kind.value}", "no range for a kind in use")
                total += n * len(make_partition(self.model, s))
        if total <= 0:
            raise ConfigError("profiles.counts", "scenario has no peers")
        for kind, rng in self.profile_ranges.items():
            rng.validate(f"profiles.ranges.{kind.value}")
        if self.compute_per_layer < 0:
            raise ConfigError("profiles.compute_per_layer", "must be non-negative")
        if self.jitter_max < 0:
            raise ConfigError("profiles.jitter_max", "must be non-negative")
        if self.hop_overhead < 0:
            raise ConfigError("profiles.hop_overhead", "must be non-negative")
        if self.context_growth < 0:
            raise ConfigError("profiles.context_growth", "must be non-negative")

    @property
    def n_peers(self) -> int:
        return sum(
            n * len(make_partition(self.model, s))
            for s in self.shard_sizes
            for n in self.profile_counts[s].values()
        )

    def query(self, algorithm: "Algorithm | str") -> RouteQuery:
        return RouteQuery(
            model=self.model,
            budget=self.budget,
            algorithm=Algorithm.parse(algorithm),
            t_timeout=self.sim.t_timeout,
            naive_cap=self.naive_cap,
            larac=self.larac,
            t_ttl=self.ledger.t_ttl,
        )

    def to_json(self) -> dict:
        return {
            "model": {"total_layers": self.model.total_layers, "min_shard": self.model.min_shard},
            "shards": list(self.shard_sizes),
            "profiles": {
                "counts": {
                    str(s): {k.value: n for k, n in self.profile_counts[s].items()} for s in self.shard_sizes
                },
                "ranges": {
                    k.value: {f.name: getattr(r, f.name) for f in fields(r)} for k, r in self.profile_ranges.items()
                },
                "compute_per_layer": self.compute_per_layer,
                "jitter_max": self.jitter_max,
                "hop_overhead": self.hop_overhead,
                "context_growth": self.context_growth,
            },
            "ledger": {f.name: getattr(self.ledger, f.name) for f in fields(self.ledger)},
            "sim": {
                "t_timeout": self.sim.t_timeout,
                "repair_enabled": self.sim.repair_enabled,
                "repair_scope": self.sim.repair_scope.value,
                "naive_cap": self.naive_cap,
                "larac_max_iters": self.larac.max_iters,
                "larac_lambda_tol": self.larac.lambda_tol,
            },
            "budget": {"tau": self.budget.tau, "epsilon": self.budget.epsilon},
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def make_partition(model: ModelSpec, shard_size: int) -> list[tuple[int, int]]:
    """Contiguous (start, end) shards covering 1..L; the last one may be short."""
    L = model.total_layers
    if shard_size < 1:
        raise ValueError("shard_size must be >= 1")
    if shard_size > L:
        raise ValueError(f"shard_size {shard_size} exceeds model depth {L}")
    return [(s, min(s + shard_size - 1, L)) for s in range(1, L + 1, shard_size)]


def build_scenario(config: ScenarioConfig, seed: int) -> tuple[Registry, dict[str, PeerProfile]]:
    """Instantiate the peer population.

    Per-peer delay and failure probability are drawn uniformly from the
    profile's range. Peer ids are handed out in a seeded random order so that
    id-based tie-breaking carries no information about a peer's profile.
    """
    rng = random.Random(f"scenario:{seed}")
    specs = []
    for s in config.shard_sizes:
        for start, end in make_partition(config.model, s):
            for kind in sorted(config.profile_counts[s], key=lambda k: k.value):
                r = config.profile_ranges.get(kind)
                for _ in range(config.profile_counts[s][kind]):
                    delay = rng.uniform(r.delay_min, r.delay_max)
                    p_fail = rng.uniform(r.p_fail_min, r.p_fail_max)
                    trust = r.draw_trust(rng, config.ledger.trust_init)
                    specs.append((start, end, kind, delay, p_fail, trust))
    rng.shuffle(specs)
    width = max(3, len(str(len(specs) - 1)))
    lp = config.ledger
    registry = Registry()
    profiles: dict[str, PeerProfile] = {}
    for i, (start, end, kind, delay, p_fail, trust) in enumerate(specs):
        pid = f"p{i:0{width}d}"
        registry.add(PeerRecord(pid, start, end, trust, lp.latency_init, 0.0, kind.value))
        profiles[pid] = PeerProfile(kind, delay, p_fail, config.compute_per_layer, config.jitter_max, config.hop_overhead, config.context_growth)
    return registry, profiles


_TOP_KEYS = {"model", "shards", "profiles", "ledger", "sim", "budget"}


def _section(doc: Mapping, key: str) -> dict:
    val = doc.get(key, {})
    if not isinstance(val, dict):
        raise ConfigError(key, "expected an object")
    return val


def _num(section: Mapping, prefix: str, name: str, default, kind=float):
    if name not in section:
        return default
    v = section[name]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{prefix}.{name}", f"expected a number, got {v!r}")
    if kind is int:
        if int(v) != v:
            raise ConfigError(f"{prefix}.{name}", f"expected an integer, got {v!r}")
        return int(v)
    return float(v)


def _unknown(section: Mapping, prefix: str, allowed) -> None:
    for k in section:
        if k not in allowed:
            raise ConfigError(f"{prefix}.{k}" if prefix else k, "unknown key")


def _kind(name: str, key: str) -> ProfileKind:
    try:
        return ProfileKind(name)
    except ValueError:
        raise ConfigError(key, f"unknown profile kind {name!r}") from None


def config_from_dict(doc: Mapping[str, Any]) -> ScenarioConfig:
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "expected a JSON object")
    _unknown(doc, "", _TOP_KEYS)

    m = _section(doc, "model")
    _unknown(m, "model", {"total_layers", "min_shard"})
    try:
        model = ModelSpec(_num(m, "model", "total_layers", 36, int), _num(m, "model", "min_shard", 3, int))
    except ValueError as e:
        raise ConfigError("model", str(e)) from None

    shards = doc.get("shards", [9, 6, 3])
    if not isinstance(shards, list) or not all(isinstance(s, int) and not isinstance(s, bool) for s in shards):
        raise ConfigError("shards", "expected a list of integers")

    p = _section(doc, "profiles")
    _unknown(p, "profiles", {"counts", "ranges", "compute_per_layer", "jitter_max", "hop_overhead", "context_growth"})
    ranges = dict(DEFAULT_RANGES)
    for name, spec in (p.get("ranges") or {}).items():
        key = f"profiles.ranges.{name}"
        kind = _kind(name, key)
        if not isinstance(spec, dict):
            raise ConfigError(key, "expected an object")
        names = [f.name for f in fields(ProfileRange)]
        _unknown(spec, key, names)
        base = ranges.get(kind, ProfileRange(0.0, 0.0, 0.0, 0.0))
        vals = {}
        for n in names:
            if spec.get(n, 0.0) is None:
                vals[n] = None
            else:
                vals[n] = _num(spec, key, n, getattr(base, n))
        ranges[kind] = ProfileRange(**vals)
    counts: dict[int, dict[ProfileKind, int]] = {s: dict(DEFAULT_COUNTS.get(s, {})) for s in shards}
    raw_counts = p.get("counts")
    if raw_counts is not None:
        if not isinstance(raw_counts, dict):
            raise ConfigError("profiles.counts", "expected an object")
        per_plan = all(k.isdigit() for k in raw_counts)
        plans = raw_counts if per_plan else {str(s): raw_counts for s in shards}
        for s_key, per_kind in plans.items():
            key = f"profiles.counts.{s_key}"
            if not isinstance(per_kind, dict):
                raise ConfigError(key, "expected an object of kind -> count")
            s = int(s_key)
            counts[s] = {
                _kind(k, f"{key}.{k}"): _num(per_kind, key, k, 0, int) for k in per_kind
            }

    led = _section(doc, "ledger")
    names = [f.name for f in fields(LedgerParams)]
    _unknown(led, "ledger", names)
    ldefault = LedgerParams()
    try:
        ledger = LedgerParams(**{n: _num(led, "ledger", n, getattr(ldefault, n)) for n in names})
    except ValueError as e:
        raise ConfigError("ledger", str(e)) from None

    s = _section(doc, "sim")
    _unknown(s, "sim", {"t_timeout", "repair_enabled", "repair_scope", "naive_cap", "larac_max_iters", "larac_lambda_tol"})
    repair = s.get("repair_enabled", True)
    if not isinstance(repair, bool):
        raise ConfigError("sim.repair_enabled", "expected true/false")
    try:
        scope = RepairScope(s.get("repair_scope", RepairScope.TRUST_AWARE.value))
    except ValueError:
        raise ConfigError("sim.repair_scope", f"expected one of {[x.value for x in RepairScope]}") from None
    t_timeout = _num(s, "sim", "t_timeout", 25.0)
    if t_timeout <= 0:
        raise ConfigError("sim.t_timeout", "must be positive")
    naive_cap = _num(s, "sim", "naive_cap", 1000, int)
    if naive_cap < 1:
        raise ConfigError("sim.naive_cap", "must be >= 1")
    larac = LaracParams(
        _num(s, "sim", "larac_max_iters", 50, int), _num(s, "sim", "larac_lambda_tol", 1e-6)
    )

    b = _section(doc, "budget")
    _unknown(b, "budget", {"tau", "epsilon"})
    try:
        if "tau" in b:
            budget = RiskBudget.from_tau(_num(b, "budget", "tau", DEFAULT_TAU), model.k_max)
        elif "epsilon" in b:
            budget = RiskBudget.from_epsilon(_num(b, "budget", "epsilon", 0.0), model.k_max)
        else:
            budget = RiskBudget.from_tau(DEFAULT_TAU, model.k_max)
    except ValueError as e:
        raise ConfigError("budget", str(e)) from None

    return ScenarioConfig(
        model=model,
        shard_sizes=tuple(shards),
        profile_counts=counts,
        profile_ranges=ranges,
        compute_per_layer=_num(p, "profiles", "compute_per_layer", 0.06),
        jitter_max=_num(p, "profiles", "jitter_max", 0.02),
        hop_overhead=_num(p, "profiles", "hop_overhead", 0.2),
        context_growth=_num(p, "profiles", "context_growth", 0.0),
        ledger=ledger,
        sim=SimParams(t_timeout=t_timeout, repair_enabled=repair, ledger=ledger, repair_scope=scope),
        budget=budget,
        naive_cap=naive_cap,
        larac=larac,
    )


def load_config(path: "str | Path") -> ScenarioConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError("<file>", f"{path}: invalid JSON ({e})") from None
    return config_from_dict(doc)
