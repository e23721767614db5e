"""Command-line entry point: ``chainroute {run,bench,oracle-check,export}``."""

from __future__ import annotations

import argparse
import json
import os
import platform
import shutil
import sys
import tempfile
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .checks import Instance, check_instance, random_instance
from .ledger import dumps
from .metrics import bench_selection, hops_csv, landscape_csv, latency_csv, overhead_csv, ssr_csv
from .router import COMPARED, Algorithm, effective_cost
from .scenario import ConfigError, ScenarioConfig, build_scenario, config_from_dict, load_config
from .sim import dump_outcomes, run_experiment
from .topology import build_dag, prune

DEFAULT_SEED = 1729
DEFAULT_SIZES = (50, 100, 200, 500, 1000)
SEED_ENV = "CHAINROUTE_SEED"


class CliError(Exception):
    pass


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return DEFAULT_SEED
    try:
        return int(raw)
    except ValueError:
        raise CliError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or any(v < 1 for v in vals):
        raise argparse.ArgumentTypeError("values must be positive integers")
    return vals


def _algos(text: str) -> list[Algorithm]:
    if text == "all":
        return list(COMPARED)
    try:
        algos = [Algorithm.parse(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None
    if Algorithm.ORACLE in algos:
        raise argparse.ArgumentTypeError("the oracle is not a routing strategy; use oracle-check")
    return algos


def _load(path: Optional[str]) -> ScenarioConfig:
    if path is None:
        return ScenarioConfig()
    p = Path(path)
    if not p.is_file():
        raise CliError(f"config file not found: {p}")
    return load_config(p)


class _Staging:
    """Collect outputs in a temp dir next to ``out``; move them in only on success."""

    def __init__(self, out: Path):
        self.out = out

    def __enter__(self) -> Path:
        parent = self.out.resolve().parent
        parent.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(prefix=".chainroute-", dir=parent))
        return self.tmp

    def __exit__(self, exc_type, exc, tb):
        try:
            if exc_type is None:
                self.out.mkdir(parents=True, exist_ok=True)
                for item in sorted(self.tmp.rglob("*")):
                    rel = item.relative_to(self.tmp)
                    if item.is_dir():
                        (self.out / rel).mkdir(parents=True, exist_ok=True)
                    else:
                        os.replace(item, self.out / rel)
        finally:
            shutil.rmtree(self.tmp, ignore_errors=True)
        return False


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _versions() -> dict:
    return {"chainroute": __version__, "python": platform.python_version()}


def cmd_run(args) -> int:
    if args.manifest:
        man = json.loads(Path(args.manifest).read_text())
        config = config_from_dict(man["config"])
        seed, algos, tokens, requests = man["seed"], [Algorithm.parse(a) for a in man["algorithms"]], man["tokens"], man["requests"]
    else:
        config = _load(args.config)
        seed = args.seed if args.seed is not None else default_seed()
        algos, tokens, requests = args.algo, args.tokens, args.requests
    if requests < 1:
        raise CliError("--requests must be >= 1")
    runs = {}
    with _Staging(Path(args.out)) as tmp:
        for algo in algos:
            for tok in tokens:
                outs = run_experiment(config, algo, requests, tok, seed)
                runs[(algo.value, tok)] = outs
                _write(tmp / "outcomes" / f"{algo.value}_{tok}.jsonl", dump_outcomes(outs))
        _write(tmp / "ssr.csv", ssr_csv(runs))
        _write(tmp / "latency.csv", latency_csv(runs))
        _write(tmp / "hops.csv", hops_csv(runs))
        _write(tmp / "landscape.csv", landscape_csv(runs))
        manifest = {
            "command": "run",
            "config": config.to_json(),
            "config_sha256": config.digest(),
            "seed": seed,
            "algorithms": [a.value for a in algos],
            "tokens": list(tokens),
            "requests": requests,
            "versions": _versions(),
        }
        _write(tmp / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    for (algo, tok), outs in runs.items():
        k = sum(o.success for o in outs)
        print(f"{algo:>6} tokens={tok:<3} ssr={k}/{len(outs)}")
    return 0


def cmd_bench(args) -> int:
    seed = args.seed if args.seed is not None else default_seed()
    if args.trials < 1:
        raise CliError("--trials must be >= 1")
    algos = args.algo
    with _Staging(Path(args.out)) as tmp:
        rows = bench_selection(algos, args.sizes, args.trials, seed, timeout=args.timeout)
        _write(tmp / "overhead.csv", overhead_csv(rows))
        manifest = {
            "command": "bench",
            "seed": seed,
            "algorithms": [a.value for a in algos],
            "sizes": list(args.sizes),
            "trials": args.trials,
            "timeout": args.timeout,
            "versions": _versions(),
        }
        _write(tmp / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    for r in rows:
        note = f" censored={r.censored}" if r.censored else ""
        note += f" infeasible={r.infeasible}" if r.infeasible else ""
        print(f"{r.algorithm:>6} N={r.network_size:<5} median={r.median_decision * 1e3:.3f} ms{note}")
    return 0


def cmd_oracle_check(args) -> int:
    seed = args.seed if args.seed is not None else default_seed()
    if args.instances < 0:
        raise CliError("--instances must be >= 0")
    if args.instances == 0:
        print("warning: 0 instances requested; nothing checked", file=sys.stderr)
        return 0
    failures = 0
    for i in range(args.instances):
        inst = random_instance(seed * 1_000_003 + i, args.max_peers)
        res = check_instance(inst)
        if not res.ok:
            failures += 1
            print(f"counterexample #{i}: {res.reason}")
            print(json.dumps({"instance": inst.to_json(),
                              "gtrac": res.gtrac.to_json() if res.gtrac else None,
                              "oracle": res.oracle.to_json() if res.oracle else None}, sort_keys=True))
    print(f"oracle-check: {args.instances - failures}/{args.instances} instances agree")
    return 0 if failures == 0 else 1


def cmd_export(args) -> int:
    config = _load(args.config)
    seed = args.seed if args.seed is not None else default_seed()
    registry, _ = build_scenario(config, seed)
    view = registry.snapshot()
    admitted = prune(view, view.as_of, config.budget.tau, config.ledger.t_ttl)
    dag = build_dag(admitted, config.model, lambda r: effective_cost(r, config.sim.t_timeout))
    with _Staging(Path(args.out)) as tmp:
        _write(tmp / "registry.json", dumps(registry) + "\n")
        _write(tmp / "dag.txt", dag.to_edge_list())
    print(f"exported {len(registry)} peers, {dag.edge_count()} edges")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chainroute", description="Risk-bounded chain routing simulator.")
    ap.add_argument("--version", action="version", version=f"chainroute {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, algo_default="all"):
        p.add_argument("--config", help="scenario JSON (default: built-in 336-peer scenario)")
        p.add_argument("--seed", type=int, help=f"run seed (default {DEFAULT_SEED}, or ${SEED_ENV})")
        p.add_argument("--algo", type=_algos, default=_algos(algo_default), help="comma list of gtrac,sp,mr,naive,larac or 'all'")
        p.add_argument("--out", default="out", help="output directory")

    p = sub.add_parser("run", help="simulate requests and write outcome logs and metric CSVs")
    common(p)
    p.add_argument("--tokens", type=_int_list, default=[10, 20, 50], help="comma list of sequence lengths")
    p.add_argument("--requests", type=int, default=100)
    p.add_argument("--manifest", help="re-run exactly from a previous manifest.json")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="time chain selection against network size")
    common(p)
    p.add_argument("--sizes", type=_int_list, default=list(DEFAULT_SIZES))
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--timeout", type=float, default=2.0, help="per-trial censoring limit in seconds")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("oracle-check", help="compare G-TRAC with the exhaustive oracle on random small instances")
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--max-peers", type=int, default=12)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("export", help="write the initial registry and the pruned DAG edge list")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_export)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (CliError, OSError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
