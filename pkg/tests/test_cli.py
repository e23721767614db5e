import json

import pytest

import chainroute.router as router
from chainroute import cli


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_run_is_reproducible(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("run", "--algo", "gtrac", "--requests", 1, "--seed", 7, "--tokens", "5", "--out", a) == 0
    assert run("run", "--algo", "gtrac", "--requests", 1, "--seed", 7, "--tokens", "5", "--out", b) == 0
    for name in ("ssr.csv", "latency.csv", "hops.csv", "landscape.csv", "outcomes/gtrac_5.jsonl"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    man = json.loads((a / "manifest.json").read_text())
    assert man["seed"] == 7 and len(man["config_sha256"]) == 64 and "python" in man["versions"]


def test_manifest_rerun_is_byte_identical(tmp_path):
    a, c = tmp_path / "a", tmp_path / "c"
    assert run("run", "--algo", "sp,naive", "--requests", 3, "--tokens", "4,6", "--out", a) == 0
    assert run("run", "--manifest", a / "manifest.json", "--out", c) == 0
    for name in ("ssr.csv", "latency.csv", "hops.csv", "landscape.csv"):
        assert (a / name).read_bytes() == (c / name).read_bytes()


def test_missing_config_leaves_nothing(tmp_path, capsys):
    out = tmp_path / "o"
    assert run("run", "--config", tmp_path / "none.json", "--out", out) != 0
    assert not out.exists()
    assert list(tmp_path.iterdir()) == []


def test_bad_config_names_key(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"sim": {"t_timeout": -1}}))
    assert run("run", "--config", cfg, "--out", tmp_path / "o") == 2
    assert "sim.t_timeout" in capsys.readouterr().err
    assert json.loads(cfg.read_text()) == {"sim": {"t_timeout": -1}}


def test_seed_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.SEED_ENV, "99")
    assert run("run", "--algo", "gtrac", "--requests", 1, "--tokens", "2", "--out", tmp_path / "o") == 0
    assert json.loads((tmp_path / "o" / "manifest.json").read_text())["seed"] == 99
    monkeypatch.delenv(cli.SEED_ENV)
    assert cli.default_seed() == cli.DEFAULT_SEED == 1729


def test_bench_single_trial(tmp_path):
    assert run("bench", "--algo", "gtrac,sp,mr,larac", "--sizes", "3,40", "--trials", 1, "--out", tmp_path) == 0
    lines = (tmp_path / "overhead.csv").read_text().splitlines()
    assert len(lines) == 1 + 8
    assert lines[1].startswith("gtrac,3,") and lines[1].endswith(",1,0,1")


def test_oracle_check_passes(capsys):
    assert run("oracle-check", "--instances", 100) == 0
    assert "100/100" in capsys.readouterr().out


def test_oracle_check_zero_instances(capsys):
    assert run("oracle-check", "--instances", 0) == 0
    assert "warning" in capsys.readouterr().err


def test_oracle_check_catches_unpruned_router(monkeypatch, capsys):
    real = router.prune
    monkeypatch.setattr(router, "prune", lambda view, now, tau, ttl: real(view, now, 0.0, ttl))
    assert run("oracle-check", "--instances", 100) == 1
    out = capsys.readouterr().out
    assert "counterexample" in out
    doc = json.loads(next(line for line in out.splitlines() if line.startswith("{")))
    assert "instance" in doc and doc["instance"]["view"]["peers"]


def test_export(tmp_path):
    assert run("export", "--out", tmp_path) == 0
    reg = json.loads((tmp_path / "registry.json").read_text())
    assert len(reg["peers"]) == 336
    edges = (tmp_path / "dag.txt").read_text().splitlines()
    assert edges and all(len(e.split()) == 3 for e in edges)


def test_unknown_algo_rejected():
    with pytest.raises(SystemExit):
        run("run", "--algo", "dijkstra")
