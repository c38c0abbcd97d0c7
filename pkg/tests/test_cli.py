import csv
import subprocess
import sys

import pytest

from fogplace.cli import main
from fogplace.config import load_config
from fogplace.topology import read_topology

SMALL = ["--set", "n=30", "--set", "profiles=[0, 1]", "--set", "plan_count=4",
         "--set", "iterations=8"]


@pytest.fixture
def ini(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text("[topology]\ntopology = WS\nn = 30\n\n[workload]\nprofiles = [0, 1]\n\n"
                 "[strategy]\nplan_count = 4\niterations = 8\nhops = 3\n\n"
                 "[grid]\nstrategies = [\"epos\", \"first_fit\"]\ntopologies = [\"WS\"]\n"
                 "sizes = [30]\nhops = [1, \"inf\"]\ndistributions = [\"Rand\"]\nlambdas = [0, 1]\n")
    return p


def test_validate_prints_summary(ini, capsys):
    assert main(["validate", "--config", str(ini)]) == 0
    out = capsys.readouterr().out
    assert "config ok" in out and "topology=WS" in out
    assert "grid: 5 cells" in out


def test_validate_defaults_without_config(capsys):
    assert main(["validate"]) == 0
    # 12 families x (15 epos cells + first fit + cloud)
    assert "grid: 204 cells" in capsys.readouterr().out


def test_run_twice_is_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert main(["run", "--out", str(tmp_path / d), "--seed", "7", *SMALL]) == 0
    for name in ("metrics.csv", "summary.json", "iterations_round0.csv",
                 "figures/fig7_node_utilization.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_run_parallel_matches_serial(tmp_path):
    assert main(["run", "--out", str(tmp_path / "s"), *SMALL]) == 0
    assert main(["run", "--out", str(tmp_path / "p"), "--parallel", "2", *SMALL]) == 0
    assert (tmp_path / "s" / "metrics.csv").read_bytes() == (tmp_path / "p" / "metrics.csv").read_bytes()


def test_written_config_reproduces_run(tmp_path):
    assert main(["run", "--out", str(tmp_path / "a"), "--set", "strategy=first_fit", *SMALL]) == 0
    assert main(["run", "--out", str(tmp_path / "b"), "--config", str(tmp_path / "a" / "config.ini")]) == 0
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()


def test_override_wins_over_file(ini):
    cfg, _ = load_config(ini, ["topology.n=45", "hops=inf"], seed=3)
    assert cfg.n == 45 and cfg.hops == float("inf") and cfg.seed == 3 and cfg.topology == "WS"


def test_grid_with_empty_strategies_exits_1(tmp_path, capsys):
    assert main(["grid", "--out", str(tmp_path / "o"), "--set", "strategies=[]"]) == 1
    assert "empty strategy list" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


@pytest.mark.parametrize("argv", [["run", "--bogus"], ["frobnicate"], [],
                                  ["validate", "--set", "nosuchkey=1"],
                                  ["validate", "--set", "n"],
                                  ["validate", "--set", "lam=3"],
                                  ["validate", "--config", "/does/not/exist.ini"],
                                  ["run", "--parallel", "0", "--out", "x"]])
def test_usage_errors_exit_1(argv):
    assert main(argv) == 1


def test_refuses_non_empty_out_without_force(tmp_path):
    out = tmp_path / "o"
    out.mkdir()
    (out / "keep.txt").write_text("x")
    assert main(["gen-topology", "--out", str(out), "--set", "n=20"]) == 1
    assert main(["gen-topology", "--out", str(out), "--set", "n=20", "--force"]) == 0
    assert (out / "keep.txt").exists() and (out / "topology.edges").exists()


def test_missing_out_is_usage_error(monkeypatch):
    monkeypatch.delenv("FOGPLACE_OUT", raising=False)
    assert main(["gen-topology"]) == 1


def test_env_var_output_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("FOGPLACE_OUT", str(tmp_path / "env"))
    assert main(["gen-topology", "--set", "n=20"]) == 0
    assert (tmp_path / "env" / "nodes.csv").exists()


def test_gen_topology_round_trips(tmp_path):
    assert main(["gen-topology", "--out", str(tmp_path), "--set", "topology=ER", "--set", "n=50"]) == 0
    g = read_topology(tmp_path / "topology.edges", tmp_path / "nodes.csv")
    assert g.n == 50 and g.kind == "ER" and g.is_connected()


def test_gen_workload(tmp_path):
    assert main(["gen-workload", "--out", str(tmp_path), "--set", "n=20", "--set", "profiles=[0, 2]"]) == 0
    assert (tmp_path / "profiles.csv").exists()
    rows = list(csv.DictReader(open(tmp_path / "requests_profile2.csv")))
    assert rows and all(0 <= int(r["ingress"]) < 19 for r in rows)


def test_export_plans(tmp_path):
    assert main(["export-plans", "--out", str(tmp_path), "--set", "strategy=first_fit", *SMALL]) == 0
    plans = sorted((tmp_path / "plans" / "round0").glob("agent*.csv"))
    assert len(plans) == 29
    assert (tmp_path / "metrics.csv").exists()


def test_grid_writes_comparison(ini, tmp_path):
    out = tmp_path / "g"
    assert main(["grid", "--config", str(ini), "--out", str(out), "--parallel", "2"]) == 0
    assert len(list((out / "cells").iterdir())) == 5
    table = list(csv.DictReader(open(out / "comparison.csv")))
    assert {r["strategy"] for r in table} == {"epos", "first_fit"}
    assert (out / "figures" / "fig10_variance_error.csv").exists()


def test_runtime_failure_exits_2(tmp_path, monkeypatch):
    import fogplace.cli as cli

    def broken(*a, **kw):
        raise RuntimeError("disk on fire")

    monkeypatch.setattr(cli, "build_network", broken)
    assert main(["gen-topology", "--out", str(tmp_path)]) == 2


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "fogplace", "validate", "--set", "n=20"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "config ok" in proc.stdout
