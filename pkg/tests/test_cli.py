import json
import subprocess
import sys
from pathlib import Path

import pytest

from agr import cli
from agr.harness import ComparisonReport, OrderingCheck
from agr.pomdp_format import read_pomdp

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
SMALL = str(CONFIGS / "corridor_n1.yaml")


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_build_and_export(tmp_path, capsys):
    target = tmp_path / "c.pomdp"
    code, out, _ = run(["build", "--n", "2", "--export-pomdp", str(target)], capsys)
    assert code == 0
    assert "states 30  actions 8  observations 7" in out
    assert read_pomdp(target).num_states == 30


def test_build_map_sizes(capsys):
    code, out, _ = run(["build", str(CONFIGS / "map.yaml")], capsys)
    assert code == 0 and "states 1088  actions 7  observations 575" in out


def test_solve_then_simulate(tmp_path, capsys):
    policy = tmp_path / "p.npz"
    assert run(["solve", SMALL, "-o", str(policy)], capsys)[0] == 0
    code, out, _ = run(["simulate", SMALL, "--policy", str(policy), "--out", str(tmp_path / "res"),
                        "--episodes", "50"], capsys)
    assert code == 0
    assert "mean 126.48" in out
    rows = (tmp_path / "res" / "agr_returns.csv").read_text().splitlines()
    assert len(rows) == 51


def test_simulate_rejects_mismatched_policy(tmp_path, capsys):
    policy = tmp_path / "p.json"
    run(["solve", SMALL, "-o", str(policy)], capsys)
    code, _, err = run(["simulate", "--n", "2", "--policy", str(policy), "--out", str(tmp_path)], capsys)
    assert code == 2 and "policy has 12 states" in err


def test_oracle(capsys):
    code, out, _ = run(["oracle", SMALL, "--check-pbvi"], capsys)
    assert code == 0
    assert out.count("PASS") == 3
    assert "agr   exact 126.481622" in out


def test_oracle_node_cap(capsys):
    code, _, err = run(["oracle", "--n", "3", "--horizon", "12", "--node-cap", "100"], capsys)
    assert code == 2 and "node cap" in err


def test_compare_writes_outputs(tmp_path, capsys):
    code, out, _ = run(["compare", SMALL, "--out", str(tmp_path), "--strict"], capsys)
    assert code == 0
    summary = json.loads((tmp_path / "comparison.json").read_text())
    assert summary["passed"] is True
    assert set(summary["variants"]) == {"agr", "lb-a", "lb-t", "ub"}
    for v in ("agr", "lb-a", "lb-t", "ub"):
        assert (tmp_path / f"{v}_entropy.csv").exists()


def test_compare_strict_exit_code(tmp_path, capsys, monkeypatch):
    failing = ComparisonReport({}, {}, [OrderingCheck("agr", "ub", 2.0, 1.0, 0.1, False)])
    failing.table = lambda: "FAIL"
    monkeypatch.setattr(cli, "compare_variants", lambda *a, **k: failing)
    assert run(["compare", SMALL, "--out", str(tmp_path), "--strict"], capsys)[0] == 1
    assert run(["compare", SMALL, "--out", str(tmp_path)], capsys)[0] == 0


def test_bad_config_reports_location(tmp_path, capsys):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("domain: corridor\nvariant: best\n")
    code, _, err = run(["build", str(cfg)], capsys)
    assert code == 2
    assert f"{cfg}:2 [variant]" in err


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "agr", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("build", "solve", "simulate", "compare", "oracle"):
        assert cmd in res.stdout
