import json
import subprocess
import sys

import pytest

from poissona2 import cli


def run_cli(tmp_path, sub, cfg, *extra):
    cfg_path = tmp_path / f"{sub}.cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    out = tmp_path / "out"
    code = cli.main([sub, "--config", str(cfg_path), "--out", str(out), *extra])
    report = out / f"{sub}.json"
    return code, (json.loads(report.read_text()) if code == 0 else None)


def test_characteristics_identity(tmp_path):
    code, rep = run_cli(tmp_path, "characteristics", {"weight": "identity"})
    assert code == 0
    ch = rep["characteristics"]
    for k in ("dyadic_a2", "classical_a2_lower", "fattened_a2_lower", "s_full", "s_dyadic", "s_strong_dyadic"):
        assert ch[k] == pytest.approx(1)
    assert ch["doubling_W"] == pytest.approx(2)
    assert rep["config_hash"] == cli.config_hash(rep["config"])
    assert (tmp_path / "out" / "characteristics.csv").read_text().startswith("# config_hash=")


def test_walk_d1(tmp_path):
    code, rep = run_cli(tmp_path, "walk", {"d": 1})
    assert code == 0
    assert rep["hitting_time"]["expected_tau_truncated"] == 1
    assert rep["walk_stats"]["stopped_mass_per_vertex"] == [0.25] * 4


def test_walk_monte_carlo_needs_seed(tmp_path):
    assert run_cli(tmp_path, "walk", {"d": 2, "mc_paths": 100})[0] == cli.EXIT_CONFIG
    code, rep = run_cli(tmp_path, "walk", {"d": 2, "mc_paths": 100}, "--seed", "5")
    assert code == 0 and rep["monte_carlo"]["mean_tau"] == 2


def test_seed_and_threads_reproducible(tmp_path):
    a = run_cli(tmp_path, "walk", {"d": 3, "mc_paths": 500}, "--seed", "9", "--threads", "1")[1]
    b = run_cli(tmp_path, "walk", {"d": 3, "mc_paths": 500}, "--seed", "9", "--threads", "4")[1]
    assert a["monte_carlo"] == b["monte_carlo"] and a["config_hash"] == b["config_hash"]


def test_largestep_and_validate(tmp_path):
    code, rep = run_cli(tmp_path, "largestep", {"Q": 4, "N0": 2})
    assert code == 0 and rep["validation"]["ok"]
    assert rep["dyadic_a2_W"] == pytest.approx(4)
    artifact = tmp_path / "out" / "F.json"
    assert run_cli(tmp_path, "validate", {"artifact": str(artifact)})[0] == 0
    doc = json.loads(artifact.read_text())
    doc["tree"]["records"][-1]["value"][4] *= 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    assert run_cli(tmp_path, "validate", {"artifact": str(bad)})[0] == cli.EXIT_VALIDATION


def test_transform_feasible(tmp_path):
    code, rep = run_cli(tmp_path, "transform", {"Q": 1.2, "N0": 1, "delta": 1.0, "materialize": False})
    assert code == 0
    assert rep["audit"]["ok"]
    dmg = rep["damage"]
    assert dmg["deviation"] <= 1e-8 + dmg["tail_band"]


def test_transform_epsilon_chain(tmp_path):
    code, rep = run_cli(tmp_path, "transform", {"Q": 1.2, "N0": 1, "epsilon": 7.0, "materialize": False})
    assert code == 0
    assert (1 + rep["delta"]) ** 3 <= 1 + 7.0 + 1e-12


def test_transform_out_of_budget(tmp_path):
    assert run_cli(tmp_path, "transform", {"Q": 4, "N0": 2, "delta": 0.1})[0] == cli.EXIT_BUDGET


@pytest.mark.parametrize("cfg", [{"d": 0}, {"d": "x"}, {}])
def test_config_errors(tmp_path, cfg):
    assert run_cli(tmp_path, "walk", cfg)[0] == cli.EXIT_CONFIG


def test_bad_files(tmp_path):
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    assert cli.main(["walk", "--config", str(broken), "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    assert run_cli(tmp_path, "validate", {"artifact": "missing.json"})[0] == cli.EXIT_CONFIG


def test_module_entry_point(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"d": 1}))
    proc = subprocess.run([sys.executable, "-m", "poissona2", "walk", "--config", str(cfg), "--out", str(tmp_path / "o")],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
