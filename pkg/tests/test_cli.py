import csv
import json

import pytest

from collabmdp import verifier
from collabmdp.cli import main, resolve_gamma

GEN = {"generator": {"n_states": 2, "n_a1": 2, "n_a2": 2, "seed": 1}}
BANDIT = {"inline": {"trans": [[[[1.0]], [[1.0]]]], "reward": [[[1.0], [0.0]]], "d1": [1.0]}}
ABSORBING = {"inline": {
    "trans": [[[[1.0, 0.0]]], [[[0.0, 1.0]]]],
    "reward": [[[1.0]], [[0.0]]],
    "d1": [0.5, 0.5],
}}


def write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps({"schema": 1, **cfg}))
    return str(path)


def simulate_cfg(mdp=GEN, **over):
    cfg = {"mdp": mdp, "learner": {"algorithm": "ExpDRBias", "gamma": 3},
           "opponent": {"kind": "fixed", "start": "uniform"}, "T": 12, "M": 10, "seed": 0}
    cfg.update(over)
    return cfg


def test_simulate_minimal_one_state(tmp_path):
    out = tmp_path / "out"
    cfg = write(tmp_path, simulate_cfg(BANDIT, learner={"gamma": 2}))
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    rows = list(csv.DictReader((out / "episodes.csv").open()))
    assert len(rows) == 12
    steps = [float(r["eta_comparator_best"]) - float(r["eta_learner"]) for r in rows]
    assert all(b <= a + 1e-12 for a, b in zip(steps, steps[1:]))  # per-episode regret shrinks
    summary = json.loads((out / "summary.json").read_text())
    assert summary["verifier"]["failed"] == 0


def test_simulate_is_byte_identical(tmp_path):
    cfg = write(tmp_path, simulate_cfg(opponent={"kind": "drift", "start": "random", "target": "random"}))
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", cfg, "--out", str(a)]) == 0
    assert main(["simulate", "--config", cfg, "--out", str(b)]) == 0
    assert (a / "episodes.csv").read_bytes() == (b / "episodes.csv").read_bytes()


def test_gamma_above_horizon_is_config_error(tmp_path):
    cfg = write(tmp_path, simulate_cfg(learner={"gamma": 50}))
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_bad_inputs_are_config_errors(tmp_path, capsys):
    assert main(["simulate", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"schema": 7}))
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) == 2
    cfg = write(tmp_path, simulate_cfg(opponent={"kind": "wobble"}))
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert "config error" in capsys.readouterr().err


def test_non_mixing_mdp_is_numeric_failure(tmp_path):
    cfg = write(tmp_path, simulate_cfg(ABSORBING, learner={"gamma": 1}))
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 3


VERIFY_SMALL = {"seed": 0, "verify": {"n_instances": 2, "T": 30, "gamma": 4, "M": 20, "n_pairs": 2}}


def test_verify_small_suite(tmp_path):
    out = tmp_path / "v"
    assert main(["verify", "--config", write(tmp_path, VERIFY_SMALL), "--out", str(out)]) == 0
    records = json.loads((out / "checks.json").read_text())
    assert records and all(r["pass"] for r in records)


def test_verify_bad_tolerance_hook(tmp_path):
    cfg = {"seed": 0, "verify": {**VERIFY_SMALL["verify"], "slack_tol": -1e9}}
    assert main(["verify", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "v")]) == 1
    assert verifier.SLACK_TOL == 1e-8


def test_verify_empty_instances(tmp_path):
    cfg = {"verify": {"instances": []}}
    assert main(["verify", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "v")]) == 2


def test_verify_explicit_instances(tmp_path):
    cfg = {"verify": {"instances": [GEN], "T": 20, "gamma": 3, "M": 10, "n_pairs": 1}}
    assert main(["verify", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "v")]) == 0


def sweep_cfg(**axes):
    return {"mdp": GEN, "learner": {"gamma": "auto"},
            "opponent": {"kind": "drift", "start": "random-deterministic", "target": "random-deterministic",
                         "c": 1.0, "alpha": 1.0},
            "M": 10, "sweep": axes}


def test_sweep_rows_per_seed(tmp_path):
    out = tmp_path / "s"
    cfg = write(tmp_path, sweep_cfg(T=[20, 40], seed=[0, 1]))
    assert main(["sweep", "--config", cfg, "--out", str(out)]) in (0, 1)
    rows = list(csv.DictReader((out / "sweep.csv").open()))
    assert len(rows) == 4
    for s in ("0", "1"):
        assert sorted(int(r["T"]) for r in rows if r["seed"] == s) == [20, 40]
    assert len(list((out / "cells").glob("*.csv"))) == 4
    assert json.loads((out / "rates.json").read_text())[0]["T"] == [20, 40]


def test_sweep_alpha_axis_gives_distinct_slopes(tmp_path):
    out = tmp_path / "s"
    cfg = write(tmp_path, sweep_cfg(T=[40, 80, 160], alpha=[0.5, 1.0]))
    main(["sweep", "--config", cfg, "--out", str(out)])
    rates = json.loads((out / "rates.json").read_text())
    assert len(rates) == 2
    assert rates[0]["slope"] != rates[1]["slope"]


def test_single_cell_sweep_matches_simulate(tmp_path):
    base = simulate_cfg(T=15)
    sim, sw = tmp_path / "sim", tmp_path / "sw"
    assert main(["simulate", "--config", write(tmp_path, base, "a.json"), "--out", str(sim)]) == 0
    main(["sweep", "--config", write(tmp_path, {**base, "sweep": {"T": [15]}}, "b.json"), "--out", str(sw)])
    cell = next((sw / "cells").glob("*.csv"))
    assert cell.read_bytes() == (sim / "episodes.csv").read_bytes()


def test_sweep_unknown_axis(tmp_path):
    cfg = write(tmp_path, sweep_cfg(colour=[1]))
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "s")]) == 2


def test_reduce_command(tmp_path):
    graph = {"schema": 1, "rounds": [
        {"L": 1, "edges": [[[0, 0, 1], [0, 1, 0]], [[0, 0, 1], [1, 0, 0]]]},
        {"L": 1, "edges": [[[0, 1, 1]], [[0, 0, 0], [1, 0, 1]]]},
    ]}
    (tmp_path / "g.json").write_text(json.dumps(graph))
    out = tmp_path / "r"
    cfg = write(tmp_path, {"reduce": {"graph": "g.json", "rho2": 0.1}})
    assert main(["reduce", "--config", cfg, "--out", str(out)]) == 0
    corr = json.loads((out / "correspondence.json").read_text())
    assert corr["max_spread"] <= 1e-6 and len(corr["rounds"]) == 2
    assert (out / "mdp.json").exists() and (out / "schedule.json").exists()
    assert main(["reduce", "--config", write(tmp_path, {"reduce": {}}, "x.json"), "--out", str(out)]) == 2


def test_smoothness_command(tmp_path):
    out = tmp_path / "sm"
    mdp = {"generator": {"n_states": 2, "n_a1": 2, "n_a2": 2, "seed": 0, "state_only_reward": True}}
    cfg = write(tmp_path, {"mdp": mdp, "smoothness": {"eta_hat": 0.05, "p1": 2.0, "p2": 1.0}})
    assert main(["smoothness", "--config", cfg, "--out", str(out)]) == 0
    cert = json.loads((out / "certificate.json").read_text())
    assert cert["lam"] >= 0 and "kappa" in cert


def test_shipped_example_configs_parse():
    import pathlib
    for path in sorted(pathlib.Path(__file__).parent.parent.joinpath("configs").glob("*.json")):
        data = json.loads(path.read_text())
        assert data["schema"] == 1


def test_resolve_gamma():
    assert resolve_gamma("auto", 2000) == 77
    assert resolve_gamma("T", 10) == 10
    assert resolve_gamma(5, 10) == 5
    with pytest.raises(Exception):
        resolve_gamma("lots", 10)
