import csv
import json

import numpy as np
import pytest

from flowmarket.agents import MarketInstance
from flowmarket.equilibria import EquilibriumSolution, solve_swe, verify_ce
from flowmarket.expcli import (AGENT_COLUMNS, ExperimentConfig, RunRecord, emit,
                               experiment_instance, load_config, main, run_experiment1,
                               run_experiment2, run_experiment3, run_experiment4)


def test_default_experiment_one(tmp_path):
    rec = run_experiment1(ExperimentConfig(1, seed=4))
    assert rec.ok and rec.metrics["verify_ce_passed"]
    sol = rec.solution
    np.testing.assert_allclose(sol.lam + sol.q, -sol.beta, atol=1e-8)
    assert rec.instance.network.m == 60


def test_experiment_one_csv_is_byte_identical(tmp_path):
    for d in ("a", "b"):
        emit(run_experiment1(ExperimentConfig(1, seed=9)), tmp_path / d)
    assert (tmp_path / "a/metrics.csv").read_bytes() == (tmp_path / "b/metrics.csv").read_bytes()
    assert (tmp_path / "a/instance.json").read_bytes() == (tmp_path / "b/instance.json").read_bytes()


def test_emitted_solution_reverifies(tmp_path):
    emit(run_experiment1(ExperimentConfig(1, seed=2)), tmp_path)
    inst = MarketInstance.from_dict(json.loads((tmp_path / "instance.json").read_text()))
    saved = json.loads((tmp_path / "solution.json").read_text())
    sol = EquilibriumSolution.from_dict(saved["solution"])
    assert verify_ce(inst, sol, saved["tol"]).passed
    again = solve_swe(inst)
    np.testing.assert_allclose(again.x, sol.x, atol=1e-8)
    rows = list(csv.DictReader(open(tmp_path / "metrics.csv")))
    assert len(rows) == inst.n and list(rows[0]) == AGENT_COLUMNS


def test_experiment_two():
    rec = run_experiment2(ExperimentConfig(2, seed=1))
    m = rec.metrics
    assert m["e_gap_inf"] <= 1e-5 and m["price_spread"] <= 1e-6 and m["q_inf_norm"] <= 1e-6
    assert m["min_capacity_slack"] >= 1e5


def test_experiment_three_trend_and_single_gamma():
    recs = run_experiment3(ExperimentConfig(3, seed=0))
    q = [r.summary["q_inf_norm"] for r in recs]
    e = [r.summary["e_l1_norm"] for r in recs]
    assert q[0] >= q[-1] and e[0] <= e[-1]
    one = run_experiment3(ExperimentConfig(3, seed=0, gammas=(0.5,)))
    assert len(one) == 1
    # one seed gives one graph across the sweep
    assert one[0].instance.network.arcs == recs[2].instance.network.arcs
    np.testing.assert_allclose(one[0].instance.network.u, recs[2].instance.network.u)


def test_experiment_four_and_modified_box():
    rec = run_experiment4(ExperimentConfig(4, seed=0, trials=10))
    assert rec.ok and rec.metrics["sstar_verdict"] == "in" and rec.metrics["n_pass"] == 10
    bad = run_experiment4(ExperimentConfig(4, seed=0, trials=2, box=(0.5, 0.6, 10, 12)))
    assert bad.metrics["sstar_verdict"] == "out"


def test_empty_record_list_gives_header_only_csv(tmp_path):
    emit([], tmp_path)
    assert (tmp_path / "metrics.csv").read_text().strip() == ",".join(AGENT_COLUMNS)


def test_gamma_sweep_writes_summary(tmp_path):
    paths = emit(run_experiment3(ExperimentConfig(3, seed=1, gammas=(0.1, 1.0))), tmp_path)
    rows = list(csv.DictReader(open(tmp_path / "summary.csv")))
    assert [float(r["gamma"]) for r in rows] == [0.1, 1.0]
    assert tmp_path / "summary.csv" in paths


@pytest.mark.parametrize("kw", [dict(experiment=5), dict(experiment=1, a_range=(3, 1)),
                                dict(experiment=1, theta1_range=(0, 1)),
                                dict(experiment=3, gammas=())])
def test_invalid_configs(kw):
    with pytest.raises(ValueError):
        ExperimentConfig(**kw)


def test_config_file_overrides(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"n": 8, "edges": 10, "theta2_range": [5, 6]}))
    cfg = load_config(p, 1)
    assert cfg.n == 8 and cfg.theta2_range == (5.0, 6.0)
    p.write_text(json.dumps({"bogus": 1}))
    with pytest.raises(ValueError):
        load_config(p, 1)


def test_instance_generation_is_seeded():
    cfg = ExperimentConfig(1)
    a, b = experiment_instance(cfg, 3), experiment_instance(cfg, 3)
    np.testing.assert_array_equal(a.a, b.a)
    assert not np.array_equal(a.a, experiment_instance(cfg, 4).a)


def test_cli_env_seed_and_exit_code(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("FLOWMARKET_SEED", "5")
    assert main(["exp", "1", "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "config.json").read_text())["seed"] == 5
    assert "ok" in capsys.readouterr().out


def test_failures_are_recorded():
    cfg = ExperimentConfig(1, n=4, edges=2)
    rec = run_experiment1(cfg)
    assert not rec.ok and "NetworkError" in rec.errors[0]
    assert isinstance(rec, RunRecord)
