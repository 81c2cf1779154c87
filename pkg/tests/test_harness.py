import csv
import json
import os

import numpy as np
import numpy.testing as npt
import pytest

from hypx import cli, harness
from hypx.numerics import ConfigurationError, ContractError, RngStream

SMALL = """
[env]
kind = gaussian
n_arms = 3

[agent]
kind = hypermodel
hypermodel = linear_diagonal
index_dim = 2
additive_prior = true

[train]
step_size = 0.1
batch_data = 8
batch_index = 2

[harness]
horizon = 25
n_runs = 2
seed = 4
"""


@pytest.fixture
def small_cfg():
    return harness.parse_config(SMALL)


class TestConfig:
    def test_parse_types(self, small_cfg):
        assert small_cfg.env == {"kind": "gaussian", "n_arms": 3}
        assert small_cfg.agent["additive_prior"] is True
        assert small_cfg.train["step_size"] == 0.1
        assert (small_cfg.horizon, small_cfg.n_runs, small_cfg.seed) == (25, 2, 4)

    def test_unknown_key(self):
        with pytest.raises(ConfigurationError):
            harness.parse_config(SMALL.replace("n_arms = 3", "n_arms = 3\narms = 4"))

    def test_unknown_section(self):
        with pytest.raises(ConfigurationError):
            harness.parse_config(SMALL + "\n[plots]\nx = 1\n")

    def test_sweep_section(self):
        cfg = harness.parse_config(SMALL + "\n[sweep]\ntrain.step_size = 0.1, 0.3\nagent.index_dim = 1, 2\n")
        assert cfg.sweep == {"train.step_size": [0.1, 0.3], "agent.index_dim": [1, 2]}
        assert len(harness.sweep_points(cfg)) == 4

    def test_overrides(self, small_cfg):
        cfg = small_cfg.with_overrides({"harness.n_runs": 5, "train.step_size": 0.2})
        assert cfg.n_runs == 5 and cfg.train["step_size"] == 0.2
        assert small_cfg.n_runs == 2


class TestComputation:
    def test_metric(self):
        assert harness.computation(2, 4, 1024, 40) == 2 * 4 * 1024 * 40

    def test_diagonal_config(self, small_cfg):
        # n_sgd 1, n_z 2, batch 8, params K(m+1) = 3*3
        assert harness.config_computation(small_cfg) == 1 * 2 * 8 * 9

    def test_baselines_cost_nothing(self, small_cfg):
        cfg = small_cfg.with_overrides({"agent.kind": "epsilon_greedy"})
        assert harness.config_computation(cfg) == 0

    def test_cheapest_passing_walks_by_computation(self, small_cfg):
        cfg = harness.parse_config(SMALL + "\n[sweep]\nagent.index_dim = 2, 1\ntrain.batch_index = 2, 1\n")
        found, rows = harness.cheapest_passing(cfg, threshold=-1.0)
        assert found is None
        comps = [r["computation"] for r in rows]
        assert comps == sorted(comps) and len(rows) == 4
        found, rows = harness.cheapest_passing(cfg, threshold=1e9)
        # index_dim 1 with one index per step: 1 * 1 * 8 * 3 * (1 + 1)
        assert len(rows) == 1 and found["computation"] == 48

    def test_cheapest_passing_respects_cap(self, small_cfg):
        cfg = harness.parse_config(SMALL + "\n[sweep]\ntrain.batch_index = 1, 2\n")
        found, rows = harness.cheapest_passing(cfg, threshold=-1.0, max_computation=72)
        assert found is None and [r["computation"] for r in rows] == [72]

    def test_minimal_computation(self):
        rows = [
            {"mean_avg_regret": 0.02, "computation": 10},
            {"mean_avg_regret": 0.01, "computation": 30},
            {"mean_avg_regret": 0.005, "computation": 20},
        ]
        assert harness.minimal_computation(rows, 0.015) == 20
        assert harness.minimal_computation(rows, 0.001) is None


class TestRuns:
    def test_cum_regret_is_running_sum(self, small_cfg):
        recs = harness.run_bandit(small_cfg, 0)
        npt.assert_allclose(np.cumsum([r.regret for r in recs]), [r.cum_regret for r in recs])
        assert recs[0].seed == 4 and recs[-1].t == 24

    def test_agents_share_environment_per_seed(self, small_cfg):
        eps = small_cfg.with_overrides({"agent.kind": "epsilon_greedy"})
        a = harness.run_bandit(small_cfg, 1)
        b = harness.run_bandit(eps, 1)
        env = harness.make_env(small_cfg, RngStream(5).fork("env"))
        for recs in (a, b):
            for r in recs[:5]:
                assert r.regret == pytest.approx(env.regret(r.action))

    def test_repeatable(self, small_cfg):
        assert harness.steps_csv(harness.run_many(small_cfg)) == harness.steps_csv(harness.run_many(small_cfg))

    def test_aggregate_rejects_ragged(self, small_cfg):
        recs = harness.run_bandit(small_cfg, 0)
        with pytest.raises(ContractError):
            harness.aggregate([recs, recs[:-1]])

    def test_run_experiment_outputs(self, small_cfg, tmp_path):
        agg = harness.run_experiment(small_cfg, str(tmp_path))
        with open(tmp_path / "steps.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == harness.STEP_HEADER
        assert len(rows) == 1 + 2 * 25
        with open(tmp_path / "summary.csv") as fh:
            summary = list(csv.DictReader(fh))
        assert float(summary[1]["cum_regret"]) == agg.summaries[1]["cum_regret"]
        meta = json.loads((tmp_path / "metadata.json").read_text())
        assert [e["seed"] for e in meta["environments"]] == [4, 5]


class TestCli:
    def test_run(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text(SMALL)
        out = tmp_path / "out"
        assert cli.main(["run", "--config", str(path), "--out", str(out), "--runs", "1", "--seed", "9"]) == 0
        assert os.path.exists(out / "summary.csv")
        assert json.loads((out / "metadata.json").read_text())["config"]["harness"]["seed"] == 9

    def test_sweep(self, tmp_path):
        path = tmp_path / "c.ini"
        path.write_text(SMALL + "\n[sweep]\nagent.index_dim = 1, 2\n")
        assert cli.main(["sweep", "--config", str(path), "--out", str(tmp_path / "sw")]) == 0
        with open(tmp_path / "sw" / "sweep.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert [r["agent.index_dim"] for r in rows] == ["1", "2"]

    def test_bad_config_exit_code(self, tmp_path, capsys):
        path = tmp_path / "c.ini"
        path.write_text("[env]\nkind = gaussian\n")
        assert cli.main(["run", "--config", str(path)]) == 2
        assert "error" in capsys.readouterr().err

    def test_check_exit_status(self):
        assert cli.main(["check", "--suite", "bisection"]) == 0
