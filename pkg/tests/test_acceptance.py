"""End-to-end acceptance checks.

Every criterion prints one ``[PASS]`` or ``[FAIL]`` line with the measured
value, the tolerance and the wall time, then asserts.  The bandit criteria
run the shipped configs in ``configs/`` on their configured seeds; hyper-
parameters in those files were chosen on other seeds (1000 and up).

Expect this module to take a long time; the neural-network criteria alone
simulate 20,000 periods on 20 seeds for each agent.
"""

import time
from pathlib import Path

import numpy as np
import pytest

from hypx import checks
from hypx.harness import cheapest_passing, load_config, run_many

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def emit(capsys, passed, text, seconds):
    with capsys.disabled():
        print(f"\n[{'PASS' if passed else 'FAIL'}] {text} ({seconds:.0f}s)")


def emit_lines(capsys, result, seconds):
    with capsys.disabled():
        print()
        print(result.report())
        print(f"[{'PASS' if result.passed else 'FAIL'}] suite {result.suite} ({seconds:.0f}s)")


def final_regrets(cfg):
    return np.array([run[-1].cum_regret for run in run_many(cfg)])


@pytest.fixture(scope="module")
def nn_baselines():
    """Tuned epsilon-greedy and independent-arm TS on the criterion seeds."""
    out = {}
    for name, fname in (("epsilon-greedy", "nn_epsilon_greedy.ini"), ("independent TS", "nn_independent_ts.ini")):
        t0 = time.time()
        out[name] = (final_regrets(load_config(CONFIGS / fname)), time.time() - t0)
    return out


class TestPosteriorRecovery:
    def test_matches_conjugate_posterior(self, capsys):
        t0 = time.time()
        result = checks.check_posterior()
        elapsed = time.time() - t0
        emit_lines(capsys, result, elapsed)
        emit(capsys, elapsed <= 120, f"posterior recovery runtime {elapsed:.0f}s <= 120s", elapsed)
        assert result.passed


class TestGaussianComputation:
    """Cheapest swept configuration reaching average regret below 0.01 sqrt(K)."""

    @pytest.fixture(scope="class")
    def linear(self):
        cfg = load_config(CONFIGS / "gaussian_linear_sweep.ini")
        t0 = time.time()
        found, rows = cheapest_passing(cfg, 0.01 * np.sqrt(cfg.env["n_arms"]))
        return cfg, found, rows, time.time() - t0

    def test_linear_meets_target(self, linear, capsys):
        cfg, found, rows, elapsed = linear
        target = 0.01 * np.sqrt(cfg.env["n_arms"])
        if found is None:
            best = min(r["mean_avg_regret"] for r in rows)
            text = f"diagonal linear: no swept point below {target:.4f} (best {best:.4f})"
        else:
            point = {k: found[k] for k in sorted(cfg.sweep)}
            text = (f"diagonal linear: mean average regret {found['mean_avg_regret']:.4f} < {target:.4f} "
                    f"over {found['n_runs']} runs at computation {found['computation']} {point}")
        emit(capsys, found is not None, text, elapsed)
        emit(capsys, elapsed <= 1800, f"linear sweep runtime {elapsed:.0f}s <= 1800s", elapsed)
        assert found is not None
        assert found["n_runs"] >= 50

    def test_linear_cheaper_than_ensemble(self, linear, capsys):
        _, lin_found, _, _ = linear
        assert lin_found is not None, "the linear sweep found no passing point"
        cfg = load_config(CONFIGS / "gaussian_ensemble_sweep.ini")
        t0 = time.time()
        # any ensemble point costing no more than the linear minimum must miss the target
        found, rows = cheapest_passing(cfg, 0.01 * np.sqrt(cfg.env["n_arms"]), max_computation=lin_found["computation"])
        elapsed = time.time() - t0
        best = min(r["mean_avg_regret"] for r in rows)
        if found is None:
            text = (f"ensemble: none of {len(rows)} swept points with computation <= {lin_found['computation']} "
                    f"reaches the target (best {best:.4f}); linear minimum is strictly smaller")
        else:
            text = (f"ensemble reaches the target at computation {found['computation']}, "
                    f"linear minimum {lin_found['computation']} is not strictly smaller")
        emit(capsys, found is None, text, elapsed)
        assert found is None


class TestOneSparse:
    def test_ids_halves_ts_regret(self, capsys):
        ids_cfg = load_config(CONFIGS / "sparse_ids.ini")
        ts_cfg = ids_cfg.with_overrides({"agent.exploration": "ts"})
        t0 = time.time()
        ids, ts = final_regrets(ids_cfg), final_regrets(ts_cfg)
        elapsed = time.time() - t0
        ratio = ids.mean() / ts.mean()
        passed = ratio <= 0.5 and len(ids) >= 100
        emit(capsys, passed, f"one-sparse N=32: IDS {ids.mean():.1f} / TS {ts.mean():.1f} = {ratio:.3f} <= 0.5 "
             f"over {len(ids)} runs", elapsed)
        emit(capsys, elapsed <= 1200, f"one-sparse runtime {elapsed:.0f}s <= 1200s", elapsed)
        assert passed


class TestNeuralBandit:
    def test_linear_hypermodel_beats_baselines(self, nn_baselines, capsys):
        cfg = load_config(CONFIGS / "nn_linear.ini")
        t0 = time.time()
        lin = final_regrets(cfg)
        elapsed = time.time() - t0 + sum(sec for _, sec in nn_baselines.values())
        ok = len(lin) >= 20
        parts = [f"linear hypermodel {lin.mean():.1f}"]
        for name, (reg, _) in nn_baselines.items():
            ok = ok and lin.mean() < reg.mean()
            parts.append(f"{name} {reg.mean():.1f}")
        emit(capsys, ok, "NN bandit mean cumulative regret: " + ", ".join(parts)
             + f" over {len(lin)} paired seeds, horizon {cfg.horizon}", elapsed)
        emit(capsys, elapsed <= 3600, f"NN bandit runtime {elapsed:.0f}s <= 3600s", elapsed)
        assert ok

    def test_additive_prior_helps_ensemble(self, capsys):
        with_prior = load_config(CONFIGS / "nn_ensemble_prior.ini")
        without = with_prior.with_overrides({"agent.additive_prior": False})
        t0 = time.time()
        a, b = final_regrets(with_prior), final_regrets(without)
        elapsed = time.time() - t0
        passed = a.mean() < b.mean() and len(a) >= 20
        emit(capsys, passed, f"ensemble of {with_prior.agent['index_dim']}: with prior {a.mean():.1f} "
             f"< without {b.mean():.1f} over {len(a)} paired seeds", elapsed)
        assert passed


class TestOracleSuites:
    @pytest.mark.parametrize("suite, budget", [("gradients", 60), ("ids", 60), ("bisection", None)])
    def test_suite(self, suite, budget, capsys):
        t0 = time.time()
        result = checks.run_suite(suite)
        elapsed = time.time() - t0
        emit_lines(capsys, result, elapsed)
        if budget is not None:
            emit(capsys, elapsed <= budget, f"{suite} runtime {elapsed:.0f}s <= {budget}s", elapsed)
        assert result.passed
