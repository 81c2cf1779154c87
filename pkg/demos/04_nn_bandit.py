"""A bandit whose rewards come from a small random ReLU network.

One hundred actions sit on the unit sphere in R^20, and their mean rewards
are the outputs of a 20-3-3-1 network with random weights.  The agents are:

* a linear hypermodel over a 20-10-10-1 network with an additive prior
  network of the generator's shape,
* epsilon-greedy with an annealed exploration rate,
* Thompson sampling that treats every action as an unrelated Gaussian arm.

This demo runs a short horizon on a few seeds; the acceptance test uses
20,000 periods and 20 seeds.

Run:  python3 demos/04_nn_bandit.py
"""

from hypx.harness import load_config, run_many

HORIZON, RUNS = 2000, 2
names = {
    "linear hypermodel": "configs/nn_linear.ini",
    "epsilon-greedy": "configs/nn_epsilon_greedy.ini",
    "independent TS": "configs/nn_independent_ts.ini",
}
for name, path in names.items():
    cfg = load_config(path).with_overrides({"harness.horizon": HORIZON, "harness.n_runs": RUNS})
    runs = run_many(cfg)
    per_seed = [round(r[-1].cum_regret) for r in runs]
    print(f"{name:>18}: cumulative regret by seed {per_seed}")
