"""Information-directed sampling versus Thompson sampling on a one-sparse bandit.

The unknown parameter is a one-hot vector in R^32.  Besides the 32 one-hot
actions, the agent may play half-weight indicators of the sublists met when
bisecting 1..32.  Those never pay the maximum, so Thompson sampling ignores
them and eliminates one coordinate at a time.  Variance-IDS is willing to
pay a little regret for a lot of information and ends up running something
close to a bisection search.

Both agents use the sparse-softmax hypermodel, whose samples always lie on
the simplex, trained by perturbed SGD.

Run:  python3 demos/03_ids_one_sparse.py
"""

import numpy as np

from hypx.harness import load_config, run_many

ids = load_config("configs/sparse_ids.ini").with_overrides({"harness.n_runs": 10})
ts = ids.with_overrides({"agent.exploration": "ts"})

for name, cfg in (("IDS", ids), ("TS", ts)):
    runs = run_many(cfg)
    cum = np.array([r[-1].cum_regret for r in runs])
    n_halves = np.mean([np.sum([rec.action >= cfg.env["dim"] for rec in r]) for r in runs])
    print(f"{name:>3}: mean cumulative regret {cum.mean():6.1f} after {cfg.horizon} periods; "
          f"{n_halves:5.1f} half-weight actions played per run")
