"""Oracle suites behind ``hypx check``.

Each suite returns a :class:`CheckResult` whose ``lines`` are human-readable
pass/fail reports.  The suites are deterministic (fixed seeds).
"""

from __future__ import annotations

import functools
import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from hypx import base_models as bm
from hypx import hypermodels as hms
from hypx import numerics as nx
from hypx.agents import ids_optimize, IdsStats
from hypx.environments import bisection_sublists
from hypx.numerics import RngStream
from hypx.training import Dataset, IndexedModel, TrainConfig, approx_loss, loss_gradient, make_perturbation, sgd_step

SUITES = ("gradients", "posterior", "ids", "bisection")


@dataclass
class CheckResult:
    suite: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    lines: list[str] = field(default_factory=list)

    def report(self) -> str:
        return "\n".join(self.lines)


def _line(passed: bool, text: str) -> str:
    return f"[{'PASS' if passed else 'FAIL'}] {text}"


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------

COMPOSITIONS = (
    ("ensemble", "linear"),
    ("ensemble", "mlp"),
    ("linear", "linear"),
    ("linear", "mlp"),
    ("linear_masked", "linear"),
    ("hypernetwork", "linear"),
    ("hypernetwork", "mlp"),
    ("sparse_softmax", "linear"),
)


def random_composition(kind: str, base_kind: str, rng: RngStream, with_prior: bool = False) -> IndexedModel:
    """Small random hypermodel + base model for gradient checking."""
    n_x = int(rng.integers(3)) + 2
    if base_kind == "mlp":
        hidden = tuple(int(rng.integers(3)) + 2 for _ in range(int(rng.integers(2)) + 1))
        arch = bm.MlpArchitecture(n_x, hidden, 1)
    else:
        arch = bm.LinearArchitecture(n_x)
    base = bm.make_base(arch)
    n_theta = arch.param_count
    index_dim = int(rng.integers(3)) + 2
    if kind == "ensemble":
        hm = hms.EnsembleHypermodel(rng.normal(size=(n_theta, index_dim), scale=0.5))
    elif kind == "linear":
        hm = hms.LinearHypermodel(rng.normal(size=n_theta, scale=0.5), rng.normal(size=(n_theta, index_dim), scale=0.5))
    elif kind == "linear_masked":
        mask = hms.block_mask([(1, 2)] * n_theta)
        hm = hms.LinearHypermodel(rng.normal(size=n_theta), rng.normal(size=(n_theta, 2 * n_theta)), mask=mask)
    elif kind == "hypernetwork":
        net = bm.MlpArchitecture(index_dim, (int(rng.integers(3)) + 2,), n_theta)
        hm = hms.HypernetworkHypermodel(net, rng.normal(size=net.param_count, scale=0.5))
    elif kind == "sparse_softmax":
        hm = hms.SparseSoftmaxHypermodel(rng.uniform(0.5, 1.5, size=n_theta), 0.01, float(rng.uniform(1.0, 3.0)))
    else:
        raise ValueError(kind)
    prior = None
    if with_prior:
        prior = bm.AdditivePriorSpec(
            rng.uniform(0.5, 1.5, size=arch.param_count), rng.normal(size=(arch.param_count, hm.index_dim)), arch
        )
    model = IndexedModel(hm, base, prior)
    # move away from the initial point so the regularizer has a gradient too
    for name, arr in hm.params.items():
        arr += rng.normal(size=arr.shape, scale=0.1)
        if name in hm.masks():
            arr *= hm.masks()[name]
    return model


def gradient_error(model: IndexedModel, rng: RngStream, step: float = 1e-5) -> float:
    """Max relative error of the autodiff loss gradient against central differences."""
    n_x = model.base.param_count if isinstance(model.base, bm.LinearBase) else model.base.arch.input_dim
    n = int(rng.integers(4)) + 3
    X = rng.normal(size=(n, n_x))
    y = rng.normal(size=n)
    A = rng.normal(size=(n, model.index_dim))
    Z = model.reference.sample(rng, int(rng.integers(3)) + 2)
    cfg = TrainConfig(step_size=0.1, noise_var=float(rng.uniform(0.5, 2.0)), prior_var=float(rng.uniform(0.5, 2.0)))
    total_n = n + int(rng.integers(10))
    _, grads = loss_gradient(model, X, y, A, Z, cfg, total_n)
    worst = 0.0
    params = model.hypermodel.params
    for name in params:
        original = params[name].copy()

        def loss_at(v):
            params[name] = v
            try:
                return float(approx_loss(model, X, y, A, Z, cfg, total_n).value)
            finally:
                params[name] = original

        fd = nx.finite_difference_gradient(loss_at, original, step)
        g = grads[name]
        masks = model.hypermodel.masks()
        if name in masks:
            g, fd = g[masks[name]], fd[masks[name]]
        worst = max(worst, nx.relative_error(g, fd, floor=1e-6))
    return worst


def check_gradients(n_cases: int = 100, tol: float = 1e-5, seed: int = 7) -> CheckResult:
    rng = RngStream(seed)
    errors = []
    for i in range(n_cases):
        kind, base_kind = COMPOSITIONS[i % len(COMPOSITIONS)]
        case_rng = rng.fork(i)
        model = random_composition(kind, base_kind, case_rng, with_prior=bool(i % 2))
        errors.append(gradient_error(model, case_rng))
    worst = max(errors)
    ok = worst <= tol
    res = CheckResult("gradients", ok, {"max_relative_error": worst, "n_cases": n_cases})
    res.lines.append(_line(ok, f"gradients: {n_cases} compositions, max relative error {worst:.3e} (tol {tol:g})"))
    return res


# ---------------------------------------------------------------------------
# posterior
# ---------------------------------------------------------------------------


def conjugate_posterior(y_by_arm: list[np.ndarray], prior_var: float, noise_var: float):
    """Independent-arm Gaussian posterior (zero prior mean): ``(means, stds)``."""
    n = np.array([len(y) for y in y_by_arm], dtype=np.float64)
    sums = np.array([np.sum(y) for y in y_by_arm])
    var = 1.0 / (1.0 / prior_var + n / noise_var)
    return var * sums / noise_var, np.sqrt(var)


def ridge_optimum_std(A_by_arm, prior_rows, prior_var: float, noise_var: float, perturb_scale: float):
    """Index-std of the exact minimizer of the expected perturbed loss.

    For one arm with prior ``sqrt(prior_var) * b.z`` and a zero initial
    differential model, the minimizer is linear in ``z``:
    ``s^2 (sum y / noise_var + (perturb_scale * sum a / noise_var + b / sqrt(prior_var)).z)``
    so its spread depends on the realized perturbation vectors ``a``.
    """
    out = []
    for A, b in zip(A_by_arm, prior_rows):
        s2 = 1.0 / (1.0 / prior_var + len(A) / noise_var)
        w = perturb_scale * np.sum(A, axis=0) / noise_var + np.asarray(b) / np.sqrt(prior_var)
        out.append(s2 * np.linalg.norm(w))
    return np.array(out)


def check_posterior(
    n_arms: int = 5,
    per_arm: int = 20,
    block_width: int = 3,
    sgd_steps: int = 50_000,
    n_draws: int = 10_000,
    step_size: float = 0.01,
    batch_index: int = 16,
    prior_var: float = 2.25,
    noise_var: float = 1.0,
    seed: int = 11,
    mean_tol: float = 0.05,
    std_rel_tol: float = 0.10,
) -> CheckResult:
    """Train a diagonal linear hypermodel on a fixed dataset and compare to conjugacy."""
    root = RngStream(seed)
    data_rng, model_rng, train_rng = root.fork("data"), root.fork("model"), root.fork("train")
    theta = data_rng.normal(size=n_arms, scale=np.sqrt(prior_var))
    hm = hms.init_hypermodel("linear_diagonal", {"n_arms": n_arms, "block_width": block_width}, "zeros", model_rng)
    arch = bm.LinearArchitecture(n_arms)
    mixer = hms.make_block_diagonal_mixer([(1, block_width)] * n_arms, model_rng)
    prior = bm.AdditivePriorSpec(np.full(n_arms, np.sqrt(prior_var)), mixer, arch)
    blocks = [slice(k * block_width, (k + 1) * block_width) for k in range(n_arms)]
    model = IndexedModel(hm, bm.make_base(arch), prior, blocks)
    data = Dataset(n_arms, hm.index_dim)
    eye = np.eye(n_arms)
    for k in range(n_arms):
        for _ in range(per_arm):
            y = theta[k] + np.sqrt(noise_var) * data_rng.normal()
            data.append(eye[k], y, make_perturbation(hm.reference, data_rng, blocks[k]), k)
    cfg = TrainConfig(
        step_size=step_size,
        noise_var=noise_var,
        prior_var=prior_var,
        perturb_scale=np.sqrt(noise_var),
        batch_data=len(data),
        batch_index=batch_index,
    )
    t0 = time.perf_counter()
    for _ in range(sgd_steps):
        sgd_step(model, cfg, data, train_rng)
    elapsed = time.perf_counter() - t0

    y_by_arm = [data.y[data.actions == k] for k in range(n_arms)]
    A_by_arm = [data.a[data.actions == k][:, blocks[k]] for k in range(n_arms)]
    mu, sd = conjugate_posterior(y_by_arm, prior_var, noise_var)
    prior_rows = [mixer[k, blocks[k]] for k in range(n_arms)]
    optimum_sd = ridge_optimum_std(A_by_arm, prior_rows, prior_var, noise_var, cfg.perturb_scale)
    Z = hm.reference.sample(root.fork("eval"), n_draws)
    preds = model.predict(Z, eye)
    emp_mu, emp_sd = preds.mean(axis=0), preds.std(axis=0, ddof=1)
    mean_ok = np.abs(emp_mu - mu) <= mean_tol
    std_ok = np.abs(emp_sd - sd) <= std_rel_tol * sd
    ok = bool(mean_ok.all() and std_ok.all())
    res = CheckResult(
        "posterior",
        ok,
        {
            "posterior_mean": mu,
            "posterior_std": sd,
            "empirical_mean": emp_mu,
            "empirical_std": emp_sd,
            "optimum_std": optimum_sd,
            "train_seconds": elapsed,
        },
    )
    for k in range(n_arms):
        res.lines.append(
            _line(
                bool(mean_ok[k] and std_ok[k]),
                f"posterior arm {k}: mean {emp_mu[k]:+.4f} vs {mu[k]:+.4f} (tol {mean_tol}), "
                f"std {emp_sd[k]:.4f} vs {sd[k]:.4f} (tol {std_rel_tol:.0%}); "
                f"loss minimizer std {optimum_sd[k]:.4f}",
            )
        )
    res.lines.append(_line(ok, f"posterior: {sgd_steps} SGD steps in {elapsed:.1f}s, {n_draws} index draws"))
    return res


# ---------------------------------------------------------------------------
# ids
# ---------------------------------------------------------------------------


def information_ratio(pi: np.ndarray, r: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``(pi.r)^2 / (pi.v)`` for rows of ``pi``; zero regret counts as ratio 0."""
    num = (pi @ r) ** 2
    den = pi @ v
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den > 0, num / den, np.inf)
    return np.where(num == 0, 0.0, out)


@functools.lru_cache(maxsize=None)
def simplex_grid(k: int, steps: int) -> np.ndarray:
    """All points of the simplex in ``R^k`` with coordinates in multiples of ``1/steps``."""
    pts = []
    for bars in itertools.combinations(range(steps + k - 1), k - 1):
        edges = np.diff(np.concatenate([[-1], bars, [steps + k - 1]])) - 1
        pts.append(edges)
    return np.array(pts, dtype=np.float64) / steps


def grid_minimum(r: np.ndarray, v: np.ndarray, step: float = 1e-3, coarse_steps: int = 12) -> float:
    """Grid-search minimum of the information ratio.

    For ``K <= 3`` the whole simplex is searched at ``step``.  Larger ``K``
    make that grid astronomically big, so every edge (pair of actions) is
    searched at ``step`` and the full simplex on a coarse grid.
    """
    k = len(r)
    fine = int(round(1.0 / step))
    if k == 2:
        q = np.linspace(0.0, 1.0, fine + 1)
        return float(information_ratio(np.stack([q, 1 - q], axis=1), r, v).min())
    if k == 3:
        i, j = np.triu_indices(fine + 1)
        # i + (fine - j) <= fine enumerates every lattice point exactly once
        p0, p1 = i / fine, (j - i) / fine
        grid = np.stack([p0, p1, 1.0 - p0 - p1], axis=1).clip(0.0, 1.0)
        return float(information_ratio(grid, r, v).min())
    q = np.linspace(0.0, 1.0, fine + 1)
    best = np.inf
    for a, b in itertools.combinations(range(k), 2):
        num = (q * r[a] + (1 - q) * r[b]) ** 2
        den = q * v[a] + (1 - q) * v[b]
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = np.where(num == 0, 0.0, np.where(den > 0, num / den, np.inf))
        best = min(best, float(vals.min()))
    return min(best, float(information_ratio(simplex_grid(k, coarse_steps), r, v).min()))


def random_ids_instance(rng: RngStream) -> tuple[np.ndarray, np.ndarray]:
    k = int(rng.integers(7)) + 2
    r = rng.uniform(0.0, 1.0, size=k)
    v = rng.uniform(0.0, 1.0, size=k) ** 2
    pattern = int(rng.integers(4))
    if pattern == 1:
        v[rng.integers(k)] = 0.0  # an uninformative action
    elif pattern == 2:
        r[rng.integers(k)] = 0.0  # a known-optimal action
    if not np.any(v > 0):
        v[0] = 0.5
    return r, v


def check_ids(n_instances: int = 1000, seed: int = 3, step: float = 1e-3) -> CheckResult:
    rng = RngStream(seed)
    worst_gap = -np.inf
    max_support = 0
    for i in range(n_instances):
        r, v = random_ids_instance(rng.fork(i))
        pi = ids_optimize(IdsStats(r, v, np.zeros(len(r), dtype=int)))
        got = float(information_ratio(pi[None, :], r, v)[0])
        worst_gap = max(worst_gap, got - grid_minimum(r, v, step))
        max_support = max(max_support, int(np.count_nonzero(pi)))
        if abs(pi.sum() - 1.0) > 1e-12 or np.any(pi < 0):
            worst_gap = np.inf
    gap_ok = worst_gap <= 1e-9
    support_ok = max_support <= 2
    res = CheckResult("ids", gap_ok and support_ok, {"worst_gap": worst_gap, "max_support": max_support})
    res.lines.append(
        _line(gap_ok, f"ids: {n_instances} instances, max (optimizer - grid) ratio {worst_gap:.3e} (tol 1e-9)")
    )
    res.lines.append(_line(support_ok, f"ids: largest support {max_support} (limit 2)"))
    return res


# ---------------------------------------------------------------------------
# bisection (structural invariants)
# ---------------------------------------------------------------------------


def _repeat_csv_identical() -> bool:
    from hypx.harness import ExperimentConfig, run_many, steps_csv

    cfg = ExperimentConfig(
        env={"kind": "gaussian", "n_arms": 4},
        agent={"kind": "hypermodel", "hypermodel": "linear_diagonal", "index_dim": 2, "additive_prior": True},
        train={"step_size": 0.1, "batch_data": 16, "batch_index": 4},
        horizon=60,
        n_runs=2,
        seed=5,
    )
    return steps_csv(run_many(cfg)) == steps_csv(run_many(cfg))


def check_structure(seed: int = 2) -> CheckResult:
    rng = RngStream(seed)
    res = CheckResult("bisection", True)

    counts = {n: len(bisection_sublists(n)) for n in (4, 8, 16, 32, 64)}
    ok = all(c == n - 2 for n, c in counts.items())
    res.lines.append(_line(ok, f"bisection sublist counts {counts} (expect N - 2)"))
    res.passed &= ok

    hm = hms.SparseSoftmaxHypermodel(rng.uniform(0.0, 3.0, size=32))
    G = hm.map_batch(hm.reference.sample(rng, 10_000))
    simplex_err = float(max(np.abs(G.sum(axis=1) - 1.0).max(), max(0.0, -G.min())))
    ok = simplex_err <= 1e-12
    res.lines.append(_line(ok, f"sparse-softmax outputs on the simplex, max violation {simplex_err:.2e}"))
    res.passed &= ok

    k, m = 4, 3
    hm = hms.init_hypermodel("linear_diagonal", {"n_arms": k, "block_width": m}, "normal", rng)
    arch = bm.LinearArchitecture(k)
    blocks = [slice(i * m, (i + 1) * m) for i in range(k)]
    model = IndexedModel(hm, bm.make_base(arch), None, blocks)
    data = Dataset(k, hm.index_dim)
    for i in range(40):
        arm = i % k
        data.append(np.eye(k)[arm], rng.normal(), make_perturbation(hm.reference, rng, blocks[arm]), arm)
    cfg = TrainConfig(step_size=0.1, batch_data=8, batch_index=4)
    for _ in range(1000):
        sgd_step(model, cfg, data, rng)
    off_block = float(np.abs(hm.mixer[~hm.block_mask]).max())
    ok = off_block == 0.0
    res.lines.append(_line(ok, f"block mask preserved after 1000 SGD steps, max off-block {off_block:g}"))
    res.passed &= ok

    ok = _repeat_csv_identical()
    res.lines.append(_line(ok, "repeated (config, seed) gives a byte-identical steps CSV"))
    res.passed &= ok
    return res


def run_suite(name: str) -> CheckResult:
    if name == "gradients":
        return check_gradients()
    if name == "posterior":
        return check_posterior()
    if name == "ids":
        return check_ids()
    if name == "bisection":
        return check_structure()
    raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
