"""Experiment orchestration: config files, the bandit loop, aggregation and CSV output."""

from __future__ import annotations

import configparser
import csv
import io
import itertools
import json
import logging
import multiprocessing
import os
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from hypx import base_models as bm
from hypx import hypermodels as hms
from hypx.agents import Agent, EpsilonGreedyAgent, HypermodelAgent, IndependentGaussianTSAgent
from hypx.environments import BanditEnv, env_new
from hypx.numerics import ConfigurationError, ContractError, RngStream
from hypx.training import IndexedModel, TrainConfig

log = logging.getLogger(__name__)

STEP_HEADER = ["run", "seed", "t", "action", "reward", "regret", "cum_regret"]
SUMMARY_HEADER = ["run", "seed", "horizon", "cum_regret", "avg_regret", "computation"]


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

ENV_KEYS = {
    "kind": str,
    "n_arms": int,
    "n_actions": int,
    "dim": int,
    "prior_var": float,
    "noise_std": float,
    "input_dim": int,
    "hidden": "ints",
    "bias_var": float,
}

AGENT_KEYS = {
    "kind": str,  # hypermodel | epsilon_greedy | independent_ts
    "hypermodel": str,  # ensemble | linear | linear_diagonal | hypernetwork | sparse_softmax
    "index_dim": int,
    "init": str,
    "init_std": float,
    "base_hidden": "ints",
    "hypernet_hidden": "ints",
    "additive_prior": bool,
    "prior_multiplier": float,
    "exploration": str,
    "ids_samples": int,
    "softmax_offset": float,
    "softmax_temperature": float,
    "eps0": float,
    "tau": float,
    "ts_prior_mean": float,
    "ts_prior_var": float,
    "ts_noise_var": float,
}

TRAIN_KEYS = {
    "step_size": float,
    "noise_var": float,
    "prior_var": float,
    "perturb_scale": float,
    "batch_data": int,
    "batch_index": int,
    "sgd_per_period": int,
    "clip_norm": float,
}

HARNESS_KEYS = {"horizon": int, "n_runs": int, "seed": int, "write_steps": bool}

SECTIONS = {"env": ENV_KEYS, "agent": AGENT_KEYS, "train": TRAIN_KEYS, "harness": HARNESS_KEYS}


def _parse_value(kind, raw: str):
    raw = raw.strip()
    if kind is bool:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigurationError(f"not a boolean: {raw!r}")
    if kind == "ints":
        return tuple(int(v) for v in raw.replace(",", " ").split())
    try:
        return kind(raw)
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce an experiment.

    ``env``, ``agent`` and ``train`` are flat dicts of typed values; ``sweep``
    maps ``"section.key"`` to the list of values a grid sweep visits.
    """

    env: dict
    agent: dict
    train: dict = field(default_factory=dict)
    horizon: int = 1000
    n_runs: int = 1
    seed: int = 0
    write_steps: bool = True
    sweep: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, allowed in (("env", ENV_KEYS), ("agent", AGENT_KEYS), ("train", TRAIN_KEYS)):
            unknown = set(getattr(self, name)) - set(allowed)
            if unknown:
                raise ConfigurationError(f"unknown [{name}] keys: {sorted(unknown)}")
        if "kind" not in self.env or "kind" not in self.agent:
            raise ConfigurationError("[env] and [agent] both need a 'kind'")
        if self.horizon < 0 or self.n_runs < 1:
            raise ConfigurationError("horizon must be >= 0 and n_runs >= 1")

    def train_config(self) -> TrainConfig:
        return TrainConfig(**self.train)

    def with_overrides(self, overrides: dict) -> "ExperimentConfig":
        """Copy with ``{"section.key": value}`` overrides applied."""
        env, agent, train = dict(self.env), dict(self.agent), dict(self.train)
        harness = {"horizon": self.horizon, "n_runs": self.n_runs, "seed": self.seed, "write_steps": self.write_steps}
        targets = {"env": env, "agent": agent, "train": train, "harness": harness}
        for dotted, value in overrides.items():
            section, key = _split_key(dotted)
            targets[section][key] = value
        return replace(self, env=env, agent=agent, train=train, sweep={}, **harness)

    def to_dict(self) -> dict:
        return {
            "env": self.env,
            "agent": self.agent,
            "train": self.train,
            "harness": {"horizon": self.horizon, "n_runs": self.n_runs, "seed": self.seed},
            "sweep": self.sweep,
        }


def _split_key(dotted: str) -> tuple[str, str]:
    section, _, key = dotted.partition(".")
    if section not in SECTIONS or key not in SECTIONS[section]:
        raise ConfigurationError(f"unknown sweep key {dotted!r}")
    return section, key


def parse_config(text: str) -> ExperimentConfig:
    """Parse the INI-style config format (sections env, agent, train, harness, sweep)."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    cp.optionxform = str
    cp.read_string(text)
    extra = set(cp.sections()) - set(SECTIONS) - {"sweep"}
    if extra:
        raise ConfigurationError(f"unknown sections: {sorted(extra)}")
    values: dict[str, dict] = {}
    for section, allowed in SECTIONS.items():
        values[section] = {}
        if not cp.has_section(section):
            continue
        for key, raw in cp.items(section):
            if key not in allowed:
                raise ConfigurationError(f"unknown key {key!r} in [{section}]")
            values[section][key] = _parse_value(allowed[key], raw)
    sweep = {}
    if cp.has_section("sweep"):
        for dotted, raw in cp.items("sweep"):
            section, key = _split_key(dotted)
            kind = SECTIONS[section][key]
            sweep[dotted] = [_parse_value(kind, v) for v in raw.split(";" if kind == "ints" else ",")]
    return ExperimentConfig(
        env=values["env"], agent=values["agent"], train=values["train"], sweep=sweep, **values["harness"]
    )


def load_config(path: str) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


# ---------------------------------------------------------------------------
# Building environments and agents
# ---------------------------------------------------------------------------


def make_env(cfg: ExperimentConfig, rng: RngStream) -> BanditEnv:
    params = {k: v for k, v in cfg.env.items() if k != "kind"}
    return env_new(cfg.env["kind"], params, rng)


def _layer_blocks(arch: bm.MlpArchitecture, index_dim: int) -> list[tuple[int, int]]:
    n_layers = len(arch.layout)
    if index_dim % n_layers:
        raise ConfigurationError(f"index_dim {index_dim} must split evenly over {n_layers} layers")
    width = index_dim // n_layers
    return [(fi * fo + fo, width) for fi, fo, _, _ in arch.layout]


def build_model(cfg: ExperimentConfig, env: BanditEnv, rng: RngStream) -> IndexedModel:
    """Hypermodel + base model (+ prior) for ``env`` as described by ``cfg.agent``."""
    a = cfg.agent
    kind = a.get("hypermodel", "linear_diagonal")
    env_kind = env.kind
    n_x = env.actions.shape[1]
    n_z = a.get("index_dim", 10)
    init = a.get("init", "ones" if kind == "sparse_softmax" else "normal")
    init_dims = {"std": a.get("init_std", 0.05)}

    if env_kind == "nn":
        base_arch = bm.MlpArchitecture(n_x, tuple(a.get("base_hidden", (10, 10))), 1)
        prior_arch = env.arch
    else:
        base_arch = bm.LinearArchitecture(n_x)
        prior_arch = base_arch
    base = bm.make_base(base_arch)
    n_theta = base_arch.param_count

    action_blocks = None
    if kind == "ensemble":
        hm = hms.init_hypermodel(kind, {"n_theta": n_theta, "n_particles": n_z, **init_dims}, init, rng)
    elif kind == "linear":
        hm = hms.init_hypermodel(kind, {"n_theta": n_theta, "index_dim": n_z, **init_dims}, init, rng)
    elif kind == "linear_diagonal":
        if env_kind != "gaussian":
            raise ConfigurationError("linear_diagonal hypermodels model independent arms (gaussian env)")
        hm = hms.init_hypermodel(kind, {"n_arms": n_theta, "block_width": n_z, **init_dims}, init, rng)
        action_blocks = [slice(k * n_z, (k + 1) * n_z) for k in range(n_theta)]
    elif kind == "hypernetwork":
        dims = {"n_theta": n_theta, "index_dim": n_z, "hidden": a.get("hypernet_hidden", ()), **init_dims}
        hm = hms.init_hypermodel(kind, dims, init, rng)
    elif kind == "sparse_softmax":
        dims = {
            "n_theta": n_theta,
            "offset": a.get("softmax_offset", 0.01),
            "temperature": a.get("softmax_temperature", 10.0),
        }
        hm = hms.init_hypermodel(kind, dims, init, rng)
    else:
        raise ConfigurationError(f"unknown hypermodel {kind!r}")

    prior = None
    if a.get("additive_prior", False):
        mult = a.get("prior_multiplier", 1.0)
        idx = hm.index_dim
        if env_kind == "nn":
            scale = bm.gaussian_prior_scale(prior_arch, env.weight_vars, env.bias_var, mult)
        else:
            scale = np.full(prior_arch.param_count, np.sqrt(cfg.env.get("prior_var", 2.25) * mult))
        if kind == "ensemble":
            mixer = rng.normal(size=(prior_arch.param_count, idx))
        elif kind == "linear_diagonal":
            mixer = hms.make_block_diagonal_mixer([(1, n_z)] * n_theta, rng)
        elif env_kind == "nn":
            mixer = hms.make_block_diagonal_mixer(_layer_blocks(prior_arch, idx), rng)
        else:
            mixer = hms.make_block_diagonal_mixer([(prior_arch.param_count, idx)], rng)
        prior = bm.AdditivePriorSpec(scale, mixer, prior_arch)
    return IndexedModel(hm, base, prior, action_blocks)


def make_agent(cfg: ExperimentConfig, env: BanditEnv, rng: RngStream) -> Agent:
    a = cfg.agent
    kind = a["kind"]
    if kind == "hypermodel":
        model = build_model(cfg, env, rng)
        return HypermodelAgent(
            model, env.actions, cfg.train_config(), a.get("exploration", "ts"), a.get("ids_samples", 500)
        )
    if kind == "epsilon_greedy":
        return EpsilonGreedyAgent(env.n_actions, a.get("eps0", 1.0), a.get("tau", 100.0))
    if kind == "independent_ts":
        return IndependentGaussianTSAgent(
            env.n_actions, a.get("ts_prior_mean", 0.0), a.get("ts_prior_var", 1.0), a.get("ts_noise_var", 1.0)
        )
    raise ConfigurationError(f"unknown agent kind {kind!r}")


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------


class RunRecord(NamedTuple):
    run: int
    seed: int
    t: int
    action: int
    reward: float
    regret: float
    cum_regret: float


def computation(n_sgd: int, n_z: int, n_data: int, n_params: int) -> int:
    """Per-period arithmetic estimate ``n_sgd * n_z * n_data * n_params``."""
    if min(n_sgd, n_z, n_data, n_params) < 0:
        raise ContractError("computation arguments must be >= 0")
    return int(n_sgd) * int(n_z) * int(n_data) * int(n_params)


def n_params_per_index(cfg: ExperimentConfig, env: BanditEnv | None = None) -> int:
    """Hypermodel parameters touched when mapping one index (0 for non-hypermodel agents)."""
    if cfg.agent["kind"] != "hypermodel":
        return 0
    if env is None:
        env = make_env(cfg, RngStream(cfg.seed).fork("env"))
    return build_model(cfg, env, RngStream(0)).hypermodel.params_per_index()


def config_computation(cfg: ExperimentConfig, env: BanditEnv | None = None) -> int:
    if cfg.agent["kind"] != "hypermodel":
        return 0
    t = cfg.train_config()
    return computation(t.sgd_per_period, t.batch_index, t.batch_data, n_params_per_index(cfg, env))


def run_seed(cfg: ExperimentConfig, run: int) -> int:
    return cfg.seed + run


def run_bandit(cfg: ExperimentConfig, run: int = 0) -> list[RunRecord]:
    """Simulate one run: select, observe, record regret, train.

    The environment and its noise come from streams keyed only by the run
    seed, so different agents with the same seed face the same problem.
    """
    seed = run_seed(cfg, run)
    root = RngStream(seed)
    env = make_env(cfg, root.fork("env"))
    noise = root.fork("noise")
    agent_rng = root.fork("agent")
    agent = make_agent(cfg, env, agent_rng)
    records = []
    cum = 0.0
    for t in range(cfg.horizon):
        action = agent.select(t, agent_rng)
        reward = env.step(action, noise)
        regret = env.regret(action)
        cum += regret
        records.append(RunRecord(run, seed, t, action, reward, regret, cum))
        agent.observe(action, reward, agent_rng)
    return records


@dataclass
class Aggregate:
    mean_cum_regret: np.ndarray
    stderr_cum_regret: np.ndarray
    summaries: list[dict]

    @property
    def mean_avg_regret(self) -> float:
        return float(np.mean([s["avg_regret"] for s in self.summaries]))

    @property
    def mean_final_cum_regret(self) -> float:
        return float(np.mean([s["cum_regret"] for s in self.summaries]))


def summarize_run(records: list[RunRecord], comp: int = 0) -> dict:
    if not records:
        raise ContractError("cannot summarize an empty run")
    last = records[-1]
    horizon = len(records)
    return {
        "run": last.run,
        "seed": last.seed,
        "horizon": horizon,
        "cum_regret": last.cum_regret,
        "avg_regret": last.cum_regret / horizon,
        "computation": comp,
    }


def aggregate(runs: list[list[RunRecord]], comp: int = 0) -> Aggregate:
    """Pointwise mean and standard error of cumulative regret plus per-run summaries."""
    if not runs:
        raise ContractError("aggregate needs at least one run")
    horizons = {len(r) for r in runs}
    if len(horizons) != 1:
        raise ContractError(f"runs have mismatched horizons: {sorted(horizons)}")
    curves = np.array([[rec.cum_regret for rec in r] for r in runs], dtype=np.float64)
    mean = curves.mean(axis=0)
    if len(runs) > 1:
        stderr = curves.std(axis=0, ddof=1) / np.sqrt(len(runs))
    else:
        stderr = np.zeros_like(mean)
    return Aggregate(mean, stderr, [summarize_run(r, comp) for r in runs])


def meets_target(summaries: list[dict], n_actions: int) -> bool:
    """Mean per-run average regret below ``0.01 * sqrt(n_actions)``."""
    return float(np.mean([s["avg_regret"] for s in summaries])) < 0.01 * np.sqrt(n_actions)


def _run_job(args):
    cfg, run = args
    return run_bandit(cfg, run)


def run_many(cfg: ExperimentConfig, threads: int = 1) -> list[list[RunRecord]]:
    """All ``cfg.n_runs`` runs, ordered by run id whatever the worker count."""
    jobs = [(cfg, r) for r in range(cfg.n_runs)]
    if threads <= 1 or cfg.n_runs == 1:
        return [_run_job(j) for j in jobs]
    with multiprocessing.get_context("fork").Pool(threads) as pool:
        return pool.map(_run_job, jobs)


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def steps_csv(runs: list[list[RunRecord]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(STEP_HEADER)
    for records in runs:
        for rec in records:
            w.writerow([_fmt(v) for v in rec])
    return buf.getvalue()


def summary_csv(summaries: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    for s in summaries:
        w.writerow([_fmt(s[k]) for k in SUMMARY_HEADER])
    return buf.getvalue()


def run_metadata(cfg: ExperimentConfig) -> dict:
    envs = []
    for run in range(cfg.n_runs):
        seed = run_seed(cfg, run)
        envs.append({"run": run, "seed": seed, **make_env(cfg, RngStream(seed).fork("env")).descriptor()})
    return {"config": cfg.to_dict(), "environments": envs}


def run_experiment(cfg: ExperimentConfig, out_dir: str | None = None, threads: int = 1) -> Aggregate:
    """Run every seed, write ``steps.csv``, ``summary.csv`` and ``metadata.json`` to ``out_dir``."""
    runs = run_many(cfg, threads)
    comp = config_computation(cfg) if cfg.n_runs else 0
    agg = aggregate(runs, comp) if cfg.horizon > 0 else Aggregate(np.zeros(0), np.zeros(0), [])
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        if cfg.write_steps:
            with open(os.path.join(out_dir, "steps.csv"), "w", encoding="utf-8", newline="") as fh:
                fh.write(steps_csv(runs))
        with open(os.path.join(out_dir, "summary.csv"), "w", encoding="utf-8", newline="") as fh:
            fh.write(summary_csv(agg.summaries))
        with open(os.path.join(out_dir, "metadata.json"), "w", encoding="utf-8") as fh:
            json.dump(run_metadata(cfg), fh, indent=2, sort_keys=True)
    return agg


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------


def sweep_points(cfg: ExperimentConfig) -> list[dict]:
    keys = sorted(cfg.sweep)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(cfg.sweep[k] for k in keys))]


def _sweep_row(cfg: ExperimentConfig, i: int, point: dict, out_dir: str | None, threads: int) -> dict:
    sub = cfg.with_overrides(point)
    sub_dir = None if out_dir is None else os.path.join(out_dir, f"point_{i:03d}")
    agg = run_experiment(sub, sub_dir, threads)
    avg = np.array([s["avg_regret"] for s in agg.summaries])
    row = {
        "point": i,
        **point,
        "n_runs": len(avg),
        "mean_cum_regret": agg.mean_final_cum_regret,
        "mean_avg_regret": float(avg.mean()),
        "stderr_avg_regret": float(avg.std(ddof=1) / np.sqrt(len(avg))) if len(avg) > 1 else 0.0,
        "computation": config_computation(sub),
    }
    log.info("sweep point %d %s: mean avg regret %.5f", i, point, row["mean_avg_regret"])
    return row


def write_sweep_csv(cfg: ExperimentConfig, rows: list[dict], out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    keys = sorted(cfg.sweep)
    header = ["point", *keys, "n_runs", "mean_cum_regret", "mean_avg_regret", "stderr_avg_regret", "computation"]
    with open(os.path.join(out_dir, "sweep.csv"), "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(row[k]) if not isinstance(row[k], tuple) else " ".join(map(str, row[k])) for k in header])


def run_sweep(cfg: ExperimentConfig, out_dir: str | None = None, threads: int = 1) -> list[dict]:
    """One summary row per grid point; each point also gets its own output directory."""
    rows = [_sweep_row(cfg, i, point, out_dir, threads) for i, point in enumerate(sweep_points(cfg))]
    if out_dir is not None:
        write_sweep_csv(cfg, rows, out_dir)
    return rows


def cheapest_passing(
    cfg: ExperimentConfig,
    threshold: float,
    max_computation: int | None = None,
    out_dir: str | None = None,
    threads: int = 1,
) -> tuple[dict | None, list[dict]]:
    """Walk the sweep grid in increasing computation and stop at the first point
    whose mean average regret is below ``threshold``.

    Points of equal computation keep their grid order.  Because every cheaper
    point has been run and missed, the returned row has the minimal swept
    computation.  Points above ``max_computation`` are never run; the search
    then reports ``None``.  Returns ``(row or None, rows evaluated)``.
    """
    points = list(enumerate(sweep_points(cfg)))
    points.sort(key=lambda ip: config_computation(cfg.with_overrides(ip[1])))
    rows = []
    found = None
    for i, point in points:
        if max_computation is not None and config_computation(cfg.with_overrides(point)) > max_computation:
            break
        rows.append(_sweep_row(cfg, i, point, out_dir, threads))
        if rows[-1]["mean_avg_regret"] < threshold:
            found = rows[-1]
            break
    if out_dir is not None:
        write_sweep_csv(cfg, rows, out_dir)
    return found, rows


def minimal_computation(rows: list[dict], threshold: float) -> int | None:
    """Smallest computation among sweep rows whose mean average regret is below ``threshold``."""
    ok = [r["computation"] for r in rows if r["mean_avg_regret"] < threshold]
    return min(ok) if ok else None


