"""Action selection: Thompson sampling, variance-IDS, epsilon-greedy, conjugate Gaussian TS."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from hypx.numerics import ContractError, RngStream
from hypx.training import Dataset, IndexedModel, TrainConfig, make_perturbation, train_period

log = logging.getLogger(__name__)


class DegenerateInformationError(ValueError):
    """Every action has zero information gain and strictly positive regret."""


# ---------------------------------------------------------------------------
# Thompson sampling
# ---------------------------------------------------------------------------


def ts_select(model: IndexedModel, actions: np.ndarray, rng: RngStream) -> int:
    """Sample one index and act greedily for the base model it selects."""
    z = model.reference.sample(rng, 1)
    values = model.predict(z, actions)[0]
    return int(np.argmax(values))


# ---------------------------------------------------------------------------
# Variance-IDS
# ---------------------------------------------------------------------------


@dataclass
class IdsStats:
    regret: np.ndarray  # r_x
    variance: np.ndarray  # v_x
    partition_sizes: np.ndarray


def ids_stats(samples: np.ndarray) -> IdsStats:
    """Expected regret and optimal-action variance from a ``(n_samples, K)`` reward matrix.

    Each row (one sampled model) is assigned to its argmax action, lowest
    index first on ties.  ``variance[x]`` is the between-group variance of
    column ``x`` over that partition.
    """
    S = np.asarray(samples, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] < 2:
        raise ContractError("ids_stats needs at least two sampled models")
    M, K = S.shape
    best = np.argmax(S, axis=1)
    regret = np.mean(S.max(axis=1)[:, None] - S, axis=0)
    counts = np.bincount(best, minlength=K)
    group_sums = np.zeros((K, K))
    np.add.at(group_sums, best, S)
    overall = S.mean(axis=0)
    present = counts > 0
    cond = group_sums[present] / counts[present, None]
    variance = (counts[present, None] / M * (cond - overall) ** 2).sum(axis=0)
    return IdsStats(np.maximum(regret, 0.0), variance, counts)


def _information_ratio(q, ra, rb, va, vb):
    num = (q * ra + (1 - q) * rb) ** 2
    den = q * va + (1 - q) * vb
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den > 1e-12, num / den, np.inf)


def ids_optimize(stats: IdsStats) -> np.ndarray:
    """Minimize ``(pi . r)^2 / (pi . v)`` over the simplex.

    The minimum is attained on at most two actions, so every pair ``(a, b)``
    is searched over ``q`` in ``[0, 1]`` (mass ``q`` on ``a``): endpoints,
    the zero of the numerator and the stationary point of the ratio.
    Ties go to the lexicographically smallest ``(a, b, q)``.
    """
    r = np.asarray(stats.regret, dtype=np.float64)
    v = np.asarray(stats.variance, dtype=np.float64)
    K = len(r)
    pi = np.zeros(K)
    zero_regret = np.flatnonzero(r == 0.0)
    if len(zero_regret):
        # a zero-regret action drives the ratio to zero (or its infimum)
        pi[zero_regret[0]] = 1.0
        return pi
    if not np.any(v > 0.0):
        raise DegenerateInformationError("all actions have zero variance and positive regret")

    a_idx, b_idx = np.triu_indices(K)
    ra, rb, va, vb = r[a_idx], r[b_idx], v[a_idx], v[b_idx]
    dr, dv = ra - rb, va - vb
    with np.errstate(divide="ignore", invalid="ignore"):
        q_root = np.where(dr != 0, -rb / dr, 0.0)
        q_stat = np.where(dr * dv != 0, (rb * dv - 2.0 * dr * vb) / (dr * dv), 0.0)
    cands = np.stack([np.zeros_like(ra), np.ones_like(ra), q_root, q_stat], axis=1)
    cands = np.clip(np.nan_to_num(cands, nan=0.0, posinf=1.0, neginf=0.0), 0.0, 1.0)
    cands.sort(axis=1)
    psi = _information_ratio(cands, ra[:, None], rb[:, None], va[:, None], vb[:, None])
    best = psi.min()
    if not np.isfinite(best):
        raise DegenerateInformationError("no action mixture has a usable variance")
    # pairs are in (a, b) lexicographic order and q is sorted within a pair,
    # so the first flat argmin is the lexicographically smallest tie
    flat = int(np.flatnonzero(psi.reshape(-1) == best)[0])
    p, j = divmod(flat, cands.shape[1])
    q = cands[p, j]
    pi[a_idx[p]] += q
    pi[b_idx[p]] += 1.0 - q
    return pi


def ids_select(model: IndexedModel, actions: np.ndarray, n_samples: int, rng: RngStream) -> int:
    """Sample ``n_samples`` models, optimize the information ratio, draw an action.

    Falls back to Thompson sampling when the samples carry no information.
    """
    if n_samples < 2:
        raise ContractError("ids_select needs at least two samples")
    Z = model.reference.sample(rng, n_samples)
    stats = ids_stats(model.predict(Z, actions))
    try:
        pi = ids_optimize(stats)
    except DegenerateInformationError:
        log.debug("degenerate IDS period, falling back to Thompson sampling")
        return ts_select(model, actions, rng)
    return rng.choice(pi)


# ---------------------------------------------------------------------------
# Baselines
# ---------------------------------------------------------------------------


def epsilon_schedule(t: int, eps0: float, tau: float) -> float:
    return eps0 * tau / (tau + t)


def eps_greedy_select(means: np.ndarray, t: int, eps0: float, tau: float, rng: RngStream) -> int:
    """Uniform action with probability ``eps0 * tau / (tau + t)``, else greedy.

    Unvisited arms should be passed as ``+inf`` so each is tried once.
    """
    means = np.asarray(means)
    if rng.random() < epsilon_schedule(t, eps0, tau):
        return int(rng.integers(len(means)))
    return int(np.argmax(means))


@dataclass(frozen=True)
class GaussianArmPosterior:
    means: np.ndarray
    variances: np.ndarray

    @classmethod
    def prior(cls, n_arms: int, mean: float = 0.0, var: float = 1.0) -> "GaussianArmPosterior":
        return cls(np.full(n_arms, float(mean)), np.full(n_arms, float(var)))


def gaussian_update(mean: float, var: float, y: float, noise_var: float) -> tuple[float, float]:
    new_var = 1.0 / (1.0 / var + 1.0 / noise_var)
    return new_var * (mean / var + y / noise_var), new_var


def gaussian_posterior_update(
    post: GaussianArmPosterior, arm: int, y: float, noise_var: float
) -> GaussianArmPosterior:
    if not noise_var > 0:
        raise ContractError("noise_var must be > 0")
    means, variances = post.means.copy(), post.variances.copy()
    means[arm], variances[arm] = gaussian_update(means[arm], variances[arm], y, noise_var)
    return GaussianArmPosterior(means, variances)


# ---------------------------------------------------------------------------
# Agents driven by the harness
# ---------------------------------------------------------------------------


class Agent:
    """``select`` picks an action index; ``observe`` feeds back the reward."""

    n_params_per_index = 0
    train_config: TrainConfig | None = None

    def select(self, t: int, rng: RngStream) -> int:
        raise NotImplementedError

    def observe(self, action: int, reward: float, rng: RngStream) -> None:
        raise NotImplementedError


class HypermodelAgent(Agent):
    """Hypermodel agent trained by perturbed SGD after every observation."""

    def __init__(
        self,
        model: IndexedModel,
        actions: np.ndarray,
        cfg: TrainConfig,
        exploration: str = "ts",
        ids_samples: int = 500,
    ):
        if exploration not in ("ts", "ids"):
            raise ValueError(f"unknown exploration scheme {exploration!r}")
        self.model = model
        self.actions = np.asarray(actions, dtype=np.float64)
        self.train_config = cfg
        self.exploration = exploration
        self.ids_samples = ids_samples
        self.data = Dataset(self.actions.shape[1], model.index_dim)
        self.n_params_per_index = model.hypermodel.params_per_index()

    def select(self, t, rng):
        if self.exploration == "ids":
            return ids_select(self.model, self.actions, self.ids_samples, rng)
        return ts_select(self.model, self.actions, rng)

    def observe(self, action, reward, rng):
        blocks = self.model.action_blocks
        a = make_perturbation(self.model.reference, rng, blocks[action] if blocks else None)
        self.data.append(self.actions[action], reward, a, action)
        train_period(self.model, self.train_config, self.data, rng)


class EpsilonGreedyAgent(Agent):
    def __init__(self, n_actions: int, eps0: float, tau: float):
        self.sums = np.zeros(n_actions)
        self.counts = np.zeros(n_actions)
        self.eps0, self.tau = eps0, tau

    def select(self, t, rng):
        with np.errstate(divide="ignore", invalid="ignore"):
            means = np.where(self.counts > 0, self.sums / self.counts, np.inf)
        return eps_greedy_select(means, t, self.eps0, self.tau, rng)

    def observe(self, action, reward, rng):
        self.sums[action] += reward
        self.counts[action] += 1


class IndependentGaussianTSAgent(Agent):
    """Exact TS treating every action as an independent Gaussian arm."""

    def __init__(self, n_actions: int, prior_mean: float = 0.0, prior_var: float = 1.0, noise_var: float = 1.0):
        self.means = np.full(n_actions, float(prior_mean))
        self.variances = np.full(n_actions, float(prior_var))
        self.noise_var = noise_var

    @property
    def posterior(self) -> GaussianArmPosterior:
        return GaussianArmPosterior(self.means.copy(), self.variances.copy())

    def select(self, t, rng):
        draw = self.means + np.sqrt(self.variances) * rng.normal(size=len(self.means))
        return int(np.argmax(draw))

    def observe(self, action, reward, rng):
        self.means[action], self.variances[action] = gaussian_update(
            self.means[action], self.variances[action], reward, self.noise_var
        )
