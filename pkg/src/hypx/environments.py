"""Synthetic bandit environments with exact expected rewards."""

from __future__ import annotations

import numpy as np

from hypx import numerics as nx
from hypx.base_models import MlpArchitecture, mlp_forward
from hypx.numerics import ConfigurationError, ContractError, RngStream


class BanditEnv:
    """Finite action set ``actions`` (rows) with known mean rewards.

    Subclasses set ``actions``, ``expected_rewards`` and ``noise_std``.
    """

    kind = "base"
    actions: np.ndarray
    expected_rewards: np.ndarray
    noise_std: float

    @property
    def n_actions(self) -> int:
        return len(self.expected_rewards)

    @property
    def optimal_reward(self) -> float:
        return float(self.expected_rewards.max())

    def _check(self, action: int) -> int:
        if not 0 <= action < self.n_actions:
            raise ContractError(f"action {action} out of range [0, {self.n_actions})")
        return int(action)

    def step(self, action: int, rng: RngStream) -> float:
        """Noisy reward for ``action`` drawn from ``rng``."""
        action = self._check(action)
        mean = self.expected_rewards[action]
        if self.noise_std == 0.0:
            return float(mean)
        return float(mean + self.noise_std * rng.normal())

    def regret(self, action: int) -> float:
        action = self._check(action)
        return float(self.optimal_reward - self.expected_rewards[action])

    def descriptor(self) -> dict:
        raise NotImplementedError


class GaussianBanditEnv(BanditEnv):
    """Independent arms with means drawn from N(0, prior_var); actions are one-hot."""

    kind = "gaussian"

    def __init__(self, n_arms: int, rng: RngStream, prior_var: float = 2.25, noise_std: float = 1.0):
        if n_arms < 1:
            raise ConfigurationError("need at least one arm")
        self.prior_var = prior_var
        self.noise_std = float(noise_std)
        self.theta = rng.normal(size=n_arms, scale=np.sqrt(prior_var))
        self.expected_rewards = self.theta
        self.actions = np.eye(n_arms)

    def descriptor(self):
        return {"kind": self.kind, "n_arms": self.n_actions, "prior_var": self.prior_var, "noise_std": self.noise_std}


NN_GENERATOR_WEIGHT_VARS = (2.25, 2.25 / 3, 2.25 / 3)


class NnBanditEnv(BanditEnv):
    """Rewards from a random ReLU network on actions sampled from the unit sphere."""

    kind = "nn"

    def __init__(
        self,
        n_actions: int,
        rng: RngStream,
        input_dim: int = 20,
        hidden: tuple[int, ...] = (3, 3),
        weight_vars=NN_GENERATOR_WEIGHT_VARS,
        bias_var: float = 1.0,
        noise_std: float = 1.0,
    ):
        if n_actions < 1:
            raise ConfigurationError("need at least one action")
        if len(weight_vars) != len(hidden) + 1:
            raise ConfigurationError("need one weight variance per layer")
        self.arch = MlpArchitecture(input_dim, tuple(hidden), 1)
        self.noise_std = float(noise_std)
        self.weight_vars = tuple(weight_vars)
        self.bias_var = bias_var
        layers = []
        for (fi, fo, _, _), wv in zip(self.arch.layout, weight_vars):
            W = rng.normal(size=(fi, fo), scale=np.sqrt(wv))
            b = rng.normal(size=fo, scale=np.sqrt(bias_var))
            layers.append((W, b))
        self.generator = self.arch.pack(layers)
        self.actions = nx.sample_hypersphere(rng, input_dim, size=n_actions)
        self.expected_rewards = mlp_forward(self.arch, self.generator, self.actions)

    def descriptor(self):
        return {
            "kind": self.kind,
            "n_actions": self.n_actions,
            "input_dim": self.arch.input_dim,
            "hidden": list(self.arch.hidden_widths),
            "weight_vars": list(self.weight_vars),
            "bias_var": self.bias_var,
            "noise_std": self.noise_std,
        }


def bisection_sublists(n: int) -> list[tuple[int, int]]:
    """Half-open ranges ``[lo, hi)`` of every non-root bisection node with >= 2 elements.

    Odd-length ranges give the extra element to the first half.  Listed in
    breadth-first order.
    """
    out = []
    frontier = [(0, n)]
    while frontier:
        nxt = []
        for lo, hi in frontier:
            if hi - lo < 2:
                continue
            mid = lo + (hi - lo + 1) // 2
            for child in ((lo, mid), (mid, hi)):
                if child[1] - child[0] >= 2:
                    out.append(child)
                    nxt.append(child)
        frontier = nxt
    return out


class SparseLinearBanditEnv(BanditEnv):
    """One-sparse linear bandit: one-hot actions plus halved bisection indicators."""

    kind = "sparse"

    def __init__(self, dim: int, rng: RngStream, noise_std: float = 1.0):
        if dim < 4:
            raise ConfigurationError("one-sparse bandit needs dim >= 4")
        self.dim = dim
        self.noise_std = float(noise_std)
        self.spike = int(rng.integers(dim))
        self.theta = np.zeros(dim)
        self.theta[self.spike] = 1.0
        self.sublists = bisection_sublists(dim)
        halves = np.zeros((len(self.sublists), dim))
        for i, (lo, hi) in enumerate(self.sublists):
            halves[i, lo:hi] = 0.5
        self.actions = np.vstack([np.eye(dim), halves])
        self.expected_rewards = self.actions @ self.theta

    def descriptor(self):
        return {"kind": self.kind, "dim": self.dim, "noise_std": self.noise_std}


def env_new(kind: str, params: dict, rng: RngStream) -> BanditEnv:
    """Construct an environment; ``params`` holds the constructor keywords."""
    params = dict(params)
    try:
        if kind == "gaussian":
            return GaussianBanditEnv(params.pop("n_arms"), rng, **params)
        if kind == "nn":
            return NnBanditEnv(params.pop("n_actions"), rng, **params)
        if kind == "sparse":
            return SparseLinearBanditEnv(params.pop("dim"), rng, **params)
    except (KeyError, TypeError) as exc:
        raise ConfigurationError(f"bad parameters for {kind} environment: {exc}") from exc
    raise ConfigurationError(f"unknown environment kind {kind!r}")
