"""Perturbed stochastic gradient descent for hypermodels.

The trained object is an :class:`IndexedModel`: a hypermodel, the base model
it parameterizes, and optionally a fixed additive prior network sharing the
same index.  Predictions for index ``z`` and action ``x`` are

    prior(D B z)(x) + base(g(z))(x)

and training minimizes the minibatch loss of :func:`approx_loss`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hypx import numerics as nx
from hypx.base_models import AdditivePriorSpec, BaseModel
from hypx.hypermodels import Hypermodel, ReferenceDistribution
from hypx.numerics import ConfigurationError, ContractError, InvalidDimensionError, Node, RngStream


@dataclass(frozen=True)
class TrainConfig:
    step_size: float
    noise_var: float = 1.0
    prior_var: float = 1.0
    perturb_scale: float = 1.0
    batch_data: int = 32
    batch_index: int = 8
    sgd_per_period: int = 1
    clip_norm: float = 0.0  # 0 disables clipping

    def __post_init__(self):
        for name in ("step_size", "noise_var", "prior_var"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be > 0")
        if self.perturb_scale < 0:
            raise ConfigurationError("perturb_scale must be >= 0")
        for name in ("batch_data", "batch_index"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        if self.sgd_per_period < 0:
            raise ConfigurationError("sgd_per_period must be >= 0")
        if self.clip_norm < 0:
            raise ConfigurationError("clip_norm must be >= 0")


class IndexedModel:
    """Hypermodel + base model (+ optional additive prior) under one index.

    ``action_blocks`` optionally maps an action index to the slice of the
    index vector that perturbations for that action live in (per-arm
    blocks of the diagonal hypermodel).
    """

    def __init__(
        self,
        hypermodel: Hypermodel,
        base: BaseModel,
        prior: AdditivePriorSpec | None = None,
        action_blocks: list[slice] | None = None,
    ):
        if hypermodel.output_dim != base.param_count:
            raise InvalidDimensionError(
                f"hypermodel emits {hypermodel.output_dim} parameters, base model needs {base.param_count}"
            )
        if prior is not None and prior.index_dim != hypermodel.index_dim:
            raise InvalidDimensionError("prior and hypermodel must share the index dimension")
        self.hypermodel = hypermodel
        self.base = base
        self.prior = prior
        self.action_blocks = action_blocks
        self.initial_params = hypermodel.copy_params()

    @property
    def reference(self) -> ReferenceDistribution:
        return self.hypermodel.reference

    @property
    def index_dim(self) -> int:
        return self.hypermodel.index_dim

    def predict(self, Z: np.ndarray, X: np.ndarray) -> np.ndarray:
        """``(n_z, n)`` matrix of f_{g(z)}(x) for index rows ``Z`` and action rows ``X``."""
        out = self.base.evaluate(self.hypermodel.map_batch(Z), X)
        if self.prior is not None:
            out = out + self.prior.evaluate(Z, X)
        return out

    def initial_map(self, Z: np.ndarray) -> np.ndarray:
        """Hypermodel output at the parameters captured on construction."""
        hm = self.hypermodel
        current = hm.params
        hm.params = self.initial_params
        try:
            return hm.map_batch(Z)
        finally:
            hm.params = current


class Dataset:
    """Augmented data ``(x, y, a)``; perturbation vectors are fixed on insertion."""

    def __init__(self, action_dim: int, index_dim: int, capacity: int = 1024):
        self._x = np.zeros((capacity, action_dim))
        self._y = np.zeros(capacity)
        self._a = np.zeros((capacity, index_dim))
        self._actions = np.zeros(capacity, dtype=np.int64)
        self.size = 0

    def __len__(self):
        return self.size

    def append(self, x: np.ndarray, y: float, a: np.ndarray, action: int = -1):
        if self.size == len(self._y):
            grow = len(self._y)
            self._x = np.concatenate([self._x, np.zeros_like(self._x[:grow])])
            self._y = np.concatenate([self._y, np.zeros(grow)])
            self._a = np.concatenate([self._a, np.zeros_like(self._a[:grow])])
            self._actions = np.concatenate([self._actions, np.zeros(grow, dtype=np.int64)])
        i = self.size
        self._x[i] = x
        self._y[i] = y
        self._a[i] = a
        self._actions[i] = action
        self.size += 1

    @property
    def x(self):
        return self._x[: self.size]

    @property
    def y(self):
        return self._y[: self.size]

    @property
    def a(self):
        return self._a[: self.size]

    @property
    def actions(self):
        return self._actions[: self.size]


def make_perturbation(dist: ReferenceDistribution, rng: RngStream, block: slice | None = None) -> np.ndarray:
    """Draw the fixed perturbation vector attached to a new observation.

    Gaussian-indexed models get a uniform unit-sphere vector (restricted to
    ``block`` when given, zeros elsewhere); one-hot and hypersphere indexed
    models get a standard Gaussian vector.
    """
    if dist.kind in ("onehot", "hypersphere"):
        return rng.normal(size=dist.dim)
    a = np.zeros(dist.dim)
    if block is None:
        block = slice(0, dist.dim)
    width = len(range(*block.indices(dist.dim)))
    a[block] = nx.sample_hypersphere(rng, width)
    return a


def approx_loss(
    model: IndexedModel,
    X: np.ndarray,
    y: np.ndarray,
    A: np.ndarray,
    Z: np.ndarray,
    cfg: TrainConfig,
    total_n: int,
    nodes: dict[str, Node] | None = None,
) -> Node:
    """Minibatch loss averaged over the index rows of ``Z``.

    For each index: ``(total_n / batch) / (2 noise_var)`` times the summed
    squared residuals of the perturbed targets ``y + perturb_scale * a.z``,
    plus ``1 / (2 prior_var)`` times the squared distance between the
    hypermodel output and its output at the initial parameters.

    Returns a scalar graph node; pass ``nodes`` (name -> variable) to
    differentiate, otherwise the current parameters enter as constants.
    """
    X, y, A, Z = (np.asarray(v, dtype=np.float64) for v in (X, y, A, Z))
    if len(y) == 0 or len(Z) == 0:
        raise ContractError("approx_loss needs a nonempty data batch and index batch")
    hm = model.hypermodel
    if nodes is None:
        nodes = {k: nx.constant(v) for k, v in hm.params.items()}
    thetas = hm.graph(nodes, Z)
    preds = model.base.graph(thetas, X)
    target = np.broadcast_to(y, (len(Z), len(y)))
    if cfg.perturb_scale != 0.0:
        target = target + cfg.perturb_scale * (Z @ A.T)
    if model.prior is not None:
        target = target - model.prior.evaluate(Z, X)
    resid = preds - nx.constant(target)
    data_term = nx.scale(nx.sum(nx.square(resid)), total_n / len(y) / (2.0 * cfg.noise_var))
    drift = thetas - nx.constant(model.initial_map(Z))
    reg_term = nx.scale(nx.sum(nx.square(drift)), 1.0 / (2.0 * cfg.prior_var))
    return nx.scale(data_term + reg_term, 1.0 / len(Z))


def loss_gradient(model, X, y, A, Z, cfg, total_n) -> tuple[float, dict[str, np.ndarray]]:
    nodes = {k: nx.variable(v) for k, v in model.hypermodel.params.items()}
    loss = approx_loss(model, X, y, A, Z, cfg, total_n, nodes)
    grads = nx.backward(loss)
    return float(loss.value), {k: grads[n] for k, n in nodes.items()}


def sgd_step(model: IndexedModel, cfg: TrainConfig, data: Dataset, rng: RngStream) -> IndexedModel:
    """One update ``nu <- nu - step_size * grad / |D|`` on a fresh minibatch.

    Data rows are drawn uniformly with replacement; indices i.i.d. from the
    reference distribution.  An empty dataset leaves the model unchanged.
    With ``clip_norm > 0`` the scaled gradient ``grad / |D|`` is rescaled,
    across all parameter arrays jointly, to norm at most ``clip_norm``.
    """
    n = len(data)
    if n == 0:
        return model
    rows = rng.integers(n, size=cfg.batch_data)
    Z = model.reference.sample(rng, cfg.batch_index)
    _, grads = loss_gradient(model, data.x[rows], data.y[rows], data.a[rows], Z, cfg, n)
    params = model.hypermodel.params
    masks = model.hypermodel.masks()
    grads = {k: g * masks[k] if k in masks else g for k, g in grads.items()}
    step = cfg.step_size / n
    if cfg.clip_norm > 0:
        norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())) / n
        if norm > cfg.clip_norm:
            step *= cfg.clip_norm / norm
    for name, g in grads.items():
        params[name] -= step * g
    return model


def train_period(model: IndexedModel, cfg: TrainConfig, data: Dataset, rng: RngStream) -> IndexedModel:
    for _ in range(cfg.sgd_per_period):
        sgd_step(model, cfg, data, rng)
    return model
