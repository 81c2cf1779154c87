"""Base models f_theta: linear, ReLU MLP, and the additive prior composition.

Flat parameter packing for an MLP is fixed: for each layer in order, the
weight matrix of shape ``(fan_in, fan_out)`` in row-major order, followed by
that layer's bias vector.  A forward pass computes ``h = relu(h @ W + b)``
for hidden layers and ``h @ W + b`` for the output layer.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from hypx import numerics as nx
from hypx.numerics import InvalidDimensionError, Node


@dataclass(frozen=True)
class LinearArchitecture:
    """``f_theta(x) = theta . x``."""

    input_dim: int

    @property
    def param_count(self) -> int:
        return self.input_dim

    def layer_slices(self):
        return [slice(0, self.input_dim)]


@dataclass(frozen=True)
class MlpArchitecture:
    input_dim: int
    hidden_widths: tuple[int, ...]
    output_dim: int = 1

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_widths, self.output_dim)

    @cached_property
    def layout(self) -> list[tuple[int, int, int, int]]:
        """Per layer: (fan_in, fan_out, weight offset, bias offset)."""
        out, pos = [], 0
        w = self.widths
        for fan_in, fan_out in zip(w[:-1], w[1:]):
            out.append((fan_in, fan_out, pos, pos + fan_in * fan_out))
            pos += fan_in * fan_out + fan_out
        return out

    @property
    def param_count(self) -> int:
        w = self.widths
        return sum(a * b + b for a, b in zip(w[:-1], w[1:]))

    def layer_slices(self) -> list[slice]:
        """Coordinate range (weights then bias) of each layer in the flat vector."""
        return [slice(wo, bo + fo) for _, fo, wo, bo in self.layout]

    def unpack(self, flat: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape[-1] != self.param_count:
            raise InvalidDimensionError(f"expected {self.param_count} parameters, got {flat.shape[-1]}")
        lead = flat.shape[:-1]
        layers = []
        for fi, fo, wo, bo in self.layout:
            W = flat[..., wo:bo].reshape(*lead, fi, fo)
            b = flat[..., bo:bo + fo]
            layers.append((W, b))
        return layers

    def pack(self, layers) -> np.ndarray:
        parts = []
        for W, b in layers:
            W = np.asarray(W, dtype=np.float64)
            parts.append(W.reshape(*W.shape[:-2], -1))
            parts.append(np.asarray(b, dtype=np.float64))
        return np.concatenate(parts, axis=-1)


@dataclass
class BaseParams:
    flat: np.ndarray
    arch: MlpArchitecture | LinearArchitecture

    def __post_init__(self):
        self.flat = np.asarray(self.flat, dtype=np.float64)
        if self.flat.shape[-1] != self.arch.param_count:
            raise InvalidDimensionError(
                f"parameter vector has length {self.flat.shape[-1]}, architecture needs {self.arch.param_count}"
            )


def eval_linear(theta: BaseParams | np.ndarray, x: np.ndarray) -> float:
    flat = theta.flat if isinstance(theta, BaseParams) else np.asarray(theta, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if flat.shape != x.shape:
        raise InvalidDimensionError(f"theta has shape {flat.shape}, x has shape {x.shape}")
    return float(flat @ x)


def mlp_forward(arch: MlpArchitecture, flat: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Vectorized forward pass.

    ``flat`` is ``(..., P)`` and ``X`` is ``(n, input_dim)``; the result has
    shape ``(..., n)``.  Leading axes of ``flat`` index independent networks.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-1] != arch.input_dim:
        raise InvalidDimensionError(f"input has dimension {X.shape[-1]}, network expects {arch.input_dim}")
    layers = arch.unpack(flat)
    h = X
    last = len(layers) - 1
    for i, (W, b) in enumerate(layers):
        h = h @ W + b[..., None, :]
        if i < last:
            np.maximum(h, 0.0, out=h)
    return h[..., 0]


def eval_mlp(theta: BaseParams, x: np.ndarray) -> float:
    arch = theta.arch
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (arch.input_dim,):
        raise InvalidDimensionError(f"x has shape {x.shape}, network expects ({arch.input_dim},)")
    return float(mlp_forward(arch, theta.flat, x[None, :])[0])


def mlp_graph(arch: MlpArchitecture, flat: Node, X) -> Node:
    """Graph version of :func:`mlp_forward`; ``X`` may be a constant or a node."""
    X = nx._as_node(X)
    lead = flat.shape[:-1]
    h = X
    last = len(arch.layout) - 1
    for i, (fi, fo, wo, bo) in enumerate(arch.layout):
        W = nx.reshape(nx.take(flat, wo, bo), (*lead, fi, fo))
        b = nx.reshape(nx.take(flat, bo, bo + fo), (*lead, 1, fo))
        h = nx.matmul(h, W) + b
        if i < last:
            h = nx.relu(h)
    return nx.reshape(h, h.shape[:-1])


class BaseModel:
    """A function class ``f_theta`` evaluated on a batch of actions.

    ``evaluate(thetas, X)`` maps ``(n_z, P)`` parameters and ``(n, N_x)``
    actions to ``(n_z, n)`` outputs; ``graph`` is the differentiable twin.
    """

    arch: MlpArchitecture | LinearArchitecture

    @property
    def param_count(self) -> int:
        return self.arch.param_count

    def evaluate(self, thetas: np.ndarray, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def graph(self, thetas: Node, X: np.ndarray) -> Node:
        raise NotImplementedError


class LinearBase(BaseModel):
    def __init__(self, input_dim: int):
        self.arch = LinearArchitecture(input_dim)

    def evaluate(self, thetas, X):
        return np.asarray(thetas) @ np.asarray(X).T

    def graph(self, thetas, X):
        return nx.matmul(thetas, np.ascontiguousarray(np.asarray(X).T))


class MlpBase(BaseModel):
    def __init__(self, arch: MlpArchitecture):
        self.arch = arch

    def evaluate(self, thetas, X):
        return mlp_forward(self.arch, thetas, X)

    def graph(self, thetas, X):
        return mlp_graph(self.arch, thetas, X)


def make_base(arch: MlpArchitecture | LinearArchitecture) -> BaseModel:
    return LinearBase(arch.input_dim) if isinstance(arch, LinearArchitecture) else MlpBase(arch)


@dataclass(frozen=True)
class AdditivePriorSpec:
    """Fixed prior network ``f~`` with parameters ``D B z``.

    ``prior_scale`` is the diagonal of D (per-parameter prior std) and
    ``prior_mixer`` is B, shape ``(P_prior, N_z)``.  Both are read-only.
    """

    prior_scale: np.ndarray
    prior_mixer: np.ndarray
    prior_arch: MlpArchitecture | LinearArchitecture

    def __post_init__(self):
        scale = np.array(self.prior_scale, dtype=np.float64)
        mixer = np.array(self.prior_mixer, dtype=np.float64)
        if scale.ndim != 1 or np.any(scale <= 0):
            raise ValueError("prior_scale must be a strictly positive vector")
        if mixer.shape[0] != scale.shape[0] or scale.shape[0] != self.prior_arch.param_count:
            raise InvalidDimensionError(
                f"prior_scale {scale.shape}, prior_mixer {mixer.shape} and architecture "
                f"({self.prior_arch.param_count} params) disagree"
            )
        scale.flags.writeable = False
        mixer.flags.writeable = False
        object.__setattr__(self, "prior_scale", scale)
        object.__setattr__(self, "prior_mixer", mixer)
        object.__setattr__(self, "_base", make_base(self.prior_arch))

    @property
    def index_dim(self) -> int:
        return self.prior_mixer.shape[1]

    def prior_params(self, Z: np.ndarray) -> np.ndarray:
        """``D B z`` for each row of ``Z``."""
        return (np.asarray(Z) @ self.prior_mixer.T) * self.prior_scale

    def evaluate(self, Z: np.ndarray, X: np.ndarray) -> np.ndarray:
        Z = np.asarray(Z, dtype=np.float64)
        if Z.shape[-1] != self.index_dim:
            raise InvalidDimensionError(f"index has dimension {Z.shape[-1]}, prior expects {self.index_dim}")
        return self._base.evaluate(self.prior_params(Z), X)


def eval_additive(spec: AdditivePriorSpec, z: np.ndarray, theta_hat: BaseParams, x: np.ndarray) -> float:
    """Prior network at ``D B z`` plus the differential network at ``theta_hat``."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (spec.index_dim,):
        raise InvalidDimensionError(f"z has shape {z.shape}, prior expects ({spec.index_dim},)")
    x = np.asarray(x, dtype=np.float64)
    prior = float(spec.evaluate(z[None, :], x[None, :])[0, 0])
    diff = make_base(theta_hat.arch).evaluate(theta_hat.flat[None, :], x[None, :])[0, 0]
    return prior + float(diff)


def gaussian_prior_scale(arch: MlpArchitecture, weight_vars, bias_var: float = 1.0, multiplier: float = 1.0) -> np.ndarray:
    """Diagonal of D for an MLP: per-layer weight std and a shared bias std.

    ``multiplier`` scales the weight variances (prior weight multiplier sweeps).
    """
    scale = np.empty(arch.param_count)
    for (fi, fo, wo, bo), wv in zip(arch.layout, weight_vars):
        scale[wo:bo] = np.sqrt(wv * multiplier)
        scale[bo:bo + fo] = np.sqrt(bias_var)
    return scale
