"""Hypermodels g_nu: index z -> base-model parameters theta, and reference distributions.

Every hypermodel keeps its trainable arrays in ``params`` (a dict of numpy
arrays).  ``map_batch`` evaluates a stack of indices in numpy and ``graph``
builds the same computation on :mod:`hypx.numerics` nodes so training can
differentiate it.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from hypx import numerics as nx
from hypx.base_models import BaseParams, MlpArchitecture
from hypx.numerics import ConfigurationError, InvalidDimensionError, Node, RngStream


# ---------------------------------------------------------------------------
# Reference distributions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReferenceDistribution:
    """``kind`` is one of ``"gaussian"``, ``"hypersphere"`` or ``"onehot"``."""

    kind: str
    dim: int

    def __post_init__(self):
        if self.kind not in ("gaussian", "hypersphere", "onehot"):
            raise ConfigurationError(f"unknown reference distribution {self.kind!r}")
        if self.dim < 1:
            raise InvalidDimensionError("index dimension must be >= 1")

    def sample(self, rng: RngStream, n: int | None = None) -> np.ndarray:
        """One index (shape ``(dim,)``) or ``n`` stacked indices (``(n, dim)``)."""
        size = 1 if n is None else n
        if self.kind == "gaussian":
            out = rng.normal(size=(size, self.dim))
        elif self.kind == "hypersphere":
            out = nx.sample_hypersphere(rng, self.dim, size=size)
        else:
            out = np.zeros((size, self.dim))
            out[np.arange(size), rng.integers(self.dim, size=size)] = 1.0
        return out[0] if n is None else out


def GaussianUnit(dim: int) -> ReferenceDistribution:
    return ReferenceDistribution("gaussian", dim)


def HypersphereUniform(dim: int) -> ReferenceDistribution:
    return ReferenceDistribution("hypersphere", dim)


def OneHotUniform(dim: int) -> ReferenceDistribution:
    return ReferenceDistribution("onehot", dim)


def sample_index(dist: ReferenceDistribution, rng: RngStream) -> np.ndarray:
    return dist.sample(rng)


# ---------------------------------------------------------------------------
# Hypermodels
# ---------------------------------------------------------------------------


class Hypermodel:
    """Common interface; subclasses fill in ``params``, ``reference`` and the maps."""

    params: dict[str, np.ndarray]
    reference: ReferenceDistribution
    output_dim: int

    @property
    def index_dim(self) -> int:
        return self.reference.dim

    def _check(self, Z: np.ndarray) -> np.ndarray:
        Z = np.asarray(Z, dtype=np.float64)
        if Z.shape[-1] != self.index_dim:
            raise InvalidDimensionError(f"index has dimension {Z.shape[-1]}, hypermodel expects {self.index_dim}")
        return Z

    def map(self, z: np.ndarray, arch=None) -> BaseParams | np.ndarray:
        """Base-model parameters for a single index."""
        z = self._check(z)
        if z.ndim != 1:
            raise InvalidDimensionError("map takes a single index vector")
        theta = self.map_batch(z[None, :])[0]
        return BaseParams(theta, arch) if arch is not None else theta

    def map_batch(self, Z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def graph(self, nodes: dict[str, Node], Z: np.ndarray) -> Node:
        raise NotImplementedError

    def masks(self) -> dict[str, np.ndarray]:
        """Boolean masks of entries allowed to be nonzero (absent = unconstrained)."""
        return {}

    def params_per_index(self) -> int:
        """Number of hypermodel parameters involved in mapping one index."""
        raise NotImplementedError

    def copy_params(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}


class EnsembleHypermodel(Hypermodel):
    """``g(z) = particles @ z`` with one-hot ``z``; column k is particle k."""

    def __init__(self, particles: np.ndarray):
        particles = np.array(particles, dtype=np.float64)
        if particles.ndim != 2:
            raise InvalidDimensionError("particles must be an (N_theta, N_nu) matrix")
        self.params = {"particles": particles}
        self.output_dim, n = particles.shape
        self.reference = OneHotUniform(n)

    @property
    def particles(self) -> np.ndarray:
        return self.params["particles"]

    def map_batch(self, Z):
        Z = self._check(Z)
        return Z @ self.particles.T

    def graph(self, nodes, Z):
        return nx.matmul(Z, nx.transpose(nodes["particles"]))

    def params_per_index(self):
        return self.output_dim


class LinearHypermodel(Hypermodel):
    """``g(z) = offset + mixer @ z``, optionally with entries of ``mixer`` pinned to 0.

    A block mask realizes the per-arm diagonal hypermodel ``C z + mu``.
    """

    def __init__(self, offset, mixer, mask=None, reference: ReferenceDistribution | None = None):
        offset = np.array(offset, dtype=np.float64)
        mixer = np.array(mixer, dtype=np.float64)
        if mixer.ndim != 2 or offset.shape != (mixer.shape[0],):
            raise InvalidDimensionError(f"offset {offset.shape} and mixer {mixer.shape} disagree")
        self._mask = None
        if mask is not None:
            self._mask = np.asarray(mask, dtype=bool)
            if self._mask.shape != mixer.shape:
                raise InvalidDimensionError("mask must match mixer shape")
            mixer[~self._mask] = 0.0
        self.params = {"offset": offset, "mixer": mixer}
        self.output_dim = mixer.shape[0]
        self.reference = reference or GaussianUnit(mixer.shape[1])

    @property
    def offset(self):
        return self.params["offset"]

    @property
    def mixer(self):
        return self.params["mixer"]

    @property
    def block_mask(self):
        return self._mask

    def map_batch(self, Z):
        Z = self._check(Z)
        return Z @ self.mixer.T + self.offset

    def graph(self, nodes, Z):
        B = nodes["mixer"]
        if self._mask is not None:
            B = nx.scale(B, self._mask.astype(np.float64))
        return nx.matmul(Z, nx.transpose(B)) + nodes["offset"]

    def masks(self):
        return {} if self._mask is None else {"mixer": self._mask}

    def params_per_index(self):
        n_mixer = self.mixer.size if self._mask is None else int(self._mask.sum())
        return n_mixer + self.output_dim


class HypernetworkHypermodel(Hypermodel):
    """An MLP from ``N_z`` inputs to ``N_theta`` outputs."""

    def __init__(self, arch: MlpArchitecture, flat: np.ndarray, reference: ReferenceDistribution | None = None):
        flat = np.array(flat, dtype=np.float64)
        if flat.shape != (arch.param_count,):
            raise InvalidDimensionError(f"hypernetwork needs {arch.param_count} parameters")
        self.net = arch
        self.params = {"net": flat}
        self.output_dim = arch.output_dim
        self.reference = reference or GaussianUnit(arch.input_dim)

    def map_batch(self, Z):
        Z = self._check(Z)
        layers = self.net.unpack(self.params["net"])
        h = Z
        for i, (W, b) in enumerate(layers):
            h = h @ W + b
            if i < len(layers) - 1:
                h = np.maximum(h, 0.0)
        return h

    def graph(self, nodes, Z):
        flat = nodes["net"]
        h = nx.constant(Z)
        last = len(self.net.layout) - 1
        for i, (fi, fo, wo, bo) in enumerate(self.net.layout):
            W = nx.reshape(nx.take(flat, wo, bo), (fi, fo))
            h = nx.matmul(h, W) + nx.take(flat, bo, bo + fo)
            if i < last:
                h = nx.relu(h)
        return h

    def params_per_index(self):
        return self.net.param_count


class SparseSoftmaxHypermodel(Hypermodel):
    """``g(z)_m = softmax_m(beta * nu_m * (z_m^2 + offset))``; outputs lie on the simplex."""

    def __init__(self, nu, offset: float = 0.01, temperature: float = 10.0):
        nu = np.array(nu, dtype=np.float64)
        if nu.ndim != 1:
            raise InvalidDimensionError("nu must be a vector")
        self.params = {"nu": nu}
        self.offset = float(offset)
        self.temperature = float(temperature)
        self.output_dim = nu.shape[0]
        self.reference = GaussianUnit(nu.shape[0])

    def _logits_const(self, Z):
        return self.temperature * (Z * Z + self.offset)

    def map_batch(self, Z):
        Z = self._check(Z)
        logits = self._logits_const(Z) * self.params["nu"]
        logits -= logits.max(axis=-1, keepdims=True)
        e = np.exp(logits)
        return e / e.sum(axis=-1, keepdims=True)

    def graph(self, nodes, Z):
        c = self._logits_const(Z)
        logits = nx.scale(nodes["nu"], c)
        # shift by a constant row max; softmax is invariant so no gradient is lost
        shifted = logits + nx.constant(-logits.value.max(axis=-1, keepdims=True))
        e = nx.exp(shifted)
        return nx.divide(e, nx.sum(e, axis=-1, keepdims=True))

    def params_per_index(self):
        return self.output_dim


# ---------------------------------------------------------------------------
# Construction helpers
# ---------------------------------------------------------------------------


def block_mask(blocks: list[tuple[int, int]]) -> np.ndarray:
    """Boolean block-diagonal pattern for ``blocks = [(rows, cols), ...]``."""
    if not blocks or any(r < 1 or c < 1 for r, c in blocks):
        raise InvalidDimensionError("every block needs at least one row and one column")
    mask = np.zeros((sum(r for r, _ in blocks), sum(c for _, c in blocks)), dtype=bool)
    r0 = c0 = 0
    for r, c in blocks:
        mask[r0:r0 + r, c0:c0 + c] = True
        r0, c0 = r0 + r, c0 + c
    return mask


def make_block_diagonal_mixer(blocks: list[tuple[int, int]], rng: RngStream) -> np.ndarray:
    """Block-diagonal prior mixer whose rows are uniform on their block's unit sphere."""
    mask = block_mask(blocks)
    B = np.zeros(mask.shape)
    r0 = c0 = 0
    for r, c in blocks:
        B[r0:r0 + r, c0:c0 + c] = nx.sample_hypersphere(rng, c, size=r)
        r0, c0 = r0 + r, c0 + c
    return B


def init_hypermodel(kind: str, dims: dict, init_scheme: str, rng: RngStream) -> Hypermodel:
    """Build a hypermodel with freshly drawn parameters.

    ``kind``: ``ensemble`` | ``linear`` | ``linear_diagonal`` | ``hypernetwork`` | ``sparse_softmax``.

    ``dims`` keys by kind:

    * ensemble: ``n_theta``, ``n_particles``
    * linear: ``n_theta``, ``index_dim``
    * linear_diagonal: ``n_arms``, ``block_width`` (one output per arm)
    * hypernetwork: ``n_theta``, ``index_dim``, ``hidden`` (tuple of widths)
    * sparse_softmax: ``n_theta``; optional ``offset``, ``temperature``

    ``init_scheme``: ``normal`` (i.i.d. N(0, std^2), ``std`` in dims, default
    0.05), ``truncated_normal`` (same, truncated at two std), ``glorot``
    (Glorot-uniform weights, zero biases/offsets) or ``ones`` (sparse-softmax).
    """
    std = dims.get("std", 0.05)

    def draw(shape, fan_in=None, fan_out=None):
        if init_scheme == "normal":
            return rng.normal(size=shape, scale=std)
        if init_scheme == "truncated_normal":
            return nx.sample_truncated_gaussian(rng, shape, std)
        if init_scheme == "glorot":
            return nx.glorot_uniform(rng, fan_in, fan_out, shape=shape)
        if init_scheme == "zeros":
            return np.zeros(shape)
        raise ConfigurationError(f"unknown init scheme {init_scheme!r} for {kind}")

    def bias(shape):
        return np.zeros(shape) if init_scheme in ("glorot", "zeros") else draw(shape)

    if kind == "ensemble":
        n_theta, n = dims["n_theta"], dims["n_particles"]
        return EnsembleHypermodel(draw((n_theta, n), n, n_theta))
    if kind == "linear":
        n_theta, n_z = dims["n_theta"], dims["index_dim"]
        mixer = draw((n_theta, n_z), n_z, n_theta)
        return LinearHypermodel(bias(n_theta), mixer)
    if kind == "linear_diagonal":
        k, m = dims["n_arms"], dims["block_width"]
        mask = block_mask([(1, m)] * k)
        mixer = np.zeros(mask.shape)
        mixer[mask] = draw(int(mask.sum()), m, 1)
        return LinearHypermodel(bias(k), mixer, mask=mask)
    if kind == "hypernetwork":
        arch = MlpArchitecture(dims["index_dim"], tuple(dims.get("hidden", ())), dims["n_theta"])
        layers = [(draw((fi, fo), fi, fo), bias(fo)) for fi, fo, _, _ in arch.layout]
        return HypernetworkHypermodel(arch, arch.pack(layers))
    if kind == "sparse_softmax":
        if init_scheme != "ones":
            raise ConfigurationError("sparse_softmax hypermodels start from the all-ones vector")
        return SparseSoftmaxHypermodel(
            np.ones(dims["n_theta"]), dims.get("offset", 0.01), dims.get("temperature", 10.0)
        )
    raise ConfigurationError(f"unknown hypermodel kind {kind!r}")


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_params(hm: Hypermodel) -> bytes:
    """Serialize trainable arrays to ``.npz`` bytes (bit-exact round trip)."""
    buf = io.BytesIO()
    np.savez(buf, **hm.params)
    return buf.getvalue()


def load_params(hm: Hypermodel, blob: bytes) -> Hypermodel:
    with np.load(io.BytesIO(blob)) as data:
        for name in hm.params:
            arr = data[name]
            if arr.shape != hm.params[name].shape:
                raise InvalidDimensionError(f"checkpoint array {name!r} has shape {arr.shape}")
            hm.params[name][...] = arr
    return hm


__all__ = [
    "EnsembleHypermodel",
    "GaussianUnit",
    "HypernetworkHypermodel",
    "HypersphereUniform",
    "Hypermodel",
    "LinearHypermodel",
    "OneHotUniform",
    "ReferenceDistribution",
    "SparseSoftmaxHypermodel",
    "block_mask",
    "init_hypermodel",
    "load_params",
    "make_block_diagonal_mixer",
    "sample_index",
    "save_params",
]
