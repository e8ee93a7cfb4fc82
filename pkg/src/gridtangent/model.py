"""Grid-based model: a weighted average of node features.

``g(x) = sum_{i in U(x)} phi(x, Theta_i) * w_i`` where ``U`` comes from the
geometry, ``phi`` from the kernel and ``w`` is the ``(m, d)`` feature grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from .geometry import ConfigError, GridGeometry, index_set, is_single_point
from .kernels import GaussianRBF, KernelSpec, MulFA, Multilinear, kernel_eval

__all__ = ["GridModel", "Dataset", "model_forward", "grad_wrt_features"]

#: Half-width of the optional uniform random feature initialisation.
RANDOM_INIT_SCALE = 1e-4


@dataclass(eq=False)
class Dataset:
    """Query coordinates ``X`` (n, D) with targets ``Y`` (n, d)."""

    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.Y = np.asarray(self.Y, dtype=np.float64)
        if self.X.ndim == 1:
            self.X = self.X[:, None]
        if self.Y.ndim == 1:
            self.Y = self.Y[:, None]
        if len(self.X) < 1 or len(self.X) != len(self.Y):
            raise ValueError("dataset needs n >= 1 matching inputs and targets")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.Y))):
            raise ValueError("dataset values must be finite")

    def __len__(self):
        return len(self.X)

    def subset(self, rows) -> "Dataset":
        return Dataset(self.X[rows], self.Y[rows])


@dataclass(eq=False)
class GridModel:
    geometry: GridGeometry
    kernel: KernelSpec
    features: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim == 1:
            self.features = self.features[:, None]
        if self.features.shape[0] != self.geometry.num_nodes:
            raise ConfigError(
                f"feature grid has {self.features.shape[0]} rows, geometry has {self.geometry.num_nodes} nodes")
        if not np.all(np.isfinite(self.features)):
            raise ConfigError("features must be finite")
        if isinstance(self.kernel, Multilinear) and self.geometry.kind != "regular":
            raise ConfigError("the multilinear kernel needs a regular grid")
        if isinstance(self.kernel, MulFA) and self.kernel.params.dim != self.geometry.dim:
            raise ConfigError("MulFA parameters were built for a different dimension")
        if not isinstance(self.kernel, (Multilinear, GaussianRBF, MulFA)):
            raise ConfigError(f"unknown kernel {self.kernel!r}")

    @classmethod
    def create(cls, geometry: GridGeometry, kernel: KernelSpec, out_dim: int = 1,
               init: str = "zeros", rng=None) -> "GridModel":
        m = geometry.num_nodes
        if init == "zeros":
            feats = np.zeros((m, out_dim))
        elif init == "uniform":
            rng = np.random.default_rng(rng)
            feats = rng.uniform(-RANDOM_INIT_SCALE, RANDOM_INIT_SCALE, size=(m, out_dim))
        else:
            raise ConfigError(f"unknown feature init {init!r}")
        return cls(geometry, kernel, feats)

    @property
    def out_dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_nodes(self) -> int:
        return self.geometry.num_nodes

    def copy(self) -> "GridModel":
        kernel = self.kernel
        if isinstance(kernel, MulFA):
            kernel = MulFA(kernel.params.copy())
        return GridModel(self.geometry, kernel, self.features.copy())

    def with_features(self, features) -> "GridModel":
        return GridModel(self.geometry, self.kernel, features)

    def weights(self, X):
        """Index sets ``(n, K)`` and kernel weights ``(n, K)`` for queries ``X``."""
        pts = self.geometry.as_points(X)
        idx = index_set(self.geometry, pts)
        return idx, kernel_eval(self.kernel, pts, idx, self.geometry)

    def __call__(self, X) -> np.ndarray:
        """Evaluate the field at a batch of points, shape ``(n, d)``."""
        idx, w = self.weights(X)
        return _backend.gather(idx, w, self.features)


def model_forward(model: GridModel, x) -> np.ndarray:
    """``g(x)`` for one point (returns ``(d,)``) or a batch (``(n, d)``)."""
    out = model(x)
    return out[0] if is_single_point(x, model.geometry.dim) else out


def grad_wrt_features(model: GridModel, x):
    """Sparse ``dg(x)/dw``: the node indices of ``U(x)`` and their kernel weights.

    The gradient does not depend on the feature values.  For a batch the
    arrays have shape ``(n, K)``.
    """
    idx, w = model.weights(x)
    if is_single_point(x, model.geometry.dim):
        return idx[0], w[0]
    return idx, w


def dense_gradient(model: GridModel, x) -> np.ndarray:
    """``dg(x)/dw`` scattered into a dense length-``m`` vector."""
    idx, w = grad_wrt_features(model, x)
    out = np.zeros(model.num_nodes)
    np.add.at(out, idx, w)
    return out
