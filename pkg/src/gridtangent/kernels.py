"""Kernel functions that weight the nodes in ``U(x)``.

Three variants are provided:

* :class:`Multilinear` -- tensor-product linear interpolation (regular grids
  only, no parameters).
* :class:`GaussianRBF` -- normalised Gaussian of the distance to each node.
* :class:`MulFA` -- multiplicative Fourier adaptive kernel: Fourier features
  of the query pass through a chain of affine maps, each multiplied by a
  sinusoidal filter of the node position, followed by a node-wise
  normalisation over ``U(x)``.

All kernels work on batches: queries ``(n, D)`` and index sets ``(n, K)``
produce weights ``(n, K)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Union

import numpy as np

from .geometry import ConfigError, GridGeometry, locate

__all__ = [
    "EPS_NORM",
    "Multilinear",
    "GaussianRBF",
    "MulFA",
    "MulFAParams",
    "fourier_features",
    "mfn_unnormalized",
    "kernel_normalize",
    "kernel_eval",
    "kernel_grad_params",
]

#: Below this magnitude the normalising denominator is treated as zero.
EPS_NORM = 1e-8


def fourier_features(x, d_f: int) -> np.ndarray:
    """Dyadic sin/cos encoding of each coordinate axis.

    For ``j = 1..d_f`` the feature is ``cos(2**(j//2) * pi * x)`` for odd ``j``
    and ``sin(...)`` for even ``j``.  Axes are concatenated in order, giving
    ``D * d_f`` features per point.
    """
    if d_f < 1:
        raise ConfigError("d_f must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    j = np.arange(1, d_f + 1)
    freq = np.pi * 2.0 ** (j // 2)
    arg = x[..., :, None] * freq
    feats = np.where(j % 2 == 1, np.cos(arg), np.sin(arg))
    return feats.reshape(x.shape[:-1] + (x.shape[-1] * d_f,))


@dataclass(frozen=True)
class Multilinear:
    variant = "multilinear"


@dataclass(frozen=True)
class GaussianRBF:
    """Gaussian kernel; ``sigma=None`` picks a default from the geometry."""

    sigma: Optional[float] = None
    variant = "gaussian"

    def __post_init__(self):
        if self.sigma is not None and not self.sigma > 0:
            raise ConfigError("GaussianRBF sigma must be positive")

    def resolve_sigma(self, geometry: GridGeometry) -> float:
        if self.sigma is not None:
            return float(self.sigma)
        if geometry.kind == "regular":
            return float(np.mean(geometry.cell_width))
        pts = geometry.points
        k = min(geometry.k, len(pts) - 1)
        if k < 1:
            return float(np.mean(geometry.extent))
        d = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
        d.sort(axis=1)
        return float(d[:, 1 : k + 1].mean())


@dataclass(eq=False)
class MulFAParams:
    """Parameters of the multiplicative-filter chain, shared by all nodes.

    ``weights[k]`` and ``biases[k]`` are the affine map of layer ``k+1``;
    ``omegas[k]`` (``d_h x D``) and ``phases[k]`` (``d_h``) define the filter
    multiplied onto the output of that affine map, for ``k < n_m - 1``.  The
    last affine map produces the scalar raw kernel value.
    """

    d_f: int
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    omegas: List[np.ndarray]
    phases: List[np.ndarray]

    def __post_init__(self):
        n_m = len(self.weights)
        if n_m < 1 or len(self.biases) != n_m:
            raise ConfigError("MulFA needs n_m >= 1 affine layers with matching biases")
        if len(self.omegas) != n_m - 1 or len(self.phases) != n_m - 1:
            raise ConfigError("MulFA needs one filter per hidden layer")
        if self.d_f < 1 or self.weights[0].ndim != 2 or self.in_width % self.d_f:
            raise ConfigError("MulFA input width must be a multiple of d_f")
        if self.omegas and self.omegas[0].ndim == 2 and self.in_width != self.d_f * self.omegas[0].shape[1]:
            raise ConfigError("MulFA input width must equal d_f times the input dimension")
        width = self.in_width
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or W.shape[1] != width or b.shape != (W.shape[0],):
                raise ConfigError(f"MulFA layer {k + 1} has inconsistent shapes")
            last = k == n_m - 1
            if last and W.shape[0] != 1:
                raise ConfigError("MulFA output layer must produce a scalar")
            if not last:
                if self.omegas[k].shape != (W.shape[0], self.dim) or self.phases[k].shape != (W.shape[0],):
                    raise ConfigError(f"MulFA filter {k + 1} has inconsistent shapes")
            width = W.shape[0]
        if not all(np.all(np.isfinite(a)) for a in self.tensors()):
            raise ConfigError("MulFA parameters must be finite")

    @property
    def n_m(self) -> int:
        return len(self.weights)

    @property
    def d_h(self) -> int:
        return self.weights[0].shape[0] if self.n_m > 1 else 0

    @property
    def dim(self) -> int:
        if self.omegas:
            return self.omegas[0].shape[1]
        return self.weights[0].shape[1] // self.d_f

    @property
    def in_width(self) -> int:
        return self.weights[0].shape[1]

    @classmethod
    def init(cls, dim: int, d_f: int = 10, n_m: int = 3, d_h: int = 16,
             rng=None, omega_scale: float = 32 * np.pi,
             output_bias: float = 0.0) -> "MulFAParams":
        """Random initialisation.

        Filter frequencies are uniform in ``[-omega_scale, omega_scale]``,
        phases uniform in ``[0, 2 pi)``, affine weights uniform in
        ``+-1/sqrt(fan_in)``, biases zero.  A positive ``output_bias`` shifts
        raw kernel values towards a constant, which keeps the normalising
        denominator away from zero but flattens the kernel.
        """
        if d_f < 1 or n_m < 1 or d_h < 1:
            raise ConfigError("MulFA needs d_f, n_m, d_h >= 1")
        rng = np.random.default_rng(rng)
        widths = [dim * d_f] + [d_h] * (n_m - 1) + [1]
        weights, biases = [], []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        biases[-1][:] = output_bias
        omegas = [rng.uniform(-omega_scale, omega_scale, size=(d_h, dim)) for _ in range(n_m - 1)]
        phases = [rng.uniform(0.0, 2 * np.pi, size=d_h) for _ in range(n_m - 1)]
        return cls(d_f, weights, biases, omegas, phases)

    def tensors(self) -> List[np.ndarray]:
        """All parameter arrays in a fixed order (views, not copies)."""
        return [*self.weights, *self.biases, *self.omegas, *self.phases]

    def _rebuild(self, arrays) -> "MulFAParams":
        n = self.n_m
        arrays = list(arrays)
        return MulFAParams(self.d_f, arrays[:n], arrays[n : 2 * n],
                           arrays[2 * n : 3 * n - 1], arrays[3 * n - 1 :])

    def copy(self) -> "MulFAParams":
        return self._rebuild(a.copy() for a in self.tensors())

    def zeros_like(self) -> "MulFAParams":
        return self._rebuild(np.zeros_like(a) for a in self.tensors())

    def ravel(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.tensors()])

    def with_vector(self, vec) -> "MulFAParams":
        vec = np.asarray(vec, dtype=np.float64)
        out, pos = [], 0
        for a in self.tensors():
            out.append(vec[pos : pos + a.size].reshape(a.shape).copy())
            pos += a.size
        if pos != vec.size:
            raise ValueError("parameter vector has the wrong length")
        return self._rebuild(out)

    @property
    def size(self) -> int:
        return sum(a.size for a in self.tensors())


@dataclass(frozen=True, eq=False)
class MulFA:
    params: MulFAParams
    variant = "mulfa"


KernelSpec = Union[Multilinear, GaussianRBF, MulFA]


def _affine(z: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    # Flatten leading axes so numpy runs one GEMM instead of a batched loop.
    return (z.reshape(-1, z.shape[-1]) @ W.T + b).reshape(z.shape[:-1] + (W.shape[0],))


def _mfn_forward(params: MulFAParams, feats: np.ndarray, nodes: np.ndarray):
    """Raw kernel values for queries ``(n, F)`` against node coords ``(n, K, D)``."""
    cache = []
    n, K = nodes.shape[:2]
    z = feats[:, None, :]
    for k in range(params.n_m - 1):
        h = _affine(z, params.weights[k], params.biases[k])
        a = _affine(nodes, params.omegas[k], params.phases[k])
        s = np.sin(a)
        cache.append((z, h, a, s))
        z = h * s
    raw = _affine(z, params.weights[-1], params.biases[-1])[..., 0]
    cache.append(z)
    return np.broadcast_to(raw, (n, K)), cache


def _flat(a: np.ndarray) -> np.ndarray:
    return a.reshape(-1, a.shape[-1])


def _mfn_backward(params: MulFAParams, nodes: np.ndarray, cache, g_raw: np.ndarray) -> MulFAParams:
    """Reverse pass of :func:`_mfn_forward` given the cotangent on raw values."""
    grad = params.zeros_like()
    z_last = cache[-1]
    if params.n_m == 1:
        # No filters: the raw value does not depend on the node.
        g_out = g_raw.sum(axis=1, keepdims=True)
    else:
        g_out = g_raw
    zl = np.broadcast_to(z_last, g_out.shape + z_last.shape[2:])
    grad.weights[-1][0] = g_out.ravel() @ _flat(zl)
    grad.biases[-1][0] = g_out.sum()
    dz = g_out[..., None] * params.weights[-1][0]
    node2 = _flat(nodes)
    for k in range(params.n_m - 2, -1, -1):
        z, h, a, s = cache[k]
        dh = dz * s
        da = dz * h * np.cos(a)
        da2 = _flat(da)
        grad.omegas[k][:] = da2.T @ node2
        grad.phases[k][:] = da2.sum(axis=0)
        if k == 0:
            dh_red = dh.sum(axis=1)
            grad.weights[k][:] = dh_red.T @ z[:, 0, :]
            grad.biases[k][:] = dh_red.sum(axis=0)
        else:
            dh2 = _flat(dh)
            grad.weights[k][:] = dh2.T @ _flat(z)
            grad.biases[k][:] = dh2.sum(axis=0)
            dz = (dh2 @ params.weights[k]).reshape(dh.shape[:-1] + (params.weights[k].shape[1],))
    return grad


def mfn_unnormalized(x, nodes, params: MulFAParams) -> np.ndarray:
    """Raw kernel value for unit-cube query ``x`` against unit-cube node coords.

    ``x`` is ``(D,)`` or ``(n, D)``; ``nodes`` is ``(D,)``, ``(K, D)`` or
    ``(n, K, D)``.  Returns the matching scalar / ``(K,)`` / ``(n, K)``.
    """
    x = np.asarray(x, dtype=np.float64)
    nodes = np.asarray(nodes, dtype=np.float64)
    single_x = x.ndim == 1
    x2 = np.atleast_2d(x)
    if nodes.ndim == 1:
        nd = np.broadcast_to(nodes, (x2.shape[0], 1, nodes.shape[0]))
    elif nodes.ndim == 2:
        nd = np.broadcast_to(nodes, (x2.shape[0],) + nodes.shape)
    else:
        nd = nodes
    raw, _ = _mfn_forward(params, fourier_features(x2, params.d_f), nd)
    raw = np.array(raw)
    if single_x:
        raw = raw[0]
        return raw[0] if nodes.ndim == 1 else raw
    return raw


def kernel_normalize(raw) -> np.ndarray:
    """Divide raw values by their sum over the index set (last axis).

    Where ``|sum| < EPS_NORM`` the weights fall back to uniform.
    """
    raw = np.asarray(raw, dtype=np.float64)
    total = raw.sum(axis=-1, keepdims=True)
    bad = np.abs(total) < EPS_NORM
    safe = np.where(bad, 1.0, total)
    return np.where(bad, 1.0 / raw.shape[-1], raw / safe)


def _normalize_backward(raw: np.ndarray, weights: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    total = raw.sum(axis=-1, keepdims=True)
    bad = np.abs(total) < EPS_NORM
    inner = (upstream * weights).sum(axis=-1, keepdims=True)
    g = (upstream - inner) / np.where(bad, 1.0, total)
    return np.where(bad, 0.0, g)


def _multilinear(frac: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    per_axis = np.where(offsets[None, :, :] == 1, frac[:, None, :], 1.0 - frac[:, None, :])
    return per_axis.prod(axis=-1)


def _gaussian(spec: GaussianRBF, x, idx, geometry):
    sigma = spec.resolve_sigma(geometry)
    pts = geometry.clamp(x)
    d2 = ((pts[:, None, :] - geometry.node_positions(idx)) ** 2).sum(-1)
    # Shift by the nearest node so the exponentials cannot all underflow.
    d2 = d2 - d2.min(axis=1, keepdims=True)
    return kernel_normalize(np.exp(-d2 / (2.0 * sigma * sigma)))


def kernel_eval(spec: KernelSpec, x, index_set, geometry: GridGeometry) -> np.ndarray:
    """Kernel weights of each query over its index set.

    ``x`` is ``(n, D)`` (or a single point) and ``index_set`` the matching
    ``(n, K)`` (or ``(K,)``) node indices from ``geometry``.
    """
    single = np.asarray(index_set).ndim == 1
    idx = np.atleast_2d(np.asarray(index_set, dtype=np.int64))
    pts = geometry.as_points(x)
    if isinstance(spec, Multilinear):
        if geometry.kind != "regular":
            raise ConfigError("the multilinear kernel needs a regular grid")
        cell_idx, frac = locate(geometry, pts)
        if not np.array_equal(cell_idx, idx):
            raise ValueError("index set does not match the cell of the query")
        w = _multilinear(frac, geometry.corner_offsets())
    elif isinstance(spec, GaussianRBF):
        w = _gaussian(spec, pts, idx, geometry)
    elif isinstance(spec, MulFA):
        raw, _ = _mfn_forward(spec.params, fourier_features(geometry.normalize(pts), spec.params.d_f),
                              geometry.node_unit_coords(idx))
        w = kernel_normalize(raw)
    else:
        raise ConfigError(f"unknown kernel {spec!r}")
    return w[0] if single else w


def mulfa_weights_and_vjp(params: MulFAParams, x, idx, geometry: GridGeometry):
    """Normalised MulFA weights plus a closure mapping weight cotangents to parameter gradients."""
    nodes = geometry.node_unit_coords(idx)
    raw, cache = _mfn_forward(params, fourier_features(geometry.normalize(x), params.d_f), nodes)
    w = kernel_normalize(raw)

    def vjp(upstream):
        g_raw = _normalize_backward(raw, w, np.asarray(upstream, dtype=np.float64))
        return _mfn_backward(params, nodes, cache, g_raw)

    return w, vjp


def kernel_grad_params(params: MulFAParams, x, index_set, geometry: GridGeometry, upstream) -> MulFAParams:
    """Gradient of ``sum(upstream * kernel_eval(MulFA(params), x, index_set))`` w.r.t. ``params``.

    Queries whose normalising sum is below ``EPS_NORM`` contribute zero (the
    uniform fallback does not depend on the parameters).
    """
    idx = np.atleast_2d(np.asarray(index_set, dtype=np.int64))
    pts = geometry.as_points(x)
    up = np.asarray(upstream, dtype=np.float64).reshape(idx.shape)
    _, vjp = mulfa_weights_and_vjp(params, pts, idx, geometry)
    return vjp(up)
