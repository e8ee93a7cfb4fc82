"""Signed distance fields of analytic shapes and the metrics used to score fits.

Distances are negative inside.  Shapes live in the unit square/cube.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Union

import numpy as np

from ..geometry import ConfigError
from ..model import Dataset, GridModel
from ..training import TrainConfig, train
from .images import Metrics

__all__ = [
    "Circle",
    "Box",
    "Sphere",
    "Torus",
    "SdfTask",
    "analytic_sdf",
    "analytic_normal",
    "surface_samples",
    "eval_grid",
    "iou_metric",
    "nae_metric",
    "fit_sdf",
    "shape_from_dict",
]

#: Predicted gradients shorter than this are treated as zero in the NAE.
GRAD_EPS = 1e-12


def _vec(v, dim, name):
    a = np.asarray(v, dtype=np.float64)
    if a.shape != (dim,):
        raise ConfigError(f"{name} must have {dim} components")
    return a


def _check_inside(lo, hi):
    if np.any(lo < 0.0) or np.any(hi > 1.0):
        raise ConfigError("shape must fit inside the unit domain")


@dataclass(frozen=True)
class Circle:
    center: tuple
    radius: float
    dim = 2

    def __post_init__(self):
        c = _vec(self.center, self.dim, "circle center")
        if not self.radius > 0:
            raise ConfigError("circle radius must be positive")
        _check_inside(c - self.radius, c + self.radius)


@dataclass(frozen=True)
class Sphere:
    center: tuple
    radius: float
    dim = 3

    def __post_init__(self):
        c = _vec(self.center, self.dim, "sphere center")
        if not self.radius > 0:
            raise ConfigError("sphere radius must be positive")
        _check_inside(c - self.radius, c + self.radius)


@dataclass(frozen=True)
class Box:
    center: tuple
    half_extents: tuple

    def __post_init__(self):
        h = np.asarray(self.half_extents, dtype=np.float64)
        if h.ndim != 1 or h.size not in (2, 3):
            raise ConfigError("box must be 2D or 3D")
        c = _vec(self.center, h.size, "box center")
        if np.any(h <= 0):
            raise ConfigError("box half extents must be positive")
        _check_inside(c - h, c + h)

    @property
    def dim(self) -> int:
        return len(self.half_extents)


@dataclass(frozen=True)
class Torus:
    """Torus around the z axis through ``center``."""

    center: tuple
    major: float
    minor: float
    dim = 3

    def __post_init__(self):
        c = _vec(self.center, 3, "torus center")
        if not (self.major > 0 and self.minor > 0):
            raise ConfigError("torus radii must be positive")
        if self.minor >= self.major:
            raise ConfigError("torus minor radius must be below the major radius")
        reach = self.major + self.minor
        _check_inside(c - [reach, reach, self.minor], c + [reach, reach, self.minor])


Shape = Union[Circle, Sphere, Box, Torus]


def shape_from_dict(spec: dict) -> Shape:
    """Build a shape from ``{"type": ..., ...}`` as used in run configs."""
    spec = dict(spec)
    kind = spec.pop("type", None)
    makers = {"circle": Circle, "sphere": Sphere, "box": Box, "torus": Torus}
    if kind not in makers:
        raise ConfigError(f"task.shape.type must be one of {sorted(makers)}, got {kind!r}")
    try:
        return makers[kind](**{k: tuple(v) if isinstance(v, list) else v for k, v in spec.items()})
    except TypeError as exc:
        raise ConfigError(f"task.shape: {exc}") from None


def _points(shape, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != shape.dim:
        raise ValueError(f"{type(shape).__name__} needs {shape.dim}D points")
    return x, single


def analytic_sdf(shape: Shape, x) -> np.ndarray:
    """Exact signed distance at ``x`` (one point or ``(n, D)``)."""
    x, single = _points(shape, x)
    c = np.asarray(shape.center, dtype=np.float64)
    p = x - c
    if isinstance(shape, (Circle, Sphere)):
        d = np.linalg.norm(p, axis=1) - shape.radius
    elif isinstance(shape, Box):
        q = np.abs(p) - np.asarray(shape.half_extents, dtype=np.float64)
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        inside = np.minimum(q.max(axis=1), 0.0)
        d = outside + inside
    elif isinstance(shape, Torus):
        ring = np.hypot(p[:, 0], p[:, 1]) - shape.major
        d = np.hypot(ring, p[:, 2]) - shape.minor
    else:
        raise ConfigError(f"unknown shape {shape!r}")
    return d[0] if single else d


def _unit(v):
    n = np.linalg.norm(v, axis=1, keepdims=True)
    return v / np.where(n > 0, n, 1.0)


def analytic_normal(shape: Shape, x) -> np.ndarray:
    """Unit gradient of the signed distance (outward normal on the surface)."""
    x, single = _points(shape, x)
    p = x - np.asarray(shape.center, dtype=np.float64)
    if isinstance(shape, (Circle, Sphere)):
        n = _unit(p)
    elif isinstance(shape, Box):
        q = np.abs(p) - np.asarray(shape.half_extents, dtype=np.float64)
        sgn = np.where(p < 0, -1.0, 1.0)
        out = np.any(q > 0, axis=1)
        n = np.where(out[:, None], _unit(np.maximum(q, 0.0)) * sgn, 0.0)
        ax = np.argmax(q, axis=1)
        rows = np.nonzero(~out)[0]
        n[rows, ax[rows]] = sgn[rows, ax[rows]]
    elif isinstance(shape, Torus):
        rho = np.hypot(p[:, 0], p[:, 1])
        radial = p[:, :2] / np.where(rho > 0, rho, 1.0)[:, None]
        ring = rho - shape.major
        n = _unit(np.column_stack([ring[:, None] * radial, p[:, 2]]))
    else:
        raise ConfigError(f"unknown shape {shape!r}")
    return n[0] if single else n


def surface_samples(shape: Shape, n: int, rng=None) -> np.ndarray:
    """``n`` points on the surface, made by projecting uniform points along the normal."""
    rng = np.random.default_rng(rng)
    out = np.empty((0, shape.dim))
    while len(out) < n:
        x = rng.uniform(0.0, 1.0, size=(2 * n, shape.dim))
        nrm = analytic_normal(shape, x)
        ok = np.linalg.norm(nrm, axis=1) > 0.5
        x, nrm = x[ok], nrm[ok]
        out = np.vstack([out, x - analytic_sdf(shape, x)[:, None] * nrm])
    return out[:n]


def eval_grid(dim: int, resolution: int) -> np.ndarray:
    """Cell-centre sample points of a ``resolution**dim`` grid over the unit cube."""
    if resolution < 2:
        raise ConfigError("evaluation resolution must be >= 2")
    axis = (np.arange(resolution) + 0.5) / resolution
    mesh = np.meshgrid(*([axis] * dim), indexing="ij")
    return np.stack(mesh, axis=-1).reshape(-1, dim)


def _scalar_field(field, x):
    return np.asarray(field(x), dtype=np.float64).reshape(len(x))


def iou_metric(field, shape: Shape, resolution: int):
    """Intersection over union of the regions ``field <= 0`` and ``sdf <= 0``.

    ``field`` is any callable mapping ``(n, D)`` points to values (a trained
    :class:`~gridtangent.model.GridModel` works).  Returns ``(iou, empty)``;
    when both regions are empty the IoU is 1.0 and ``empty`` is ``True``.
    """
    x = eval_grid(shape.dim, resolution)
    pred = _scalar_field(field, x) <= 0.0
    true = analytic_sdf(shape, x) <= 0.0
    union = int(np.count_nonzero(pred | true))
    if union == 0:
        return 1.0, True
    return np.count_nonzero(pred & true) / union, False


def nae_metric(field, shape: Shape, n_samples: int = 1000, h: float = 1.0 / 128, rng=None):
    """Mean normal angular error in degrees over analytic surface samples.

    Predicted normals are central differences of ``field`` with step ``h``.
    Samples with a vanishing predicted gradient are excluded; returns
    ``(degrees, excluded_count)``.  With every sample excluded the angle is
    ``nan``.
    """
    pts = surface_samples(shape, n_samples, rng)
    dim = shape.dim
    grads = np.empty_like(pts)
    for a in range(dim):
        step = np.zeros(dim)
        step[a] = h
        grads[:, a] = (_scalar_field(field, pts + step) - _scalar_field(field, pts - step)) / (2 * h)
    norm = np.linalg.norm(grads, axis=1)
    keep = norm > GRAD_EPS
    excluded = int(np.count_nonzero(~keep))
    if not np.any(keep):
        return float("nan"), excluded
    pred = grads[keep] / norm[keep, None]
    true = analytic_normal(shape, pts[keep])
    cos = np.clip(np.sum(pred * true, axis=1), -1.0, 1.0)
    return float(np.degrees(np.arccos(cos)).mean()), excluded


@dataclass(eq=False)
class SdfTask:
    """Sampling budget and evaluation setup for fitting one analytic shape.

    Training points are half uniform in the unit cube and half on the
    surface jittered by Gaussian noise of scale ``surface_noise``; targets
    are exact signed distances.
    """

    shape: Shape
    n_volume: int = 4096
    n_surface: int = 4096
    eval_resolution: int = 64
    surface_noise: float = 0.01
    nae_samples: int = 1000

    def __post_init__(self):
        if self.n_volume < 0 or self.n_surface < 0 or self.n_volume + self.n_surface < 1:
            raise ConfigError("need at least one SDF training sample")
        if self.eval_resolution < 2:
            raise ConfigError("eval_resolution must be >= 2")
        if self.surface_noise < 0:
            raise ConfigError("surface_noise must be non-negative")

    @property
    def dim(self) -> int:
        return self.shape.dim

    def dataset(self, rng=None) -> Dataset:
        rng = np.random.default_rng(rng)
        vol = rng.uniform(0.0, 1.0, size=(self.n_volume, self.dim))
        surf = surface_samples(self.shape, self.n_surface, rng)
        surf = np.clip(surf + rng.normal(0.0, self.surface_noise, size=surf.shape), 0.0, 1.0)
        X = np.vstack([vol, surf])
        return Dataset(X, analytic_sdf(self.shape, X))


def fit_sdf(task: SdfTask, model: GridModel, config: TrainConfig):
    """Train ``model`` on samples of ``task``; returns ``(model, history, metrics)``.

    IoU on the evaluation grid and NAE (finite-difference step of half a
    grid cell) are recorded at every snapshot.  Sampling uses ``config.seed``.
    """
    if model.geometry.dim != task.dim:
        raise ConfigError(f"geometry is {model.geometry.dim}D but the shape is {task.dim}D")
    if model.out_dim != 1:
        raise ConfigError("SDF fitting needs a scalar model")
    geom = model.geometry
    if geom.kind == "regular":
        h = 0.5 * float(np.min(geom.cell_width))
    else:
        h = 0.5 / task.eval_resolution
    data = task.dataset(np.random.default_rng([config.seed, 1]))
    records: List[Metrics] = []

    def record(step, current):
        iou, _ = iou_metric(current, task.shape, task.eval_resolution)
        nae, _ = nae_metric(current, task.shape, task.nae_samples, h,
                            np.random.default_rng([config.seed, 2]))
        records.append(Metrics(step=step, iou=iou, nae=nae))

    trained, history = train(model, data, config, callback=record)
    return trained, history, records
