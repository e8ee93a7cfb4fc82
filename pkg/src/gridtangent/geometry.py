"""Grid geometry and index functions for regular and irregular grids.

Coordinates are arrays of shape ``(n, D)``.  Regular grids store their nodes
with axis 0 varying fastest: the node with multi-index ``(i_0, ..., i_{D-1})``
has flat index ``i_0 + N_0 * (i_1 + N_1 * (i_2 + ...))``.  Viewed as a dense
array of shape ``(N_{D-1}, ..., N_0)`` this is ordinary row-major order, so a
2D grid reads as ``[row, col]`` with ``x[0]`` selecting the column.

Corners of a regular cell are enumerated so that bit ``a`` of the corner
number is the offset along axis ``a``; this makes corner order coincide with
ascending flat index.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "ConfigError",
    "GridGeometry",
    "index_regular",
    "index_irregular",
    "locate",
]


class ConfigError(ValueError):
    """Raised when a model, kernel or run configuration is malformed."""


def is_single_point(x, dim: int) -> bool:
    x = np.asarray(x)
    return x.ndim == 0 or (x.ndim == 1 and x.shape[0] == dim)


def _as_points(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x.reshape(1, -1) if x.shape[0] == dim else x.reshape(-1, 1)
    if x.shape[-1] != dim:
        raise ValueError(f"expected coordinates with {dim} components, got shape {x.shape}")
    return x


@dataclass(eq=False)
class GridGeometry:
    """Node layout of a grid-based model.

    Use :meth:`regular` or :meth:`irregular` rather than the constructor.
    """

    kind: str
    bounds: np.ndarray
    resolution: Optional[tuple] = None
    points: Optional[np.ndarray] = None
    k: int = 8
    _strides: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.bounds = np.asarray(self.bounds, dtype=np.float64)
        if self.bounds.ndim != 2 or self.bounds.shape[1] != 2:
            raise ConfigError("bounds must have shape (D, 2)")
        if not np.all(np.isfinite(self.bounds)) or np.any(self.bounds[:, 0] >= self.bounds[:, 1]):
            raise ConfigError("bounds need min < max on every axis")
        if self.kind == "regular":
            if self.resolution is None:
                raise ConfigError("regular grid needs a resolution")
            self.resolution = tuple(int(n) for n in self.resolution)
            if len(self.resolution) != self.bounds.shape[0]:
                raise ConfigError("resolution and bounds disagree on dimension")
            if any(n < 2 for n in self.resolution):
                raise ConfigError("every regular grid resolution must be >= 2")
            self._strides = np.cumprod((1,) + self.resolution[:-1]).astype(np.int64)
        elif self.kind == "irregular":
            if self.points is None:
                raise ConfigError("irregular grid needs node positions")
            self.points = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
            if self.points.shape[1] != self.bounds.shape[0]:
                raise ConfigError("node positions and bounds disagree on dimension")
            if not np.all(np.isfinite(self.points)):
                raise ConfigError("node positions must be finite")
            self.k = int(self.k)
            if not 1 <= self.k <= len(self.points):
                raise ConfigError(f"neighbour count k={self.k} must satisfy 1 <= k <= m={len(self.points)}")
            self._strides = np.zeros(0, dtype=np.int64)
        else:
            raise ConfigError(f"unknown grid kind {self.kind!r}")

    @classmethod
    def regular(cls, resolution: Sequence[int], bounds=None) -> "GridGeometry":
        resolution = tuple(resolution)
        if bounds is None:
            bounds = [[0.0, 1.0]] * len(resolution)
        return cls("regular", bounds, resolution=resolution)

    @classmethod
    def irregular(cls, points, k: int = 8, bounds=None) -> "GridGeometry":
        points = np.asarray(points, dtype=np.float64)
        if points.ndim == 1:
            points = points.reshape(-1, 1)
        if bounds is None:
            bounds = [[0.0, 1.0]] * points.shape[1]
        return cls("irregular", bounds, points=points, k=k)

    @property
    def dim(self) -> int:
        return self.bounds.shape[0]

    @property
    def num_nodes(self) -> int:
        if self.kind == "regular":
            return int(np.prod(self.resolution))
        return len(self.points)

    @property
    def neighbors(self) -> int:
        """Size of every index set ``U(x)``."""
        return 2 ** self.dim if self.kind == "regular" else self.k

    @property
    def extent(self) -> np.ndarray:
        return self.bounds[:, 1] - self.bounds[:, 0]

    @property
    def cell_width(self) -> np.ndarray:
        if self.kind != "regular":
            raise ValueError("cell width is only defined for regular grids")
        return self.extent / (np.asarray(self.resolution) - 1)

    def as_points(self, x) -> np.ndarray:
        return _as_points(x, self.dim)

    def clamp(self, x) -> np.ndarray:
        x = self.as_points(x)
        return np.clip(x, self.bounds[:, 0], self.bounds[:, 1])

    def normalize(self, x) -> np.ndarray:
        """Map coordinates (clamped to the box) into the unit cube."""
        return (self.clamp(x) - self.bounds[:, 0]) / self.extent

    def multi_index(self, flat) -> np.ndarray:
        flat = np.asarray(flat, dtype=np.int64)
        res = np.asarray(self.resolution, dtype=np.int64)
        return (flat[..., None] // self._strides) % res

    def flat_index(self, multi) -> np.ndarray:
        return np.asarray(multi, dtype=np.int64) @ self._strides

    def node_unit_coords(self, nodes=None) -> np.ndarray:
        """Node centres mapped into the unit cube, shape ``(..., D)``."""
        if nodes is None:
            nodes = np.arange(self.num_nodes)
        nodes = np.asarray(nodes, dtype=np.int64)
        if self.kind == "regular":
            return self.multi_index(nodes) / (np.asarray(self.resolution) - 1.0)
        return (self.points[nodes] - self.bounds[:, 0]) / self.extent

    def node_positions(self, nodes=None) -> np.ndarray:
        """Node centres in domain coordinates."""
        if self.kind == "irregular":
            return self.points if nodes is None else self.points[np.asarray(nodes)]
        return self.bounds[:, 0] + self.node_unit_coords(nodes) * self.extent

    def corner_offsets(self) -> np.ndarray:
        """``(2**D, D)`` 0/1 offsets; row ``c`` has bit ``a`` of ``c`` in column ``a``."""
        c = np.arange(2 ** self.dim)
        return (c[:, None] >> np.arange(self.dim)) & 1


def locate(geometry: GridGeometry, x) -> tuple:
    """Cell corners and in-cell fractions for a regular grid.

    Returns ``(indices, frac)`` with shapes ``(n, 2**D)`` and ``(n, D)``.
    Points on an interior face belong to the lower cell; the upper domain
    boundary clamps into the last cell.
    """
    if geometry.kind != "regular":
        raise ValueError("locate() needs a regular grid")
    u = geometry.normalize(x)
    last = np.asarray(geometry.resolution) - 1
    t = u * last
    cell = np.clip(np.ceil(t) - 1, 0, last - 1).astype(np.int64)
    frac = t - cell
    corners = cell[:, None, :] + geometry.corner_offsets()[None, :, :]
    return geometry.flat_index(corners), frac


def index_regular(geometry: GridGeometry, x) -> np.ndarray:
    """Flat indices of the ``2**D`` corners of the cell holding each point.

    A single point gives a 1-D array; a batch gives ``(n, 2**D)``.
    """
    single = is_single_point(x, geometry.dim)
    idx, _ = locate(geometry, x)
    return idx[0] if single else idx


def index_irregular(geometry: GridGeometry, x) -> np.ndarray:
    """Indices of the ``k`` nearest nodes (exact search), ascending.

    Distance ties go to the lower node index.
    """
    if geometry.kind != "irregular":
        raise ValueError("index_irregular() needs an irregular grid")
    single = is_single_point(x, geometry.dim)
    pts = geometry.clamp(x)
    d2 = ((pts[:, None, :] - geometry.points[None, :, :]) ** 2).sum(axis=-1)
    nearest = np.argsort(d2, axis=1, kind="stable")[:, : geometry.k]
    nearest.sort(axis=1)
    return nearest[0] if single else nearest


def index_set(geometry: GridGeometry, x) -> np.ndarray:
    """Dispatch to the index function matching the geometry (batch form)."""
    if geometry.kind == "regular":
        return locate(geometry, x)[0]
    return index_irregular(geometry, geometry.as_points(x))
