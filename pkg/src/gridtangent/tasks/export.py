"""Sample a field on a dense grid and write it to disk.

2D scalar fields become an 8-bit PGM plus a JSON sidecar holding the affine
map back to field values (``value = offset + scale * byte``); 2D RGB fields
become a PPM clipped to ``[0, 1]``; 3D scalar fields become a CSV of
``x,y,z,value`` rows.
"""

from __future__ import annotations

import json
import os

import numpy as np

from ..geometry import ConfigError
from .netpbm import write_netpbm

__all__ = ["sample_field", "export_field", "quantize", "atomic_write"]


def atomic_write(path, data) -> None:
    """Write ``data`` (str or bytes) to ``path`` via a temporary file and rename."""
    tmp = f"{path}.tmp"
    mode = "wb" if isinstance(data, (bytes, bytearray)) else "w"
    with open(tmp, mode, **({} if mode == "wb" else {"newline": "\n"})) as fh:
        fh.write(data)
    os.replace(tmp, path)


def _bounds_of(field, dim):
    geom = getattr(field, "geometry", None)
    if geom is not None:
        return np.asarray(geom.bounds, dtype=np.float64)
    return np.array([[0.0, 1.0]] * dim)


def sample_field(field, resolution, bounds=None):
    """Evaluate ``field`` at cell centres of a dense grid.

    ``resolution`` is a per-axis tuple (or one int with ``bounds`` giving the
    dimension).  Returns ``(points, values)`` with ``values`` shaped
    ``resolution + (d,)``; axis 0 of the result is the first coordinate.
    """
    if np.ndim(resolution) == 0:
        dim = len(bounds) if bounds is not None else _bounds_of(field, 0).shape[0]
        resolution = (int(resolution),) * dim
    res = tuple(int(r) for r in resolution)
    if any(r < 2 for r in res):
        raise ConfigError("export resolution must be >= 2 per axis")
    b = np.asarray(bounds, dtype=np.float64) if bounds is not None else _bounds_of(field, len(res))
    if b.shape != (len(res), 2):
        raise ConfigError("bounds do not match the export resolution")
    axes = [lo + (np.arange(r) + 0.5) / r * (hi - lo) for r, (lo, hi) in zip(res, b)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(res))
    vals = np.asarray(field(pts), dtype=np.float64).reshape(len(pts), -1)
    return pts, vals.reshape(res + (vals.shape[1],))


def quantize(values):
    """Affinely map scalars onto ``0..255``; returns ``(bytes, offset, scale)``."""
    lo, hi = float(np.min(values)), float(np.max(values))
    scale = (hi - lo) / 255.0
    if scale == 0.0:
        return np.zeros(np.shape(values), dtype=np.uint8), lo, 0.0
    q = np.rint((np.asarray(values) - lo) / scale)
    return np.clip(q, 0, 255).astype(np.uint8), lo, scale


def export_field(field, path, resolution, bounds=None) -> dict:
    """Sample ``field`` and write the file format that suits its shape.

    Returns a description dict (format, resolution and, for PGM, the value
    mapping that was also written to ``<path>.json``).
    """
    pts, vals = sample_field(field, resolution, bounds)
    dim = pts.shape[1]
    channels = vals.shape[-1]
    res = list(vals.shape[:-1])
    if dim == 2 and channels == 1:
        q, offset, scale = quantize(vals[..., 0])
        write_netpbm(path, q)
        info = {"format": "pgm", "resolution": res, "offset": offset, "scale": scale}
        atomic_write(f"{path}.json", json.dumps(info, indent=2, sort_keys=True) + "\n")
        return info
    if dim == 2 and channels == 3:
        write_netpbm(path, np.rint(np.clip(vals, 0.0, 1.0) * 255.0).astype(np.uint8))
        return {"format": "ppm", "resolution": res}
    if dim == 3 and channels == 1:
        lines = ["x,y,z,value"]
        lines += [",".join(f"{v:.17g}" for v in (*p, f)) for p, f in zip(pts, vals.reshape(-1))]
        atomic_write(path, "\n".join(lines) + "\n")
        return {"format": "csv", "resolution": res}
    raise ConfigError(f"cannot export a {dim}D field with {channels} channels")
