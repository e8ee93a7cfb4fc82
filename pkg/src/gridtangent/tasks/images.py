"""2D image regression: pixel coordinates in, intensities out."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from ..geometry import ConfigError
from ..model import Dataset, GridModel
from ..training import TrainConfig, train
from .netpbm import read_netpbm

__all__ = ["ImageTask", "Metrics", "load_image", "psnr", "fit_image", "holdout_mask"]


@dataclass
class Metrics:
    """Quality numbers recorded at one training step (``None`` when not measured)."""

    step: int
    psnr: Optional[float] = None
    holdout_psnr: Optional[float] = None
    iou: Optional[float] = None
    nae: Optional[float] = None

    def as_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}


def holdout_mask(height: int, width: int) -> np.ndarray:
    """Fixed checker pattern holding out every 4th pixel (odd row and odd column)."""
    r, c = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    return (r % 2 == 1) & (c % 2 == 1)


@dataclass(eq=False)
class ImageTask:
    """An ``(H, W, C)`` image with values in ``[0, 1]``.

    Pixel ``(r, c)`` sits at ``((r + 0.5) / H, (c + 0.5) / W)`` in the unit
    square.  With ``holdout=True`` a quarter of the pixels (see
    :func:`holdout_mask`) is kept out of training.
    """

    pixels: np.ndarray
    holdout: bool = True

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise ConfigError("image must be H x W x C with C in {1, 3}")
        if px.shape[0] < 2 or px.shape[1] < 2:
            raise ConfigError("image must be at least 2 x 2")
        if not (np.all(np.isfinite(px)) and px.min() >= 0.0 and px.max() <= 1.0):
            raise ConfigError("image values must lie in [0, 1]")
        self.pixels = px

    @property
    def shape(self):
        return self.pixels.shape

    def coordinates(self) -> np.ndarray:
        h, w = self.pixels.shape[:2]
        r, c = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
        return np.stack([(r + 0.5) / h, (c + 0.5) / w], axis=-1).reshape(-1, 2)

    def targets(self) -> np.ndarray:
        return self.pixels.reshape(-1, self.pixels.shape[2])

    def split(self):
        """``(train, holdout)`` datasets; ``holdout`` is ``None`` when disabled."""
        X, Y = self.coordinates(), self.targets()
        if not self.holdout:
            return Dataset(X, Y), None
        mask = holdout_mask(*self.pixels.shape[:2]).ravel()
        return Dataset(X[~mask], Y[~mask]), Dataset(X[mask], Y[mask])


def load_image(path, holdout: bool = True) -> ImageTask:
    """Read an 8-bit PGM/PPM and scale it to ``[0, 1]``."""
    return ImageTask(read_netpbm(path).astype(np.float64) / 255.0, holdout=holdout)


def psnr(predicted, reference) -> float:
    """Peak signal-to-noise ratio in dB for ``[0, 1]`` data; ``inf`` when identical."""
    a = np.asarray(predicted, dtype=np.float64)
    b = np.asarray(reference, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return float("inf")
    return -10.0 * np.log10(mse)


def fit_image(task: ImageTask, model: GridModel, config: TrainConfig):
    """Train ``model`` on the task's training pixels.

    Returns ``(model, history, metrics)`` where ``metrics`` lists train and
    hold-out PSNR at every snapshot.
    """
    if model.geometry.dim != 2:
        raise ConfigError("image fitting needs a 2D geometry")
    if model.out_dim != task.pixels.shape[2]:
        raise ConfigError(f"model outputs {model.out_dim} channels, image has {task.pixels.shape[2]}")
    train_set, hold_set = task.split()
    records: List[Metrics] = []

    def record(step, current):
        m = Metrics(step=step, psnr=psnr(current(train_set.X), train_set.Y))
        if hold_set is not None:
            m.holdout_psnr = psnr(current(hold_set.X), hold_set.Y)
        records.append(m)

    trained, history = train(model, train_set, config, callback=record)
    return trained, history, records
