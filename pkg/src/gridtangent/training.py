"""Gradient-descent training of grid models.

The loss is the half sum of squared residuals, ``L = 1/2 sum_i |Y_i - g(X_i)|^2``
(no mean), which makes one feature-only GD step move the outputs by exactly
``-lr * G (O - Y)``.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import _backend
from .geometry import ConfigError, index_set
from .kernels import MulFA, MulFAParams, mulfa_weights_and_vjp
from .model import Dataset, GridModel

__all__ = [
    "TrainConfig",
    "TrainHistory",
    "DivergenceError",
    "mse_loss",
    "gd_step",
    "train",
    "gradcheck",
]

MODES = ("features", "joint", "decoupled")
OPTIMIZERS = ("gd", "adam")


class DivergenceError(RuntimeError):
    def __init__(self, step: int, loss: float):
        super().__init__(f"loss became non-finite ({loss}) at step {step}")
        self.step = step
        self.loss = loss


@dataclass
class TrainConfig:
    mode: str = "features"
    lr: float = 0.1
    lr_theta: Optional[float] = None
    steps: int = 1000
    batch: Optional[int] = None
    snapshot: int = 100
    seed: int = 0
    t_alt: int = 100
    optimizer: str = "gd"
    record_gtk: bool = False
    betas: tuple = (0.0, 0.999)
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"train.mode must be one of {MODES}, got {self.mode!r}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"train.optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if not self.lr > 0:
            raise ConfigError("train.lr must be positive")
        if self.lr_theta is not None and not self.lr_theta > 0:
            raise ConfigError("train.lr_theta must be positive")
        if int(self.steps) < 1:
            raise ConfigError("train.steps must be >= 1")
        if int(self.snapshot) < 1:
            raise ConfigError("train.snapshot must be >= 1")
        if int(self.t_alt) < 1:
            raise ConfigError("train.t_alt must be >= 1")
        if self.batch is not None and int(self.batch) < 1:
            raise ConfigError("train.batch must be >= 1")

    @property
    def theta_lr(self) -> float:
        return 0.1 * self.lr if self.lr_theta is None else self.lr_theta

    def updates(self, step: int) -> tuple:
        """Which parameter blocks move at ``step``: ``(features, theta)``."""
        if self.mode == "features":
            return True, False
        if self.mode == "joint":
            return True, True
        theta_phase = (step // self.t_alt) % 2 == 0
        return not theta_phase, theta_phase


@dataclass
class TrainHistory:
    mode: str
    zero_init: bool
    loss: List[float] = field(default_factory=list)
    steps: List[int] = field(default_factory=list)
    outputs: List[np.ndarray] = field(default_factory=list)
    weight_change: List[float] = field(default_factory=list)
    gtk_drift: List[float] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("step,loss,weight_change_norm,gtk_drift\n")
        for i, step in enumerate(self.steps):
            drift = self.gtk_drift[i] if i < len(self.gtk_drift) else float("nan")
            buf.write(f"{step},{self.loss[step]:.17g},{self.weight_change[i]:.17g},{drift:.17g}\n")
        return buf.getvalue()


def mse_loss(model: GridModel, data: Dataset) -> float:
    """``1/2 * sum_i |Y_i - g(X_i)|^2``."""
    r = model(data.X) - data.Y
    return 0.5 * float(np.sum(r * r))


class _Adam:
    def __init__(self, betas, eps):
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = {}
        self.v = {}
        self.t = {}

    def direction(self, key, grad):
        m = self.m.setdefault(key, np.zeros_like(grad))
        v = self.v.setdefault(key, np.zeros_like(grad))
        t = self.t[key] = self.t.get(key, 0) + 1
        m *= self.b1
        m += (1 - self.b1) * grad
        v *= self.b2
        v += (1 - self.b2) * grad * grad
        mhat = m / (1 - self.b1 ** t)
        vhat = v / (1 - self.b2 ** t)
        return mhat / (np.sqrt(vhat) + self.eps)


def _gradients(model: GridModel, X, Y, want_theta: bool):
    """Loss, residuals, feature gradient and (optionally) kernel gradient."""
    geom = model.geometry
    pts = geom.as_points(X)
    if want_theta and isinstance(model.kernel, MulFA):
        idx = index_set(geom, pts)
        w, vjp = mulfa_weights_and_vjp(model.kernel.params, pts, idx, geom)
    else:
        idx, w = model.weights(pts)
        vjp = None
    out = _backend.gather(idx, w, model.features)
    res = out - Y
    with np.errstate(over="ignore", invalid="ignore"):
        # A blown-up loss is reported as DivergenceError by the caller.
        loss = 0.5 * float(np.sum(res * res))
    g_w = _backend.scatter_add(idx, w, res, model.num_nodes)
    g_theta = None
    if vjp is not None:
        upstream = np.einsum("nd,nkd->nk", res, model.features[idx])
        g_theta = vjp(upstream)
    return loss, out, g_w, g_theta


class _Trainer:
    def __init__(self, model: GridModel, data: Dataset, config: TrainConfig):
        self.model = model
        self.data = data
        self.config = config
        self.rng = np.random.default_rng(config.seed)
        self.adam = _Adam(config.betas, config.adam_eps) if config.optimizer == "adam" else None

    def _batch(self):
        n = len(self.data)
        b = self.config.batch
        if b is None or b >= n:
            return self.data.X, self.data.Y
        rows = np.sort(self.rng.choice(n, size=int(b), replace=False))
        return self.data.X[rows], self.data.Y[rows]

    def _apply(self, key, param, grad, lr):
        if self.adam is not None:
            grad = self.adam.direction(key, grad)
        param -= lr * grad

    def step(self, step: int) -> float:
        cfg = self.config
        upd_w, upd_theta = cfg.updates(step)
        upd_theta = upd_theta and isinstance(self.model.kernel, MulFA)
        X, Y = self._batch()
        loss, _, g_w, g_theta = _gradients(self.model, X, Y, upd_theta)
        if not math.isfinite(loss):
            raise DivergenceError(step, loss)
        if upd_w:
            self._apply("w", self.model.features, g_w, cfg.lr)
        if upd_theta:
            params = self.model.kernel.params
            for i, (p, g) in enumerate(zip(params.tensors(), g_theta.tensors())):
                self._apply(i, p, g, cfg.theta_lr)
        return loss


def gd_step(model: GridModel, data: Dataset, config: TrainConfig, step: int = 0) -> GridModel:
    """One plain update; returns a new model and leaves ``model`` untouched."""
    trainer = _Trainer(model.copy(), data, config)
    trainer.step(step)
    return trainer.model


def train(model: GridModel, data: Dataset, config: TrainConfig, probe=None, callback=None):
    """Run ``config.steps`` updates; returns ``(trained_model, history)``.

    Snapshots (full-data outputs, weight change, optional GTK drift on
    ``probe`` points, defaulting to the training inputs) are taken at step 0,
    every ``config.snapshot`` steps and at the end.  ``callback(step, model)``
    runs at each snapshot; it must not modify the model.
    """
    from .gtk import gtk_compute

    work = model.copy()
    trainer = _Trainer(work, data, config)
    w0 = work.features.copy()
    history = TrainHistory(mode=config.mode, zero_init=not np.any(w0))
    probe = data.X if probe is None else probe
    G0 = gtk_compute(work, probe).G if config.record_gtk else None

    def snapshot(t, outputs):
        history.steps.append(t)
        history.outputs.append(outputs)
        history.weight_change.append(float(np.linalg.norm(work.features - w0)))
        if G0 is not None:
            history.gtk_drift.append(float(np.max(np.abs(gtk_compute(work, probe).G - G0))))
        if callback is not None:
            callback(t, work)

    for t in range(int(config.steps)):
        if t % config.snapshot == 0:
            snapshot(t, work(data.X))
        history.loss.append(trainer.step(t))
    final_out = work(data.X)
    r = final_out - data.Y
    final_loss = 0.5 * float(np.sum(r * r))
    if not math.isfinite(final_loss):
        raise DivergenceError(int(config.steps), final_loss)
    history.loss.append(final_loss)
    snapshot(int(config.steps), final_out)
    return work, history


#: Gradients whose max norm is below this are treated as vanishing; their
#: relative error is reported as 0 and only the absolute error is meaningful.
GRAD_FLOOR = 1e-12


def _rel_err(a: np.ndarray, f: np.ndarray) -> tuple:
    diff = float(np.max(np.abs(a - f))) if a.size else 0.0
    scale = max(float(np.max(np.abs(a))) if a.size else 0.0, float(np.max(np.abs(f))) if f.size else 0.0)
    return (diff / scale if scale > GRAD_FLOOR else 0.0), diff


def _central_difference(out_plus, out_minus, Y, eps):
    # (L+ - L-) / 2eps, factored as a difference of squares so the large
    # common part of the two losses never cancels.
    return 0.5 * float(np.sum((out_plus - out_minus) * (out_plus + out_minus - 2 * Y))) / (2 * eps)


def gradcheck(model: GridModel, data: Dataset, eps: float = 1e-5) -> dict:
    """Compare analytic loss gradients with central differences.

    Returns ``{"w": rel, "w_abs": abs, "theta": rel, "theta_abs": abs}``;
    the theta entries are ``None`` for kernels without parameters.  Relative
    errors are max-norm differences over the max-norm of the gradients.
    """
    _, _, g_w, g_theta = _gradients(model, data.X, data.Y, True)
    feats = model.features
    fd_w = np.empty_like(feats)
    for idx in np.ndindex(feats.shape):
        orig = feats[idx]
        feats[idx] = orig + eps
        op = model(data.X)
        feats[idx] = orig - eps
        om = model(data.X)
        feats[idx] = orig
        fd_w[idx] = _central_difference(op, om, data.Y, eps)
    report = {}
    report["w"], report["w_abs"] = _rel_err(g_w, fd_w)
    report["theta"] = report["theta_abs"] = None
    if g_theta is not None:
        params: MulFAParams = model.kernel.params
        analytic = g_theta.ravel()
        fd = np.empty_like(analytic)
        pos = 0
        for arr in params.tensors():
            for idx in np.ndindex(arr.shape):
                orig = arr[idx]
                arr[idx] = orig + eps
                op = model(data.X)
                arr[idx] = orig - eps
                om = model(data.X)
                arr[idx] = orig
                fd[pos] = _central_difference(op, om, data.Y, eps)
                pos += 1
        report["theta"], report["theta_abs"] = _rel_err(analytic, fd)
    return report
