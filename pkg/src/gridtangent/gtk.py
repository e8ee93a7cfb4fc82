"""Grid tangent kernel: construction, dynamics, spectra and the Delta term.

Because a grid model is linear in its features, ``dg(x)/dw`` is just the
kernel weight vector of ``x``.  The tangent kernel over a set of queries is
therefore fixed by the kernel parameters alone and is untouched by any amount
of feature-only training.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.linalg

from . import _backend
from .kernels import GaussianRBF, MulFA
from .model import GridModel

__all__ = [
    "GtkMatrix",
    "BoundReport",
    "SpectrumReport",
    "PreconditionError",
    "gradient_matrix",
    "gtk_compute",
    "closed_form_outputs",
    "generalization_delta",
    "bound_map",
    "bound_difference_map",
    "gtk_spectrum",
    "weight_change_bound_check",
    "LAMBDA_MIN_FLAG",
]

#: Smallest GTK eigenvalue below which the bound's premise is flagged.
LAMBDA_MIN_FLAG = 1e-6
DEFAULT_RIDGE = 1e-8


class PreconditionError(RuntimeError):
    """An analysis was asked for on a run that violates its premises."""


def _kernel_fingerprint(model: GridModel) -> str:
    h = hashlib.sha256()
    h.update(model.geometry.kind.encode())
    h.update(model.geometry.bounds.tobytes())
    if model.geometry.kind == "regular":
        h.update(np.asarray(model.geometry.resolution).tobytes())
    else:
        h.update(model.geometry.points.tobytes())
        h.update(str(model.geometry.k).encode())
    h.update(model.kernel.variant.encode())
    if isinstance(model.kernel, MulFA):
        h.update(model.kernel.params.ravel().tobytes())
    elif isinstance(model.kernel, GaussianRBF):
        h.update(repr(model.kernel.resolve_sigma(model.geometry)).encode())
    return h.hexdigest()[:16]


@dataclass(eq=False)
class GtkMatrix:
    G: np.ndarray
    data_fingerprint: str = ""
    kernel_fingerprint: str = ""

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.G)

    @property
    def lambda_min(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[-1])

    @property
    def symmetry_residual(self) -> float:
        return float(np.max(np.abs(self.G - self.G.T))) if self.G.size else 0.0

    @property
    def psd_residual(self) -> float:
        """How far the smallest eigenvalue dips below zero (0 if PSD)."""
        return max(0.0, -self.lambda_min)

    def __array__(self, dtype=None, copy=None):
        return self.G if dtype is None else self.G.astype(dtype)

    @property
    def shape(self):
        return self.G.shape


@dataclass
class BoundReport:
    delta: float
    lambda_min: float
    condition_number: float
    ridge: float
    flagged: bool


@dataclass(eq=False)
class SpectrumReport:
    positions: np.ndarray
    profile: np.ndarray
    magnitude: np.ndarray
    high_frequency_fraction: float
    cutoff_bin: int
    gtk: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def energy(self) -> np.ndarray:
        return self.magnitude ** 2

    @property
    def cumulative_energy_fraction(self) -> np.ndarray:
        e = self.energy
        total = e.sum()
        return np.cumsum(e) / total if total > 0 else np.zeros_like(e)


def _as_matrix(G) -> np.ndarray:
    return G.G if isinstance(G, GtkMatrix) else np.asarray(G, dtype=np.float64)


def _targets(Y, n) -> np.ndarray:
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.shape[0] != n:
        raise ValueError(f"targets have {Y.shape[0]} rows, GTK is {n}x{n}")
    return Y


def gradient_matrix(model: GridModel, X) -> np.ndarray:
    """Dense ``(m, n)`` matrix whose column ``i`` is ``dg(X_i)/dw``."""
    idx, w = model.weights(X)
    n = idx.shape[0]
    Z = np.zeros((model.num_nodes, n))
    np.add.at(Z, (idx, np.broadcast_to(np.arange(n)[:, None], idx.shape)), w)
    return Z


def gtk_compute(model: GridModel, X) -> GtkMatrix:
    """Tangent kernel ``G[i, j] = <dg(X_i)/dw, dg(X_j)/dw>``.

    Computed from the sparse weight vectors directly (shared-node products),
    not through the dense gradient matrix.
    """
    pts = model.geometry.as_points(X)
    idx, w = model.weights(pts)
    G = _backend.gtk_pairwise(idx, w, idx, w)
    # Pairwise products are symmetric up to summation order; pin exact symmetry.
    G = 0.5 * (G + G.T)
    fp = hashlib.sha256(pts.tobytes()).hexdigest()[:16]
    return GtkMatrix(G, data_fingerprint=fp, kernel_fingerprint=_kernel_fingerprint(model))


def closed_form_outputs(G, Y, lr: float, t, method: str = "eig") -> np.ndarray:
    """Outputs after ``t`` steps of feature-only GD from zero features.

    ``O(t) = Y - (I - lr G)^t Y``.  ``t`` may be an int (returns ``Y``'s
    shape) or a sequence of ints (returns a stacked array).  ``method`` is
    ``"eig"`` (eigendecomposition) or ``"power"`` (repeated products).
    """
    Gm = _as_matrix(G)
    n = Gm.shape[0]
    Y = np.asarray(Y, dtype=np.float64)
    Y2 = _targets(Y, n)
    steps = np.atleast_1d(np.asarray(t, dtype=np.int64))
    if np.any(steps < 0):
        raise ValueError("step counts must be non-negative")
    lam, V = np.linalg.eigh(Gm)
    factors = 1.0 - lr * lam
    if np.max(np.abs(factors)) > 1.0 + 1e-12:
        warnings.warn(
            f"learning rate {lr} is divergent for this GTK: spectral radius of (I - lr G) is "
            f"{np.max(np.abs(factors)):.6g} > 1", RuntimeWarning, stacklevel=2)
    out = np.empty((len(steps),) + Y2.shape)
    if method == "eig":
        coeff = V.T @ Y2
        for s, k in enumerate(steps):
            out[s] = Y2 - V @ (factors[:, None] ** k * coeff)
    elif method == "power":
        A = np.eye(n) - lr * Gm
        order = np.argsort(steps, kind="stable")
        R, done = Y2.copy(), 0
        for s in order:
            for _ in range(steps[s] - done):
                R = A @ R
            done = steps[s]
            out[s] = Y2 - R
    else:
        raise ValueError(f"unknown method {method!r}")
    if Y.ndim == 1:
        out = out[..., 0]
    return out[0] if np.ndim(t) == 0 else out


def generalization_delta(G, Y, ridge: float = DEFAULT_RIDGE) -> BoundReport:
    """``Delta = Y^T (G + ridge I)^-1 Y``, summed over output channels."""
    if ridge < 0:
        raise ValueError("ridge must be non-negative")
    Gm = _as_matrix(G)
    n = Gm.shape[0]
    Y = _targets(Y, n)
    lam = np.linalg.eigvalsh(Gm)
    lam_min, lam_max = float(lam[0]), float(lam[-1])
    cond = lam_max / lam_min if lam_min > 0 else float("inf")
    A = Gm + ridge * np.eye(n)
    try:
        c, low = scipy.linalg.cho_factor(A, lower=True)
        white = scipy.linalg.solve_triangular(c, Y, lower=True)
        delta = float(np.sum(white * white))
    except np.linalg.LinAlgError:
        # Not positive definite: fall back to the pseudo-inverse.
        delta = float(np.sum(Y * (np.linalg.pinv(A, hermitian=True) @ Y)))
    return BoundReport(delta=delta, lambda_min=lam_min, condition_number=cond,
                       ridge=float(ridge), flagged=lam_min < LAMBDA_MIN_FLAG)


def _symmetric_axis(lo: float, hi: float, resolution: int) -> np.ndarray:
    ys = np.linspace(lo, hi, resolution)
    if lo == -hi:
        # Exact antisymmetry so (Y1, Y2) and (-Y1, -Y2) hit mirrored cells.
        ys = 0.5 * (ys - ys[::-1])
    return ys


def bound_map(model: GridModel, X, y_range=(-1.0, 1.0), resolution: int = 201,
              ridge: float = DEFAULT_RIDGE):
    """``Delta`` over a grid of two-point label vectors for one model.

    Returns ``(delta, ys, flagged)``: ``delta[i, j]`` is the value at
    ``(Y_1, Y_2) = (ys[i], ys[j])`` and ``flagged`` marks a GTK whose
    smallest eigenvalue is below :data:`LAMBDA_MIN_FLAG`.
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    pts = model.geometry.as_points(X)
    if len(pts) != 2:
        raise ValueError("the bound map uses exactly two sample points")
    ys = _symmetric_axis(float(y_range[0]), float(y_range[1]), resolution)
    Y1, Y2 = np.meshgrid(ys, ys, indexing="ij")
    labels = np.stack([Y1.ravel(), Y2.ravel()])
    G = gtk_compute(model, pts).G
    flagged = float(np.linalg.eigvalsh(G)[0]) < LAMBDA_MIN_FLAG
    A = G + ridge * np.eye(2)
    try:
        c, _ = scipy.linalg.cho_factor(A, lower=True)
        white = scipy.linalg.solve_triangular(c, labels, lower=True)
        delta = np.sum(white * white, axis=0)
    except np.linalg.LinAlgError:
        P = np.linalg.pinv(A, hermitian=True)
        delta = np.einsum("in,ij,jn->n", labels, P, labels)
    return delta.reshape(resolution, resolution), ys, flagged


def bound_difference_map(model_a: GridModel, model_b: GridModel, X, y_range=(-1.0, 1.0),
                         resolution: int = 201, ridge: float = DEFAULT_RIDGE):
    """``Delta_A - Delta_B`` over a grid of two-point label vectors.

    Returns ``(diff, ys, flags)``: ``diff[i, j]`` is the difference at
    ``(Y_1, Y_2) = (ys[i], ys[j])``; ``flags`` holds each model's small
    eigenvalue flag.
    """
    if not (np.array_equal(model_a.geometry.bounds, model_b.geometry.bounds)):
        raise ValueError("both models must share the same domain")
    da, ys, fa = bound_map(model_a, X, y_range, resolution, ridge)
    db, _, fb = bound_map(model_b, X, y_range, resolution, ridge)
    return da - db, ys, (fa, fb)


def line_samples(start, end, n: int) -> np.ndarray:
    start = np.atleast_1d(np.asarray(start, dtype=np.float64))
    end = np.atleast_1d(np.asarray(end, dtype=np.float64))
    s = np.linspace(0.0, 1.0, n)[:, None]
    return start + s * (end - start)


def profile_from_gtk(G: np.ndarray) -> np.ndarray:
    """Average of ``G[i, j]`` over all pairs with ``|i - j| = delta``."""
    n = G.shape[0]
    return np.array([np.concatenate([np.diagonal(G, d), np.diagonal(G, -d)]).mean() for d in range(n)])


def gtk_spectrum(model: GridModel, start, end, n_samples: int = 100) -> SpectrumReport:
    """Fourier spectrum of the GTK along a line segment.

    The GTK of ``n_samples`` evenly spaced points is scaled by its largest
    entry, collapsed to a profile over index offsets, and transformed with a
    real DFT.  The high-frequency fraction is the share of spectral energy in
    bins strictly above ``n_samples / 8``.
    """
    if n_samples < 8 or n_samples % 2:
        raise ValueError("n_samples must be even and >= 8")
    pts = line_samples(start, end, n_samples)
    G = gtk_compute(model, pts).G
    peak = np.max(np.abs(G))
    Gn = G / peak if peak > 0 else G
    prof = profile_from_gtk(Gn)
    mag = np.abs(np.fft.rfft(prof))
    energy = mag ** 2
    cutoff = n_samples // 8
    total = energy.sum()
    frac = float(energy[cutoff + 1 :].sum() / total) if total > 0 else 0.0
    return SpectrumReport(positions=pts, profile=prof, magnitude=mag, high_frequency_fraction=frac,
                          cutoff_bin=cutoff, gtk=Gn)


def weight_change_bound_check(history, G, Y, tol: float = 1e-6):
    """Check ``||w(t) - w(0)||_F <= sqrt(Y^T G^-1 Y)`` at every recorded step.

    Returns ``(holds, worst_margin)`` where the margin is
    ``sqrt(Delta) - ||w(t) - w(0)||_F`` minimised over the recorded steps.
    """
    if history.mode != "features":
        raise PreconditionError("the weight bound needs feature-only training (kernel parameters changed)")
    if not history.zero_init:
        raise PreconditionError("the weight bound needs zero-initialised features")
    Gm = _as_matrix(G)
    lam_min = float(np.linalg.eigvalsh(Gm)[0])
    if lam_min <= LAMBDA_MIN_FLAG:
        raise PreconditionError(f"GTK minimum eigenvalue {lam_min:.3g} is too small for the bound")
    bound = np.sqrt(generalization_delta(Gm, Y, ridge=0.0).delta)
    change = np.asarray(history.weight_change, dtype=np.float64)
    margin = float(np.min(bound - change))
    return bool(np.all(change <= bound + tol)), margin
