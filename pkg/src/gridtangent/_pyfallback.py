"""Pure NumPy implementations of the hot grid kernels.

Every function here has a twin with the same signature in the compiled
``_ext`` module.  Both backends accumulate in the same corner order, so they
agree to within rounding of the final reduction.
"""

import numpy as np

# Max number of (i, j, a, b) comparisons materialised at once in gtk_pairwise.
_GTK_CHUNK = 1 << 22


def gather(idx, wts, feats):
    """``out[i] = sum_c wts[i, c] * feats[idx[i, c]]``."""
    out = np.zeros((idx.shape[0], feats.shape[1]))
    for c in range(idx.shape[1]):
        out += wts[:, c, None] * feats[idx[:, c]]
    return out


def scatter_add(idx, wts, vals, m):
    """Transpose of :func:`gather`: ``out[idx[i, c]] += wts[i, c] * vals[i]``."""
    flat = idx.ravel()
    out = np.empty((m, vals.shape[1]))
    for ch in range(vals.shape[1]):
        contrib = (wts * vals[:, ch, None]).ravel()
        out[:, ch] = np.bincount(flat, weights=contrib, minlength=m)
    return out


def gtk_pairwise(idx_a, w_a, idx_b, w_b):
    """Inner products of sparse kernel-weight vectors.

    ``G[i, j] = sum over shared nodes r of phi_a[i, r] * phi_b[j, r]``.
    """
    na, ka = idx_a.shape
    nb, kb = idx_b.shape
    out = np.empty((na, nb))
    rows = max(1, _GTK_CHUNK // max(1, nb * ka * kb))
    for start in range(0, na, rows):
        sl = slice(start, start + rows)
        same = idx_a[sl, None, :, None] == idx_b[None, :, None, :]
        prod = w_a[sl, None, :, None] * w_b[None, :, None, :]
        out[sl] = np.where(same, prod, 0.0).sum(axis=(2, 3))
    return out
