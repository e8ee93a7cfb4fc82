"""Time the compiled kernels against the NumPy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]

Inputs mimic a 2D multilinear model (four corners per query) on a 64x64
grid.  Both backends are imported directly, so the environment switch is
not needed; the compiled one is skipped when it is not built.
"""

import argparse
import timeit

import numpy as np

from gridtangent import _pyfallback

try:
    from gridtangent import _ext
except ImportError:
    _ext = None


def make_inputs(n, m_side=64, d=3, seed=0):
    rng = np.random.default_rng(seed)
    m = m_side * m_side
    base = rng.integers(0, m_side - 1, size=(n, 2))
    flat = base[:, 0] + m_side * base[:, 1]
    idx = np.stack([flat, flat + 1, flat + m_side, flat + m_side + 1], axis=1).astype(np.int64)
    wts = rng.uniform(size=(n, 4))
    wts /= wts.sum(axis=1, keepdims=True)
    feats = rng.normal(size=(m, d))
    vals = rng.normal(size=(n, d))
    return idx, wts, feats, vals, m


def cases(n_points, n_gtk):
    idx, wts, feats, vals, m = make_inputs(n_points)
    gidx, gw = idx[:n_gtk], wts[:n_gtk]
    return {
        f"gather n={n_points}": lambda impl: impl.gather(idx, wts, feats),
        f"scatter_add n={n_points}": lambda impl: impl.scatter_add(idx, wts, vals, m),
        f"gtk_pairwise n={n_gtk}": lambda impl: impl.gtk_pairwise(gidx, gw, gidx, gw),
    }


def bench(fn, repeat):
    number = 1
    while timeit.timeit(fn, number=number) < 0.05:
        number *= 2
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--points", type=int, default=100_000)
    parser.add_argument("--gtk-points", type=int, default=1_000)
    args = parser.parse_args(argv)
    print(f"{'kernel':<26}{'python [ms]':>14}{'cython [ms]':>14}{'speed-up':>10}  max |diff|")
    for name, run in cases(args.points, args.gtk_points).items():
        t_py = bench(lambda: run(_pyfallback), args.repeat)
        if _ext is None:
            print(f"{name:<26}{t_py * 1e3:>14.3f}{'n/a':>14}{'':>10}")
            continue
        t_cy = bench(lambda: run(_ext), args.repeat)
        diff = float(np.max(np.abs(np.asarray(run(_ext)) - np.asarray(run(_pyfallback)))))
        print(f"{name:<26}{t_py * 1e3:>14.3f}{t_cy * 1e3:>14.3f}{t_py / t_cy:>9.1f}x  {diff:.2e}")


if __name__ == "__main__":
    main()
