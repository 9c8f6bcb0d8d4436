"""Reference correlation measures for 1-D (city resolution) series.

PCC, a normalized mutual information and a normalized dynamic time warping
score, all mapped onto comparable ranges so pairs of series can be ranked
against each other.  These measures look at whole series at once; they are
the global yardstick the topology pipeline is contrasted with.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainMismatchError


def _pairwise_clean(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DomainMismatchError(f"series lengths differ: {len(x)} vs {len(y)}")
    keep = np.isfinite(x) & np.isfinite(y)
    return x[keep], y[keep]


def pcc(x, y) -> float | None:
    """Pearson correlation in [-1, 1]; None when a series has no variance."""
    x, y = _pairwise_clean(x, y)
    if len(x) < 2:
        return None
    sx, sy = np.std(x), np.std(y)
    if sx == 0.0 or sy == 0.0:
        return None
    cov = np.mean((x - np.mean(x)) * (y - np.mean(y)))
    return float(cov / (sx * sy))


def nmi(x, y, bins: int = 16) -> float | None:
    """Mutual information normalized by sqrt(H(X) H(Y)), in [0, 1].

    Series are discretized into equal-width bins over their own ranges;
    entropies use log base 2 with 0 log 0 = 0.  None when either series
    has zero entropy (a single occupied bin).
    """
    if bins < 2:
        raise ValueError("need at least two bins")
    x, y = _pairwise_clean(x, y)
    if len(x) < 2:
        return None
    joint, _, _ = np.histogram2d(x, y, bins=bins)
    pxy = joint / joint.sum()
    px = pxy.sum(axis=1)
    py = pxy.sum(axis=0)

    def entropy(p):
        p = p[p > 0]
        return float(-np.sum(p * np.log2(p)))

    hx, hy = entropy(px), entropy(py)
    if hx == 0.0 or hy == 0.0:
        return None
    nz = pxy > 0
    info = float(np.sum(pxy[nz] * np.log2(pxy[nz] / np.outer(px, py)[nz])))
    return info / np.sqrt(hx * hy)


def dtw_distance(x, y) -> float:
    """Classic full-window DTW with absolute-difference local cost, O(n m)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, m = len(x), len(y)
    if n == 0 or m == 0:
        raise DomainMismatchError("DTW needs nonempty series")
    prev = np.full(m + 1, np.inf)
    prev[0] = 0.0
    cur = np.empty(m + 1)
    for i in range(1, n + 1):
        cur[0] = np.inf
        xi = x[i - 1]
        costs = np.abs(y - xi)
        best = prev[0]
        for j in range(1, m + 1):
            best = costs[j - 1] + min(prev[j], prev[j - 1], best)
            cur[j] = best
        prev, cur = cur, prev
    return float(prev[m])


def _znorm(x: np.ndarray) -> np.ndarray | None:
    s = np.std(x)
    if s == 0.0:
        return None
    return (x - np.mean(x)) / s


def ndtw(x, y) -> float | None:
    """Normalized DTW: 1 - DTW(X, Y) / (DTW(X, 0) + DTW(0, Y)) on
    Z-normalized inputs, in [0, 1].  Warping tolerates unequal lengths, so
    no-data entries are dropped per series rather than pairwise; the zero
    series matches each argument's own length.  None when a series has no
    variance."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    x, y = x[np.isfinite(x)], y[np.isfinite(y)]
    if len(x) < 1 or len(y) < 1:
        return None
    zx, zy = _znorm(x), _znorm(y)
    if zx is None or zy is None:
        return None
    denom = dtw_distance(zx, np.zeros(len(zx))) + dtw_distance(np.zeros(len(zy)), zy)
    if denom == 0.0:
        return None
    return 1.0 - dtw_distance(zx, zy) / denom


METHODS = {"pcc": pcc, "mi": nmi, "dtw": ndtw}
