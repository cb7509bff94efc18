"""Independent reference implementations used to check the library.

Everything here is deliberately written along a different route than the
package code: dense Floyd-Warshall instead of BFS, matrix-power triangle
counting instead of neighbor-set intersection, explicit midrank enumeration
instead of scipy ranking, closed-form OLS sums instead of the trend module.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import zeta
from scipy.stats import t as student_t


def draw_shifted_powerlaw(rng, n, beta, c, z_min, grid=2_000_000):
    """Inverse-CDF draws from P(z) = (c+z)^-beta / H(beta, z_min+c)."""
    zs = np.arange(z_min, z_min + grid, dtype=np.float64)
    pmf = (zs + c) ** (-beta) / zeta(beta, z_min + c)
    cum = np.cumsum(pmf)
    u = rng.random(n)
    idx = np.searchsorted(cum, u, side="left")
    if (idx >= grid - 1).any():
        raise RuntimeError("oracle grid too small for these parameters")
    return (z_min + idx).astype(np.int64)


def dense_adjacency(n, edges):
    a = np.zeros((n, n), dtype=bool)
    for u, v in edges:
        a[u, v] = True
        a[v, u] = True
    return a


def floyd_warshall_mean_path(n, edges):
    """Mean distance over ordered pairs of the largest component."""
    dist = np.full((n, n), np.inf)
    np.fill_diagonal(dist, 0.0)
    for u, v in edges:
        dist[u, v] = 1.0
        dist[v, u] = 1.0
    for k in range(n):
        np.minimum(dist, dist[:, k, None] + dist[None, k, :], out=dist)
    # components from reachability
    seen = np.zeros(n, dtype=bool)
    best = None
    for i in range(n):
        if seen[i]:
            continue
        comp = np.nonzero(np.isfinite(dist[i]))[0]
        seen[comp] = True
        if best is None or comp.size > best.size:
            best = comp
    if best.size < 2:
        raise ValueError("largest component smaller than 2")
    sub = dist[np.ix_(best, best)]
    total = sub.sum()  # diagonal contributes 0
    return total / (best.size * (best.size - 1))


def matrix_clustering(n, edges):
    """Mean local clustering from triangle counts via matrix powers."""
    a = dense_adjacency(n, edges).astype(np.int64)
    deg = a.sum(axis=1)
    triangles = np.diag(a @ a @ a) / 2
    out = 0.0
    for v in range(n):
        k = int(deg[v])
        if k >= 2:
            out += triangles[v] / (k * (k - 1) / 2)
    return out / n


def midrank(values):
    """Midranks by explicit counting: rank = #smaller + (#equal + 1) / 2."""
    values = list(values)
    ranks = []
    for v in values:
        smaller = sum(1 for w in values if w < v)
        equal = sum(1 for w in values if w == v)
        ranks.append(smaller + (equal + 1) / 2.0)
    return ranks


def spearman_counts(counts_a: dict, counts_b: dict) -> float:
    """Union-with-zeros Spearman from first principles."""
    ids = sorted(set(counts_a) | set(counts_b))
    xa = [counts_a.get(i, 0) for i in ids]
    xb = [counts_b.get(i, 0) for i in ids]
    ra = midrank(xa)
    rb = midrank(xb)
    n = len(ids)
    ma = sum(ra) / n
    mb = sum(rb) / n
    cov = sum((x - ma) * (y - mb) for x, y in zip(ra, rb))
    va = sum((x - ma) ** 2 for x in ra)
    vb = sum((y - mb) ** 2 for y in rb)
    return cov / math.sqrt(va * vb)


def ols_line(x, y):
    """Closed-form OLS: (slope, intercept, stderr, t, p)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = x.size
    mx, my = x.mean(), y.mean()
    sxx = ((x - mx) ** 2).sum()
    slope = ((x - mx) * (y - my)).sum() / sxx
    intercept = my - slope * mx
    sse = ((y - intercept - slope * x) ** 2).sum()
    stderr = math.sqrt(sse / (n - 2) / sxx)
    t = slope / stderr
    p = 2.0 * float(student_t.sf(abs(t), n - 2))
    return slope, intercept, stderr, t, p


def sorted_median(values):
    vals = sorted(values)
    n = len(vals)
    if n % 2 == 1:
        return vals[n // 2]
    return (vals[n // 2 - 1] + vals[n // 2]) / 2.0
