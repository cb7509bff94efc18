"""Frequency counting, heavy-tailed fits, loudness fits, and rank correlation.

The count distribution is modeled as a shifted discrete power law

    P(z) = (c + z)^(-beta) / H(beta, z_min + c)    for z >= z_min,

where H is the Hurwitz zeta function. Parameters are maximum-likelihood
estimates on the tail z >= z_min; z_min is chosen from a candidate grid by
minimal Kolmogorov-Smirnov distance. Degree distributions use the same
machinery with c pinned to 0. The rank-law exponent alpha = 1/(beta - 1) is
derived, never fitted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import minimize, minimize_scalar
from scipy.special import zeta
from scipy.stats import rankdata

from .sampler import Sample, stream_key

_BETA_BOUNDS = (1.0 + 1e-6, 10.0)
_C_BOUNDS = (0.0, 1000.0)
_MIN_TAIL = 50
_STREAM_BOOTSTRAP = 4

__all__ = [
    "DegenerateDataError",
    "FitConvergenceError",
    "RankedCounts",
    "PowerLawFit",
    "LogNormalFit",
    "CorrelationMatrix",
    "rank_frequency",
    "default_z_min_grid",
    "fit_shifted_powerlaw",
    "fit_degree_powerlaw",
    "bootstrap_gof",
    "sample_counts_model",
    "fit_reversed_lognormal",
    "spearman",
    "correlation_matrix",
    "rank_frequency_csv",
    "correlation_csv",
]


class DegenerateDataError(ValueError):
    """The data carries no usable variation for the requested fit."""


class FitConvergenceError(RuntimeError):
    """The optimizer failed to converge; diagnostics attached."""

    def __init__(self, message: str, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True, eq=False)
class RankedCounts:
    """Codeword counts sorted by decreasing count, ties by ascending id.

    `ids[k]` has rank k+1. Relative frequencies sum to 1 over the vocabulary
    observed in the sample.
    """

    ids: np.ndarray
    counts: np.ndarray
    total: int

    def __post_init__(self):
        if self.ids.shape != self.counts.shape:
            raise ValueError("ids and counts must align")

    @classmethod
    def from_values(cls, values: np.ndarray) -> "RankedCounts":
        values = np.asarray(values).ravel()
        if values.size == 0:
            raise ValueError("empty sample")
        ids, counts = np.unique(values, return_counts=True)
        return cls._ordered(ids.astype(np.int64), counts.astype(np.int64))

    @classmethod
    def from_mapping(cls, mapping: Mapping[int, int]) -> "RankedCounts":
        if not mapping:
            raise ValueError("empty mapping")
        ids = np.fromiter(mapping.keys(), dtype=np.int64, count=len(mapping))
        counts = np.fromiter(mapping.values(), dtype=np.int64, count=len(mapping))
        return cls._ordered(ids, counts)

    @classmethod
    def merged(cls, parts: Iterable["RankedCounts"]) -> "RankedCounts":
        """Sum counts per id across parts (replicate merging)."""
        acc: dict[int, int] = {}
        for part in parts:
            for i, z in zip(part.ids.tolist(), part.counts.tolist()):
                acc[i] = acc.get(i, 0) + z
        return cls.from_mapping(acc)

    @classmethod
    def _ordered(cls, ids: np.ndarray, counts: np.ndarray) -> "RankedCounts":
        if (counts < 1).any():
            raise ValueError("counts must be >= 1")
        order = np.lexsort((ids, -counts))
        return cls(ids=ids[order], counts=counts[order], total=int(counts.sum()))

    @property
    def rel_freqs(self) -> np.ndarray:
        return self.counts / self.total

    @property
    def ranks(self) -> np.ndarray:
        return np.arange(1, self.ids.size + 1)

    def __len__(self) -> int:
        return int(self.ids.size)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RankedCounts):
            return NotImplemented
        return (self.total == other.total
                and np.array_equal(self.ids, other.ids)
                and np.array_equal(self.counts, other.counts))


def rank_frequency(sample: Sample) -> RankedCounts:
    """Exact codeword counts over every beat of a sample."""
    if sample.total_beats == 0:
        raise ValueError("empty sample")
    rc = RankedCounts.from_values(sample.concatenated())
    assert rc.total == sample.total_beats
    return rc


@dataclass(frozen=True)
class PowerLawFit:
    """MLE tail fit of P(z) = (c+z)^(-beta) / H(beta, z_min+c) for z >= z_min."""

    beta: float
    c: float
    z_min: int
    ks: float
    n_tail: int
    log_likelihood: float

    @property
    def alpha(self) -> float:
        return 1.0 / (self.beta - 1.0)

    def as_dict(self) -> dict:
        return {
            "beta": self.beta,
            "c": self.c,
            "z_min": self.z_min,
            "alpha": self.alpha,
            "ks": self.ks,
            "n_tail": self.n_tail,
            "log_likelihood": self.log_likelihood,
        }


def _count_values(data) -> np.ndarray:
    if isinstance(data, RankedCounts):
        return data.counts.astype(np.int64)
    values = np.asarray(data).ravel()
    if values.size == 0:
        raise ValueError("empty data")
    if not np.issubdtype(values.dtype, np.integer):
        rounded = np.rint(values)
        if not np.array_equal(rounded, values):
            raise ValueError("counts must be integers")
        values = rounded
    return values.astype(np.int64)


def _compress_tail(values: np.ndarray, z_min: int) -> tuple[np.ndarray, np.ndarray]:
    tail = values[values >= z_min]
    v, w = np.unique(tail, return_counts=True)
    return v.astype(np.float64), w.astype(np.float64)


def default_z_min_grid(values: np.ndarray) -> tuple[int, ...]:
    """Powers of two from 1 up to the 90th percentile of distinct counts."""
    distinct = np.unique(values)
    top = float(np.quantile(distinct, 0.9))
    grid = [1]
    while grid[-1] * 2 <= max(1.0, top):
        grid.append(grid[-1] * 2)
    return tuple(grid)


def _model_cdf(v: np.ndarray, beta: float, c: float, z_min: int) -> np.ndarray:
    norm = zeta(beta, z_min + c)
    return 1.0 - zeta(beta, v + 1.0 + c) / norm


def _ks_distance(v: np.ndarray, w: np.ndarray, beta: float, c: float, z_min: int) -> float:
    ecdf = np.cumsum(w) / w.sum()
    return float(np.max(np.abs(ecdf - _model_cdf(v, beta, c, z_min))))


def _neg_log_likelihood(v, w, n, beta, c, z_min) -> float:
    if not (math.isfinite(beta) and math.isfinite(c)) or beta <= 1.0 or c < 0.0:
        return 1e300
    norm = float(zeta(beta, z_min + c))
    if not math.isfinite(norm) or norm <= 0.0:
        return 1e300
    return beta * float(w @ np.log(v + c)) + n * math.log(norm)


def _fit_tail_free_c(v, w, z_min, starts=None) -> tuple[float, float, float]:
    n = float(w.sum())

    def nll(params):
        return _neg_log_likelihood(v, w, n, params[0], params[1], z_min)

    if starts is None:
        starts = [(1.5, 0.5), (2.5, 1.0), (1.2, 10.0), (4.0, 1.0), (2.0, 100.0)]
    best = None
    failures = []
    for start in starts:
        res = minimize(nll, np.asarray(start, dtype=np.float64), method="L-BFGS-B",
                       bounds=[_BETA_BOUNDS, _C_BOUNDS])
        if not res.success:
            failures.append((start, res.message))
            continue
        if best is None or res.fun < best.fun:
            best = res
    if best is None:
        raise FitConvergenceError(
            f"shifted power-law fit failed for all starts at z_min={z_min}", failures)
    return float(best.x[0]), float(best.x[1]), float(best.fun)


def _fit_tail_fixed_c(v, w, z_min, c=0.0) -> tuple[float, float, float]:
    n = float(w.sum())
    res = minimize_scalar(lambda b: _neg_log_likelihood(v, w, n, b, c, z_min),
                          bounds=_BETA_BOUNDS, method="bounded",
                          options={"xatol": 1e-10})
    if not res.success:
        raise FitConvergenceError(f"power-law fit failed at z_min={z_min}", res)
    return float(res.x), float(c), float(res.fun)


def _fit_powerlaw(values: np.ndarray, candidates, min_tail: int, fix_c: bool) -> PowerLawFit:
    if candidates is None:
        candidates = default_z_min_grid(values)
    candidates = sorted({int(z) for z in candidates})
    if not candidates or candidates[0] < 1:
        raise ValueError("z_min candidates must be integers >= 1")
    if np.unique(values[values >= candidates[0]]).size < 2:
        raise DegenerateDataError("all counts in the fitting range are equal")

    results = []
    for zm in candidates:
        v, w = _compress_tail(values, zm)
        n_tail = int(w.sum())
        if n_tail < min_tail or v.size < 2:
            continue
        if fix_c:
            beta, c, nll = _fit_tail_fixed_c(v, w, zm)
        else:
            beta, c, nll = _fit_tail_free_c(v, w, zm)
        ks = _ks_distance(v, w, beta, c, zm)
        results.append(PowerLawFit(beta=beta, c=c, z_min=zm, ks=ks,
                                   n_tail=n_tail, log_likelihood=-nll))
    if not results:
        raise ValueError(
            f"no usable z_min candidate: every tail has fewer than {min_tail} entries")
    return min(results, key=lambda f: (f.ks, f.z_min))


def fit_shifted_powerlaw(data, z_min_candidates=None, *, min_tail: int = _MIN_TAIL) -> PowerLawFit:
    """Fit the shifted discrete power law to a multiset of counts.

    `data` is a RankedCounts or a raw array of positive integer counts; the
    counts themselves are the random variable. Deterministic given inputs.
    """
    return _fit_powerlaw(_count_values(data), z_min_candidates, min_tail, fix_c=False)


def fit_degree_powerlaw(degrees, k_min_candidates=None, *, min_tail: int = _MIN_TAIL) -> PowerLawFit:
    """Pure power-law fit P(k) = k^(-gamma) / H(gamma, k_min), c pinned to 0."""
    return _fit_powerlaw(_count_values(degrees), k_min_candidates, min_tail, fix_c=True)


def sample_counts_model(rng: np.random.Generator, n: int, beta: float, c: float,
                        z_min: int, grid_cap: int = 1_000_000) -> np.ndarray:
    """Inverse-CDF draws from the fitted tail model.

    The bulk comes from a precomputed pmf grid; the (usually negligible)
    mass beyond the grid is resolved exactly by bisection on the CDF.
    """
    norm = float(zeta(beta, z_min + c))
    top = z_min + 1024
    while (zeta(beta, top + 1 + c) / norm) > 1e-12 and (top - z_min) < grid_cap:
        top = min(z_min + grid_cap, top * 2)
    zs = np.arange(z_min, top + 1, dtype=np.float64)
    pmf = (zs + c) ** (-beta) / norm
    cum = np.cumsum(pmf)
    u = rng.random(n)
    idx = np.searchsorted(cum, u, side="left")
    draws = z_min + idx
    overflow = np.nonzero(idx >= zs.size)[0]
    for i in overflow:
        draws[i] = _inverse_cdf_tail(float(u[i]), beta, c, z_min, lo=top + 1, norm=norm)
    return draws.astype(np.int64)


def _inverse_cdf_tail(u: float, beta: float, c: float, z_min: int, lo: int, norm: float) -> int:
    def cdf(z: float) -> float:
        return 1.0 - float(zeta(beta, z + 1.0 + c)) / norm

    hi = lo
    while cdf(hi) < u:
        hi *= 2
        if hi > 2 ** 62:
            return hi
    lo_b = z_min
    while lo_b < hi:
        mid = (lo_b + hi) // 2
        if cdf(mid) < u:
            lo_b = mid + 1
        else:
            hi = mid
    return int(lo_b)


def bootstrap_gof(data, fit: PowerLawFit, b: int, seed: int = 0,
                  fix_c: bool | None = None) -> float:
    """Parametric bootstrap p-value for a power-law fit.

    Draws B synthetic tails from the fitted model, refits (z_min held at the
    fitted value), and returns the fraction whose KS distance reaches the
    observed one. fix_c defaults to whether the fit itself pinned c.
    """
    if b < 1:
        raise ValueError(f"need b >= 1, got {b}")
    values = _count_values(data)
    v, w = _compress_tail(values, fit.z_min)
    if v.size == 0:
        raise ValueError("no data at or above fit.z_min")
    ks_obs = _ks_distance(v, w, fit.beta, fit.c, fit.z_min)
    n = int(w.sum())
    pinned = (fit.c == 0.0) if fix_c is None else fix_c
    rng = np.random.default_rng(stream_key(seed, _STREAM_BOOTSTRAP))
    exceed = 0
    for _ in range(b):
        draws = sample_counts_model(rng, n, fit.beta, fit.c, fit.z_min)
        bv, bw = _compress_tail(draws, fit.z_min)
        if bv.size < 2:
            beta_i, c_i = fit.beta, fit.c
        elif pinned:
            beta_i, c_i, _ = _fit_tail_fixed_c(bv, bw, fit.z_min)
        else:
            beta_i, c_i, _ = _fit_tail_free_c(bv, bw, fit.z_min,
                                              starts=[(fit.beta, fit.c), (2.5, 1.0)])
        if _ks_distance(bv, bw, beta_i, c_i, fit.z_min) >= ks_obs:
            exceed += 1
    return exceed / b


@dataclass(frozen=True)
class LogNormalFit:
    """Reversed log-normal fit: ln(-x) ~ Normal(mu, sigma) for loudness x < 0.

    Quartiles are empirical (linear-interpolation quantiles) and reported in
    dB alongside the model parameters; spread_db = |Q1 - Q3| is the dynamic
    variability measure.
    """

    mu: float
    sigma: float
    q1_db: float
    q3_db: float
    empirical_median_db: float
    n: int

    @property
    def median_db(self) -> float:
        return -math.exp(self.mu)

    @property
    def spread_db(self) -> float:
        return abs(self.q1_db - self.q3_db)

    def as_dict(self) -> dict:
        return {
            "mu": self.mu,
            "sigma": self.sigma,
            "median_db": self.median_db,
            "empirical_median_db": self.empirical_median_db,
            "q1_db": self.q1_db,
            "q3_db": self.q3_db,
            "spread_db": self.spread_db,
            "n": self.n,
        }


def fit_reversed_lognormal(values) -> LogNormalFit:
    """MLE of the reversed log-normal for strictly negative dBFS values."""
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size < 10:
        raise ValueError(f"need at least 10 values, got {x.size}")
    if (x >= 0.0).any():
        raise ValueError("all values must be < 0 dBFS (log undefined after reversal)")
    logs = np.log(-x)
    mu = float(logs.mean())
    sigma = float(logs.std(ddof=0))
    if sigma == 0.0:
        raise DegenerateDataError("all values identical; sigma would be 0")
    q1, med, q3 = (float(q) for q in np.quantile(x, [0.25, 0.5, 0.75]))
    return LogNormalFit(mu=mu, sigma=sigma, q1_db=q1, q3_db=q3,
                        empirical_median_db=med, n=int(x.size))


def spearman(a: RankedCounts, b: RankedCounts) -> float:
    """Tie-corrected Spearman correlation over the union of codeword ids.

    A codeword absent on one side contributes count 0 there; midranks handle
    the induced ties.
    """
    ids = np.union1d(a.ids, b.ids)
    ca = np.zeros(ids.size, dtype=np.float64)
    cb = np.zeros(ids.size, dtype=np.float64)
    ca[np.searchsorted(ids, a.ids)] = a.counts
    cb[np.searchsorted(ids, b.ids)] = b.counts
    if np.ptp(ca) == 0.0 or np.ptp(cb) == 0.0:
        raise DegenerateDataError("zero variance on one side (all ranks tied)")
    ra = rankdata(ca, method="average")
    rb = rankdata(cb, method="average")
    rho = float(np.corrcoef(ra, rb)[0, 1])
    return min(1.0, max(-1.0, rho))


@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    """Symmetric Spearman matrix over central years, unit diagonal."""

    years: tuple[int, ...]
    rho: np.ndarray

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CorrelationMatrix):
            return NotImplemented
        return self.years == other.years and np.array_equal(self.rho, other.rho)

    def min_off_diagonal(self) -> float:
        n = len(self.years)
        mask = ~np.eye(n, dtype=bool)
        return float(self.rho[mask].min())


def correlation_matrix(per_year: Mapping[int, RankedCounts | Sequence[RankedCounts]]) -> CorrelationMatrix:
    """Pairwise Spearman over years; replicate counts are summed before ranking."""
    if len(per_year) < 2:
        raise ValueError("need at least 2 years")
    years = tuple(sorted(per_year))
    merged = []
    for y in years:
        entry = per_year[y]
        if isinstance(entry, RankedCounts):
            merged.append(entry)
        else:
            merged.append(RankedCounts.merged(entry))
    n = len(years)
    rho = np.eye(n, dtype=np.float64)
    for i in range(n):
        for j in range(i + 1, n):
            r = spearman(merged[i], merged[j])
            rho[i, j] = r
            rho[j, i] = r
    return CorrelationMatrix(years=years, rho=rho)


def rank_frequency_csv(rc: RankedCounts) -> str:
    """CSV with fixed column order: codeword_id,count,rel_freq,rank."""
    lines = ["codeword_id,count,rel_freq,rank"]
    rel = rc.rel_freqs
    for k in range(len(rc)):
        lines.append(f"{int(rc.ids[k])},{int(rc.counts[k])},{float(rel[k])!r},{k + 1}")
    return "\n".join(lines) + "\n"


def correlation_csv(matrix: CorrelationMatrix) -> str:
    """CSV matrix: first column is the year, one column per year after."""
    header = "year," + ",".join(str(y) for y in matrix.years)
    lines = [header]
    for i, y in enumerate(matrix.years):
        row = ",".join(repr(float(v)) for v in matrix.rho[i])
        lines.append(f"{y},{row}")
    return "\n".join(lines) + "\n"
