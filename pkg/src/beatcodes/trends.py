"""Per-year metric series, OLS trend tests, and the consolidated report.

Replicate values are averaged into one point per central year before the
regression; per-year standard deviations are kept for error bars. Slope
significance uses the exact Student-t distribution with n-2 degrees of
freedom (series are short, a normal approximation would overstate
significance).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np
from scipy.stats import t as student_t

from .distfit import CorrelationMatrix

# metrics a facet report may carry, in output order
REPORT_METRICS = (
    "beta",
    "gamma",
    "median_degree",
    "l",
    "C",
    "Gamma",
    "S",
    "loudness_median_db",
    "loudness_spread_db",
)

__all__ = [
    "REPORT_METRICS",
    "YearSeries",
    "TrendTest",
    "FacetYearResult",
    "EvolutionReport",
    "ols_trend",
    "assemble_report",
]


@dataclass(frozen=True)
class YearSeries:
    """Replicate-averaged values of one metric per central year."""

    metric_name: str
    years: tuple[int, ...]
    means: tuple[float, ...]
    sds: tuple[float, ...]

    def __post_init__(self):
        if not (len(self.years) == len(self.means) == len(self.sds)):
            raise ValueError("years, means, sds must align")
        if any(b <= a for a, b in zip(self.years, self.years[1:])):
            raise ValueError("years must be strictly increasing")

    def __len__(self) -> int:
        return len(self.years)

    @classmethod
    def from_replicates(cls, metric_name: str, per_year: Mapping[int, Iterable[float]]) -> "YearSeries":
        years = []
        means = []
        sds = []
        for year in sorted(per_year):
            vals = np.asarray([v for v in per_year[year] if v is not None and math.isfinite(v)],
                              dtype=np.float64)
            if vals.size == 0:
                continue
            years.append(int(year))
            means.append(float(vals.mean()))
            sds.append(float(vals.std(ddof=0)))
        return cls(metric_name=metric_name, years=tuple(years), means=tuple(means), sds=tuple(sds))

    def as_dict(self) -> dict:
        return {
            "metric": self.metric_name,
            "years": list(self.years),
            "means": list(self.means),
            "sds": list(self.sds),
        }


@dataclass(frozen=True)
class TrendTest:
    """OLS slope with a two-sided t-test (n-2 degrees of freedom)."""

    slope: float
    intercept: float
    stderr: float
    t_stat: float
    p_value: float
    n: int

    def as_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "stderr": self.stderr,
            "t_stat": self.t_stat,
            "p_value": self.p_value,
            "n": self.n,
        }


def ols_trend(series: YearSeries) -> TrendTest:
    """Least-squares trend of the series values against the year.

    A residual-free sloped line gets p = 0; a perfectly constant series gets
    slope 0, t = 0, p = 1.
    """
    n = len(series)
    if n < 3:
        raise ValueError(f"trend test needs at least 3 points, got {n}")
    x = np.asarray(series.years, dtype=np.float64)
    y = np.asarray(series.means, dtype=np.float64)
    sxx = float(((x - x.mean()) ** 2).sum())
    if sxx == 0.0:
        raise ValueError("all years identical")
    slope = float(((x - x.mean()) * (y - y.mean())).sum() / sxx)
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (intercept + slope * x)
    sse = float((resid ** 2).sum())
    sst = float(((y - y.mean()) ** 2).sum())
    # treat numerically exact fits as exact: rounding noise scales with SST
    if sse <= 1e-12 * max(sst, 1e-300):
        if slope == 0.0:
            return TrendTest(slope=0.0, intercept=intercept, stderr=0.0,
                             t_stat=0.0, p_value=1.0, n=n)
        return TrendTest(slope=slope, intercept=intercept, stderr=0.0,
                         t_stat=math.inf, p_value=0.0, n=n)
    stderr = math.sqrt(sse / (n - 2) / sxx)
    t_stat = slope / stderr
    p_value = float(2.0 * student_t.sf(abs(t_stat), n - 2))
    return TrendTest(slope=slope, intercept=intercept, stderr=stderr,
                     t_stat=t_stat, p_value=p_value, n=n)


@dataclass(frozen=True)
class FacetYearResult:
    """Flattened per-(facet, year, replicate) metric values from the pipeline."""

    facet: str
    center_year: int
    replicate_index: int
    fingerprint: str
    metrics: Mapping[str, float | None]


@dataclass(frozen=True)
class EvolutionReport:
    """One facet's series, trend tests, and rank-correlation matrix."""

    facet: str
    fingerprint: str
    series: Mapping[str, YearSeries]
    trends: Mapping[str, TrendTest | None]
    correlation: CorrelationMatrix | None

    def as_dict(self) -> dict:
        return {
            "facet": self.facet,
            "fingerprint": self.fingerprint,
            "series": {k: v.as_dict() for k, v in self.series.items()},
            "trends": {k: (v.as_dict() if v is not None else None) for k, v in self.trends.items()},
            "correlation": (
                {
                    "years": list(self.correlation.years),
                    "rho": [[float(v) for v in row] for row in self.correlation.rho],
                }
                if self.correlation is not None
                else None
            ),
        }


def assemble_report(results: Iterable[FacetYearResult],
                    correlations: Mapping[str, CorrelationMatrix] | None = None,
                    fingerprint: str | None = None) -> dict[str, EvolutionReport]:
    """Aggregate replicate results into per-facet reports with trend tests.

    Mixed configuration fingerprints are rejected. Trend tests on series
    shorter than 3 points are marked not applicable (None).
    """
    results = list(results)
    if not results:
        raise ValueError("no results to report")
    fps = {r.fingerprint for r in results}
    if fingerprint is not None:
        fps.add(fingerprint)
    if len(fps) != 1:
        raise ValueError(f"inconsistent configuration fingerprints: {sorted(fps)}")
    fp = fps.pop()

    by_facet: dict[str, list[FacetYearResult]] = {}
    for r in results:
        by_facet.setdefault(r.facet, []).append(r)

    reports: dict[str, EvolutionReport] = {}
    for facet, rows in sorted(by_facet.items()):
        series: dict[str, YearSeries] = {}
        trends: dict[str, TrendTest | None] = {}
        for metric in REPORT_METRICS:
            per_year: dict[int, list[float]] = {}
            for r in rows:
                v = r.metrics.get(metric)
                if v is not None and math.isfinite(v):
                    per_year.setdefault(r.center_year, []).append(float(v))
            if not per_year:
                continue
            ys = YearSeries.from_replicates(metric, per_year)
            series[metric] = ys
            trends[metric] = ols_trend(ys) if len(ys) >= 3 else None
        corr = correlations.get(facet) if correlations else None
        reports[facet] = EvolutionReport(facet=facet, fingerprint=fp, series=series,
                                         trends=trends, correlation=corr)
    return reports
