"""Synthetic corpora with planted statistical structure.

These generators are the verification oracles for the whole pipeline: the
planted codeword stream is exactly recoverable (chroma bits are written as
0.9/0.1, so any pitch threshold in (0.1, 0.9] round-trips), the rank law and
transition graph are known, and the loudness drift is planted on the median
in dB space with the quartile spread held constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .corpus import Corpus, Track
from .sampler import stream_key

KINDS = ("zipf_mandelbrot", "markov", "loudness_drift")

_STREAM_SYNTH = 3
_Z75 = 0.6744897501960817  # standard normal 75th percentile

__all__ = ["KINDS", "GeneratorSpec", "synth_corpus", "planted_codes"]


@dataclass(frozen=True)
class GeneratorSpec:
    """Parameters of one synthetic corpus; same spec + seed = identical corpus."""

    kind: str
    years: tuple[int, ...]
    tracks_per_year: int
    beats_per_track: int
    seed: int = 0
    # zipf_mandelbrot: P(rank r) ~ (offset + r)^(-exponent), r = 1..vocabulary
    vocabulary: int = 64
    exponent: float = 1.0
    offset: float = 1.0
    id_order: tuple[int, ...] | None = None  # rank -> codeword id; default identity
    # markov: random walk over the planted adjacency, uniform out-edges
    transitions: Mapping[int, tuple[int, ...]] | None = None
    # loudness_drift: median starts at -exp(mu0) dBFS and moves drift dB/year
    mu0: float = math.log(22.0)
    drift_db_per_year: float = 0.0
    sigma0: float = 0.25

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}")
        if not self.years:
            raise ValueError("years must be non-empty")
        if self.tracks_per_year < 1 or self.beats_per_track < 1:
            raise ValueError("tracks_per_year and beats_per_track must be >= 1")
        if self.kind == "zipf_mandelbrot":
            if not 1 <= self.vocabulary <= 4096:
                raise ValueError(f"vocabulary must be in [1, 4096], got {self.vocabulary}")
            if self.exponent <= 0.0 or self.offset < 0.0:
                raise ValueError("need exponent > 0 and offset >= 0")
            if self.id_order is not None:
                if sorted(self.id_order) != list(range(self.vocabulary)):
                    raise ValueError("id_order must be a permutation of 0..vocabulary-1")
        if self.kind == "markov":
            if not self.transitions:
                raise ValueError("markov kind needs a planted transition graph")
            nodes = set(self.transitions)
            for node, outs in self.transitions.items():
                if not outs:
                    raise ValueError(f"node {node} has no out-edges")
                if not 0 <= node < 4096 or any(not 0 <= o < 4096 for o in outs):
                    raise ValueError("markov node ids must be in [0, 4096)")
                if any(o not in nodes for o in outs):
                    raise ValueError(f"node {node} points outside the planted graph")
        if self.kind == "loudness_drift":
            span = max(self.years) - min(self.years)
            if math.exp(self.mu0) - self.drift_db_per_year * span <= 0.0:
                raise ValueError("drift would push the median to or above 0 dBFS")
            if self.sigma0 <= 0.0:
                raise ValueError("sigma0 must be > 0")


_BITS = (1 << np.arange(12)).astype(np.int64)


def _chroma_patterns(ids: np.ndarray) -> np.ndarray:
    """0.9 where the id bit is set, 0.1 elsewhere."""
    bits = (ids[:, None] & _BITS[None, :]) > 0
    return np.where(bits, 0.9, 0.1)


def _timbre_patterns(ids: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Continuous coefficients centered on the planted bits.

    A two-point +-1 pattern would collapse under median calibration (any bit
    set less than half the time gets a -1 median, so the bit saturates); the
    unit-variance spread keeps timbre codewords varied while still tracking
    the planted structure.
    """
    bits = (ids[:, None] & _BITS[None, :]) > 0
    return np.where(bits, 1.0, -1.0) + rng.normal(0.0, 1.0, (ids.size, 12))


def _rank_cdf(vocabulary: int, exponent: float, offset: float) -> np.ndarray:
    ranks = np.arange(1, vocabulary + 1, dtype=np.float64)
    pmf = (offset + ranks) ** (-exponent)
    pmf /= pmf.sum()
    return np.cumsum(pmf)


def _track_rng(spec: GeneratorSpec, year: int, idx: int) -> np.random.Generator:
    return np.random.default_rng(stream_key(spec.seed, _STREAM_SYNTH, year, idx))


def _zipf_track_codes(spec: GeneratorSpec, rng: np.random.Generator) -> np.ndarray:
    cdf = _rank_cdf(spec.vocabulary, spec.exponent, spec.offset)
    draws = np.searchsorted(cdf, rng.random(spec.beats_per_track), side="left")
    draws = np.minimum(draws, spec.vocabulary - 1)
    if spec.id_order is not None:
        return np.asarray(spec.id_order, dtype=np.int64)[draws]
    return draws.astype(np.int64)


def _markov_track_codes(spec: GeneratorSpec, rng: np.random.Generator) -> np.ndarray:
    nodes = sorted(spec.transitions)
    out = {n: tuple(spec.transitions[n]) for n in nodes}
    codes = np.empty(spec.beats_per_track, dtype=np.int64)
    current = nodes[int(rng.integers(len(nodes)))]
    codes[0] = current
    for t in range(1, spec.beats_per_track):
        outs = out[current]
        current = outs[int(rng.integers(len(outs)))]
        codes[t] = current
    return codes


def _stationary_loudness(rng: np.random.Generator, n: int) -> np.ndarray:
    # fixed reversed log-normal around -18 dBFS for non-loudness experiments
    return -np.exp(rng.normal(math.log(18.0), 0.3, n))


def _drift_params(spec: GeneratorSpec, year: int) -> tuple[float, float]:
    """(mu_year, sigma_year) keeping |Q1-Q3| constant while the median drifts."""
    scale0 = math.exp(spec.mu0)
    spread0 = scale0 * 2.0 * math.sinh(_Z75 * spec.sigma0)
    scale = scale0 - spec.drift_db_per_year * (year - min(spec.years))
    mu = math.log(scale)
    sigma = math.asinh(spread0 / (2.0 * scale)) / _Z75
    return mu, sigma


def planted_codes(spec: GeneratorSpec) -> dict[str, np.ndarray]:
    """The exact codeword stream each track encodes to, keyed by track_id."""
    if spec.kind == "loudness_drift":
        raise ValueError("loudness_drift plants values, not a codeword stream")
    out: dict[str, np.ndarray] = {}
    for year in spec.years:
        for idx in range(spec.tracks_per_year):
            rng = _track_rng(spec, year, idx)
            if spec.kind == "zipf_mandelbrot":
                codes = _zipf_track_codes(spec, rng)
            else:
                codes = _markov_track_codes(spec, rng)
            out[_track_id(year, idx)] = codes
    return out


def _track_id(year: int, idx: int) -> str:
    return f"y{year:04d}t{idx:05d}"


def synth_corpus(spec: GeneratorSpec) -> Corpus:
    """Generate the corpus; canonical ordering matches generation order."""
    tracks = []
    for year in spec.years:
        for idx in range(spec.tracks_per_year):
            rng = _track_rng(spec, year, idx)
            n = spec.beats_per_track
            if spec.kind == "zipf_mandelbrot":
                codes = _zipf_track_codes(spec, rng)
                chroma = _chroma_patterns(codes)
                timbre = _timbre_patterns(codes, rng)
                loudness = _stationary_loudness(rng, n)
            elif spec.kind == "markov":
                codes = _markov_track_codes(spec, rng)
                chroma = _chroma_patterns(codes)
                timbre = _timbre_patterns(codes, rng)
                loudness = _stationary_loudness(rng, n)
            else:
                mu, sigma = _drift_params(spec, year)
                loudness = -np.exp(rng.normal(mu, sigma, n))
                # stationary zipf fill so pitch/timbre analyses stay meaningful
                cdf = _rank_cdf(64, 1.0, 1.0)
                codes = np.searchsorted(cdf, rng.random(n), side="left").astype(np.int64)
                codes = np.minimum(codes, 63)
                chroma = _chroma_patterns(codes)
                timbre = _timbre_patterns(codes, rng)
            tracks.append(Track(track_id=_track_id(year, idx), year=int(year),
                                chroma=chroma, timbre=timbre, loudness_db=loudness))
    return Corpus.from_tracks(tracks)
