"""Discretization of beat descriptors into small-integer codewords.

Pitch and timbre use 12-bit binary codewords (vocabulary 4096): bit i of the
id corresponds to coordinate i, bit 0 (pitch class C) is least significant.
Loudness uses fixed-width dB bins over [floor_db, 0]. Ties are inclusive
everywhere: a value exactly at its threshold sets the bit / lands in the
upper bin, so comparisons never depend on platform rounding of the inputs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Corpus, Track, corpus_hash

FACETS = ("pitch", "timbre", "loudness")
FACET_CODES = {"pitch": 0, "timbre": 1, "loudness": 2}
PITCH_VOCAB = 4096
TIMBRE_VOCAB = 4096

_BIT_WEIGHTS = (1 << np.arange(12)).astype(np.int64)

__all__ = [
    "FACETS",
    "FACET_CODES",
    "PITCH_VOCAB",
    "TIMBRE_VOCAB",
    "Codeword",
    "TimbreCalibration",
    "EncoderConfig",
    "CalibrationMismatchError",
    "encode_pitch",
    "encode_timbre",
    "encode_loudness",
    "pitch_ids",
    "timbre_ids",
    "loudness_ids",
    "loudness_num_bins",
    "calibrate_timbre",
    "save_calibration",
    "load_calibration",
    "encode_track",
]


class CalibrationMismatchError(ValueError):
    """Persisted calibration does not match the corpus it is applied to."""


@dataclass(frozen=True)
class Codeword:
    facet: str
    id: int

    def __post_init__(self):
        if self.facet not in FACETS:
            raise ValueError(f"unknown facet {self.facet!r}")
        if self.id < 0:
            raise ValueError(f"negative codeword id {self.id}")


@dataclass(frozen=True)
class TimbreCalibration:
    """Corpus-wide per-coefficient timbre medians, with the source corpus hash."""

    medians: tuple[float, ...]
    corpus_hash: str | None = None

    def __post_init__(self):
        if len(self.medians) != 12 or not all(math.isfinite(m) for m in self.medians):
            raise ValueError("calibration needs 12 finite medians")


@dataclass(frozen=True)
class EncoderConfig:
    """Encoder parameters; recorded in every report for reproducibility."""

    pitch_threshold: float = 0.5
    loudness_bin_width: float = 1.0
    loudness_floor_db: float = -60.0

    def __post_init__(self):
        if not 0.0 < self.pitch_threshold <= 1.0:
            raise ValueError(f"pitch_threshold must be in (0, 1], got {self.pitch_threshold}")
        if self.loudness_bin_width <= 0.0:
            raise ValueError(f"loudness_bin_width must be > 0, got {self.loudness_bin_width}")
        if self.loudness_floor_db >= 0.0:
            raise ValueError(f"loudness_floor_db must be < 0, got {self.loudness_floor_db}")

    @property
    def loudness_bins(self) -> int:
        return loudness_num_bins(self.loudness_bin_width, self.loudness_floor_db)

    def vocabulary(self, facet: str) -> int:
        if facet == "pitch":
            return PITCH_VOCAB
        if facet == "timbre":
            return TIMBRE_VOCAB
        if facet == "loudness":
            return self.loudness_bins
        raise ValueError(f"unknown facet {facet!r}")


def pitch_ids(chroma: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Vectorized binary pitch encoding for an (n, 12) chroma matrix."""
    chroma = np.asarray(chroma, dtype=np.float64)
    if chroma.ndim != 2 or chroma.shape[1] != 12:
        raise ValueError(f"chroma matrix must be (n, 12), got {chroma.shape}")
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")
    if chroma.min(initial=0.0) < 0.0 or chroma.max(initial=0.0) > 1.0:
        raise ValueError("chroma values outside [0, 1]")
    return (chroma >= threshold) @ _BIT_WEIGHTS


def encode_pitch(chroma, threshold: float = 0.5) -> Codeword:
    """Binary discretization: bit i set iff chroma[i] >= threshold."""
    ids = pitch_ids(np.asarray(chroma, dtype=np.float64).reshape(1, 12), threshold)
    return Codeword("pitch", int(ids[0]))


def timbre_ids(timbre: np.ndarray, cal: TimbreCalibration) -> np.ndarray:
    timbre = np.asarray(timbre, dtype=np.float64)
    if timbre.ndim != 2 or timbre.shape[1] != 12:
        raise ValueError(f"timbre matrix must be (n, 12), got {timbre.shape}")
    if not np.isfinite(timbre).all():
        raise ValueError("timbre values must be finite")
    medians = np.asarray(cal.medians, dtype=np.float64)
    return (timbre >= medians) @ _BIT_WEIGHTS


def encode_timbre(timbre, cal: TimbreCalibration) -> Codeword:
    """Binary discretization against corpus medians: bit j set iff t[j] >= median[j]."""
    ids = timbre_ids(np.asarray(timbre, dtype=np.float64).reshape(1, 12), cal)
    return Codeword("timbre", int(ids[0]))


def loudness_num_bins(bin_width: float = 1.0, floor_db: float = -60.0) -> int:
    if bin_width <= 0.0 or floor_db >= 0.0:
        raise ValueError("need bin_width > 0 and floor_db < 0")
    return int(math.ceil(-floor_db / bin_width))


def loudness_ids(values: np.ndarray, bin_width: float = 1.0, floor_db: float = -60.0) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if values.size and values.max() > 0.0:
        raise ValueError("loudness values above 0 dBFS")
    n_bins = loudness_num_bins(bin_width, floor_db)
    clamped = np.clip(values, floor_db, 0.0)
    ids = np.floor((clamped - floor_db) / bin_width).astype(np.int64)
    return np.minimum(ids, n_bins - 1)


def encode_loudness(x: float, bin_width: float = 1.0, floor_db: float = -60.0) -> Codeword:
    """Fixed-width dB binning of [floor_db, 0]; x = 0 lands in the top bin."""
    ids = loudness_ids(np.asarray([x], dtype=np.float64), bin_width, floor_db)
    return Codeword("loudness", int(ids[0]))


def calibrate_timbre(corpus: Corpus) -> TimbreCalibration:
    """Per-coefficient median over every beat of every track.

    Even counts use the average of the two central order statistics. The
    result carries the corpus content hash so a persisted calibration can be
    refused when applied to a different corpus.
    """
    if not corpus.tracks:
        raise ValueError("cannot calibrate on an empty corpus")
    stacked = np.concatenate([t.timbre for t in corpus.tracks], axis=0)
    medians = np.median(stacked, axis=0)
    return TimbreCalibration(medians=tuple(float(m) for m in medians), corpus_hash=corpus_hash(corpus))


def save_calibration(cal: TimbreCalibration, path) -> None:
    record = {"medians": list(cal.medians), "corpus_hash": cal.corpus_hash}
    Path(path).write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_calibration(path, expected_hash: str | None = None, force: bool = False) -> TimbreCalibration:
    """Load a persisted calibration; refuse a corpus-hash mismatch unless forced."""
    record = json.loads(Path(path).read_text(encoding="utf-8"))
    cal = TimbreCalibration(medians=tuple(float(m) for m in record["medians"]),
                            corpus_hash=record.get("corpus_hash"))
    if expected_hash is not None and cal.corpus_hash != expected_hash and not force:
        raise CalibrationMismatchError(
            f"calibration was built for corpus {cal.corpus_hash!r}, not {expected_hash!r}; "
            "pass force to override")
    return cal


def encode_track(track: Track, facet: str, config: EncoderConfig = EncoderConfig(),
                 calibration: TimbreCalibration | None = None) -> np.ndarray:
    """Encode one track's beats for the given facet, as an int array in beat order."""
    if facet == "pitch":
        return pitch_ids(track.chroma, config.pitch_threshold).astype(np.int32)
    if facet == "timbre":
        if calibration is None:
            raise ValueError("timbre encoding requires a TimbreCalibration")
        return timbre_ids(track.timbre, calibration).astype(np.int32)
    if facet == "loudness":
        return loudness_ids(track.loudness_db, config.loudness_bin_width,
                            config.loudness_floor_db).astype(np.int32)
    raise ValueError(f"unknown facet {facet!r}")
