"""Seeded Monte Carlo sampling of beat-consecutive codewords per central year.

Tracks are drawn uniformly without replacement from the year window and
contribute their entire encoded beat sequence; the draw stops once the beat
target is reached (the final track is kept whole even if it overshoots).
Every RNG stream is keyed by (seed, facet, center_year, replicate_index), so
results do not depend on execution order or worker count.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Corpus
from .encode import EncoderConfig, FACET_CODES, TimbreCalibration, encode_track

DEFAULT_WINDOW = 5
DEFAULT_REPLICATES = 10
DEFAULT_TARGET_BEATS = 1_000_000

_STREAM_SAMPLE = 1

__all__ = [
    "Sample",
    "SampleSpec",
    "draw_sample",
    "sample_plan",
    "sample_loudness_values",
    "save_sample",
    "load_sample",
    "stream_key",
]


def stream_key(seed: int, *parts: int) -> np.random.SeedSequence:
    """Deterministic numpy seed sequence from a 64-bit seed plus integer parts."""
    words = []
    for p in (seed, *parts):
        p = int(p) & 0xFFFFFFFFFFFFFFFF
        words.append(p & 0xFFFFFFFF)
        words.append((p >> 32) & 0xFFFFFFFF)
    return np.random.SeedSequence(words)


@dataclass(frozen=True)
class Sample:
    """One replicate's codeword sequences (one per selected track)."""

    facet: str
    center_year: int
    window: int
    replicate_index: int
    seed: int
    target_beats: int
    track_ids: tuple[str, ...]
    sequences: tuple[np.ndarray, ...]
    total_beats: int
    shortfall: bool

    def concatenated(self) -> np.ndarray:
        return np.concatenate(self.sequences) if self.sequences else np.array([], dtype=np.int32)


@dataclass(frozen=True)
class SampleSpec:
    """A lazily materializable sample descriptor from a plan."""

    facet: str
    center_year: int
    replicate_index: int
    window: int
    target_beats: int
    seed: int

    def draw(self, corpus: Corpus, config: EncoderConfig = EncoderConfig(),
             calibration: TimbreCalibration | None = None) -> Sample:
        return draw_sample(corpus, self.facet, self.center_year, self.replicate_index,
                           target_beats=self.target_beats, window=self.window,
                           seed=self.seed, config=config, calibration=calibration)


def _window_track_ids(corpus: Corpus, center_year: int, window: int) -> list[str]:
    half = (window - 1) // 2
    ids: list[str] = []
    for y in range(center_year - half, center_year + half + 1):
        ids.extend(corpus.year_index.get(y, ()))
    ids.sort()
    return ids


def draw_sample(corpus: Corpus, facet: str, center_year: int, replicate_index: int, *,
                target_beats: int = DEFAULT_TARGET_BEATS, window: int = DEFAULT_WINDOW,
                seed: int = 0, config: EncoderConfig = EncoderConfig(),
                calibration: TimbreCalibration | None = None) -> Sample:
    """Draw one replicate for one central year.

    Raises ValueError on an empty window or invalid window/target. If the
    window holds fewer beats than the target, every window track is used and
    the sample is flagged as a shortfall.
    """
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be odd and >= 1, got {window}")
    if target_beats < 1:
        raise ValueError(f"target_beats must be >= 1, got {target_beats}")
    if replicate_index < 0:
        raise ValueError(f"replicate_index must be >= 0, got {replicate_index}")
    if facet not in FACET_CODES:
        raise ValueError(f"unknown facet {facet!r}")

    pool = _window_track_ids(corpus, center_year, window)
    if not pool:
        raise ValueError(f"no tracks with year in the window around {center_year}")

    rng = np.random.default_rng(stream_key(seed, _STREAM_SAMPLE, FACET_CODES[facet],
                                           center_year, replicate_index))
    order = rng.permutation(len(pool))

    chosen: list[str] = []
    sequences: list[np.ndarray] = []
    total = 0
    for idx in order:
        track = corpus.track(pool[idx])
        seq = encode_track(track, facet, config, calibration)
        chosen.append(track.track_id)
        sequences.append(seq)
        total += seq.shape[0]
        if total >= target_beats:
            break

    return Sample(
        facet=facet,
        center_year=int(center_year),
        window=window,
        replicate_index=replicate_index,
        seed=int(seed),
        target_beats=target_beats,
        track_ids=tuple(chosen),
        sequences=tuple(sequences),
        total_beats=total,
        shortfall=total < target_beats,
    )


def sample_plan(corpus: Corpus, facet: str, *, window: int = DEFAULT_WINDOW,
                replicates: int = DEFAULT_REPLICATES,
                target_beats: int = DEFAULT_TARGET_BEATS, seed: int = 0) -> list[SampleSpec]:
    """Every (central year, replicate) descriptor for the corpus."""
    from .corpus import years_available

    if replicates < 1:
        raise ValueError(f"replicates must be >= 1, got {replicates}")
    specs = []
    for year in years_available(corpus, window):
        for rep in range(replicates):
            specs.append(SampleSpec(facet=facet, center_year=year, replicate_index=rep,
                                    window=window, target_beats=target_beats, seed=seed))
    return specs


def sample_loudness_values(corpus: Corpus, sample: Sample) -> np.ndarray:
    """Raw dBFS values underlying a sample, for distribution fitting."""
    return np.concatenate([corpus.track(tid).loudness_db for tid in sample.track_ids])


def save_sample(sample: Sample, path, fingerprint: str | None = None) -> None:
    """Persist as one integer per beat with track boundaries marked."""
    lines = [
        f"# facet={sample.facet} center_year={sample.center_year} "
        f"replicate={sample.replicate_index} window={sample.window} "
        f"seed={sample.seed} target_beats={sample.target_beats} "
        f"total_beats={sample.total_beats} shortfall={int(sample.shortfall)}"
    ]
    if fingerprint is not None:
        lines.append(f"# fingerprint={fingerprint}")
    for tid, seq in zip(sample.track_ids, sample.sequences):
        lines.append(f"# track {tid}")
        lines.extend(str(int(v)) for v in seq)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_sample(path) -> tuple[Sample, str | None]:
    """Inverse of save_sample; returns the sample and any stored fingerprint."""
    header: dict[str, str] = {}
    fingerprint: str | None = None
    track_ids: list[str] = []
    sequences: list[list[int]] = []
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("# track "):
            track_ids.append(line[len("# track "):])
            sequences.append([])
        elif line.startswith("# fingerprint="):
            fingerprint = line[len("# fingerprint="):]
        elif line.startswith("#"):
            for part in line[1:].split():
                if "=" in part:
                    k, v = part.split("=", 1)
                    header[k] = v
        else:
            if not sequences:
                raise ValueError(f"{path}: codeword before any track marker")
            sequences[-1].append(int(line))
    arrays = tuple(np.asarray(s, dtype=np.int32) for s in sequences)
    total = int(sum(a.shape[0] for a in arrays))
    stated = int(header.get("total_beats", total))
    if stated != total:
        raise ValueError(f"{path}: stated total_beats {stated} != {total} beats on file")
    sample = Sample(
        facet=header["facet"],
        center_year=int(header["center_year"]),
        window=int(header["window"]),
        replicate_index=int(header["replicate"]),
        seed=int(header["seed"]),
        target_beats=int(header["target_beats"]),
        track_ids=tuple(track_ids),
        sequences=arrays,
        total_beats=total,
        shortfall=bool(int(header.get("shortfall", "0"))),
    )
    return sample, fingerprint
