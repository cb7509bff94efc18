"""Normalized corpus format: parsing, validation, year indexing, serialization.

One JSON record per line:

    {"track_id": "...", "year": 1987, "beats": [{"chroma": [c0..c11],
     "timbre": [t0..t11], "loudness_db": -12.5}, ...]}

Chroma values must arrive pre-normalized to [0, 1]; the parser validates and
never rescales (rescaling would silently change codewords downstream).
NaN/Infinity tokens are rejected. Track order in a file is irrelevant: a
corpus is always canonically ordered by track_id.
"""

from __future__ import annotations

import bisect
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator

import numpy as np

N_COEFFS = 12

__all__ = [
    "BeatDescriptor",
    "Track",
    "Corpus",
    "ParseIssue",
    "CorpusFormatError",
    "parse_corpus",
    "write_corpus",
    "corpus_hash",
    "years_available",
]


@dataclass(frozen=True)
class ParseIssue:
    """One rejected input line with the reason."""

    line: int
    message: str

    def __str__(self) -> str:
        return f"line {self.line}: {self.message}"


class CorpusFormatError(ValueError):
    """Raised in strict mode when any record fails validation."""

    def __init__(self, issues: Iterable[ParseIssue]):
        self.issues = tuple(issues)
        head = "; ".join(str(i) for i in self.issues[:3])
        tail = "" if len(self.issues) <= 3 else f" (+{len(self.issues) - 3} more)"
        super().__init__(f"{len(self.issues)} invalid record(s): {head}{tail}")


@dataclass(frozen=True)
class BeatDescriptor:
    """One beat's descriptors: 12 chroma energies, 12 timbre coefficients, loudness."""

    chroma: tuple[float, ...]
    timbre: tuple[float, ...]
    loudness_db: float


@dataclass(frozen=True, eq=False)
class Track:
    """One recording; beat arrays are row-per-beat in temporal order."""

    track_id: str
    year: int
    chroma: np.ndarray      # (n_beats, 12), values in [0, 1]
    timbre: np.ndarray      # (n_beats, 12), finite
    loudness_db: np.ndarray  # (n_beats,), all <= 0

    @property
    def n_beats(self) -> int:
        return self.loudness_db.shape[0]

    @property
    def beats(self) -> list[BeatDescriptor]:
        return [
            BeatDescriptor(tuple(self.chroma[i]), tuple(self.timbre[i]), float(self.loudness_db[i]))
            for i in range(self.n_beats)
        ]

    @classmethod
    def from_beats(cls, track_id: str, year: int, beats: Iterable[BeatDescriptor]) -> "Track":
        beats = list(beats)
        if not beats:
            raise ValueError(f"track {track_id!r}: empty beat list")
        return cls(
            track_id=track_id,
            year=int(year),
            chroma=np.array([b.chroma for b in beats], dtype=np.float64),
            timbre=np.array([b.timbre for b in beats], dtype=np.float64),
            loudness_db=np.array([b.loudness_db for b in beats], dtype=np.float64),
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Track):
            return NotImplemented
        return (
            self.track_id == other.track_id
            and self.year == other.year
            and np.array_equal(self.chroma, other.chroma)
            and np.array_equal(self.timbre, other.timbre)
            and np.array_equal(self.loudness_db, other.loudness_db)
        )


@dataclass(frozen=True, eq=False)
class Corpus:
    """Immutable track collection, canonically ordered by track_id."""

    tracks: tuple[Track, ...]
    year_index: dict[int, tuple[str, ...]]
    issues: tuple[ParseIssue, ...] = ()
    _ids: tuple[str, ...] = field(default=(), repr=False)

    @classmethod
    def from_tracks(cls, tracks: Iterable[Track], issues: Iterable[ParseIssue] = ()) -> "Corpus":
        ordered = tuple(sorted(tracks, key=lambda t: t.track_id))
        ids = tuple(t.track_id for t in ordered)
        for a, b in zip(ids, ids[1:]):
            if a == b:
                raise ValueError(f"duplicate track_id {a!r}")
        index: dict[int, list[str]] = {}
        for t in ordered:
            index.setdefault(t.year, []).append(t.track_id)
        year_index = {y: tuple(v) for y, v in sorted(index.items())}
        return cls(tracks=ordered, year_index=year_index, issues=tuple(issues), _ids=ids)

    @property
    def n_tracks(self) -> int:
        return len(self.tracks)

    @property
    def total_beats(self) -> int:
        return sum(t.n_beats for t in self.tracks)

    def years(self) -> list[int]:
        return sorted(self.year_index)

    def track(self, track_id: str) -> Track:
        i = bisect.bisect_left(self._ids, track_id)
        if i == len(self._ids) or self._ids[i] != track_id:
            raise KeyError(track_id)
        return self.tracks[i]

    def __contains__(self, track_id: str) -> bool:
        i = bisect.bisect_left(self._ids, track_id)
        return i < len(self._ids) and self._ids[i] == track_id

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Corpus):
            return NotImplemented
        return self.tracks == other.tracks


def _reject_constant(token: str) -> float:
    raise ValueError(f"non-finite number token {token!r}")


def _as_finite_float(value: object, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValueError(f"{name} is not a number: {value!r}")
    v = float(value)
    if not math.isfinite(v):
        raise ValueError(f"{name} is not finite: {value!r}")
    return v


def _vector(obj: object, name: str) -> list[float]:
    if not isinstance(obj, list) or len(obj) != N_COEFFS:
        raise ValueError(f"{name} must be a list of {N_COEFFS} numbers")
    return [_as_finite_float(v, f"{name}[{i}]") for i, v in enumerate(obj)]


def _track_from_record(obj: object) -> Track:
    if not isinstance(obj, dict):
        raise ValueError("record is not a JSON object")
    track_id = obj.get("track_id")
    if not isinstance(track_id, str) or not track_id:
        raise ValueError(f"track_id missing or empty: {track_id!r}")
    year = obj.get("year")
    if isinstance(year, bool) or not isinstance(year, int):
        raise ValueError(f"track {track_id!r}: year is not an integer: {year!r}")
    beats = obj.get("beats")
    if not isinstance(beats, list) or not beats:
        raise ValueError(f"track {track_id!r}: beats missing or empty")

    chroma = np.empty((len(beats), N_COEFFS), dtype=np.float64)
    timbre = np.empty((len(beats), N_COEFFS), dtype=np.float64)
    loudness = np.empty(len(beats), dtype=np.float64)
    for i, beat in enumerate(beats):
        if not isinstance(beat, dict):
            raise ValueError(f"track {track_id!r}: beat {i} is not an object")
        cv = _vector(beat.get("chroma"), f"beat {i} chroma")
        for j, v in enumerate(cv):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"track {track_id!r}: chroma[{j}] out of range [0, 1] at beat {i}: {v}")
        tv = _vector(beat.get("timbre"), f"beat {i} timbre")
        ld = _as_finite_float(beat.get("loudness_db"), f"beat {i} loudness_db")
        if ld > 0.0:
            raise ValueError(f"track {track_id!r}: loudness_db above 0 dBFS at beat {i}: {ld}")
        chroma[i] = cv
        timbre[i] = tv
        loudness[i] = ld
    return Track(track_id=track_id, year=year, chroma=chroma, timbre=timbre, loudness_db=loudness)


def _read_lines(source) -> Iterator[bytes]:
    if isinstance(source, (str, Path)):
        with open(source, "rb") as fh:
            yield from fh
        return
    if isinstance(source, bytes):
        yield from source.splitlines(keepends=True)
        return
    data = source.read()
    if isinstance(data, str):
        data = data.encode("utf-8", errors="surrogateescape")
    yield from data.splitlines(keepends=True)


def parse_corpus(source, strict: bool = True) -> Corpus:
    """Parse the newline-delimited corpus format.

    `source` is a path, raw bytes, or an open file. Never crashes on bad
    input: every invalid line becomes a ParseIssue. In strict mode any issue
    aborts with CorpusFormatError; in lenient mode offending tracks are
    skipped whole and the issues ride along on the returned corpus.
    """
    issues: list[ParseIssue] = []
    by_id: dict[str, Track] = {}
    for line_no, raw in enumerate(_read_lines(source), start=1):
        stripped = raw.strip()
        if not stripped:
            continue
        try:
            text = stripped.decode("utf-8")
            obj = json.loads(text, parse_constant=_reject_constant)
            track = _track_from_record(obj)
        except (ValueError, UnicodeDecodeError) as exc:
            issues.append(ParseIssue(line_no, str(exc)))
            continue
        if track.track_id in by_id:
            issues.append(ParseIssue(line_no, f"duplicate track_id {track.track_id!r}"))
            continue
        by_id[track.track_id] = track
    if strict and issues:
        raise CorpusFormatError(issues)
    return Corpus.from_tracks(by_id.values(), issues=issues)


def _track_record(track: Track) -> str:
    rec = {
        "track_id": track.track_id,
        "year": track.year,
        "beats": [
            {
                "chroma": track.chroma[i].tolist(),
                "timbre": track.timbre[i].tolist(),
                "loudness_db": float(track.loudness_db[i]),
            }
            for i in range(track.n_beats)
        ],
    }
    return json.dumps(rec, separators=(",", ":"))


def _serialized_lines(corpus: Corpus) -> Iterator[str]:
    for track in corpus.tracks:
        yield _track_record(track) + "\n"


def write_corpus(corpus: Corpus, dest) -> None:
    """Serialize in canonical (track_id-sorted) order; round-trips exactly."""
    if isinstance(dest, (str, Path)):
        with open(dest, "w", encoding="utf-8") as fh:
            for line in _serialized_lines(corpus):
                fh.write(line)
    else:
        for line in _serialized_lines(corpus):
            dest.write(line)


def corpus_hash(corpus: Corpus) -> str:
    """SHA-256 of the canonical serialization; anchors calibration files."""
    h = hashlib.sha256()
    for line in _serialized_lines(corpus):
        h.update(line.encode("utf-8"))
    return h.hexdigest()


def years_available(corpus: Corpus, window: int) -> list[int]:
    """Central years whose window [y-h, y+h] contains at least one track."""
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be odd and >= 1, got {window}")
    populated = set(corpus.year_index)
    if not populated:
        return []
    half = (window - 1) // 2
    lo, hi = min(populated), max(populated)
    out = []
    for y in range(lo - half, hi + half + 1):
        if any(t in populated for t in range(y - half, y + half + 1)):
            out.append(y)
    return out
