import json

import numpy as np
import pytest

from beatcodes.corpus import Corpus, Track


def make_track(track_id, year, codes=None, n_beats=4, loudness=-10.0, rng=None):
    """Track whose chroma encodes `codes` (0.9/0.1 bit patterns)."""
    if codes is None:
        rng = rng or np.random.default_rng(0)
        codes = rng.integers(0, 64, n_beats)
    codes = np.asarray(codes, dtype=np.int64)
    bits = (codes[:, None] & (1 << np.arange(12))[None, :]) > 0
    chroma = np.where(bits, 0.9, 0.1)
    timbre = np.where(bits, 1.0, -1.0)
    loud = np.full(codes.size, float(loudness))
    return Track(track_id=track_id, year=int(year), chroma=chroma, timbre=timbre,
                 loudness_db=loud)


def make_corpus(tracks):
    return Corpus.from_tracks(tracks)


def record_line(track_id="t1", year=1990, beats=None):
    if beats is None:
        beats = [{"chroma": [0.5] * 12, "timbre": [0.0] * 12, "loudness_db": -10.0}] * 2
    return json.dumps({"track_id": track_id, "year": year, "beats": beats})


@pytest.fixture
def tiny_corpus():
    return make_corpus([
        make_track("a", 1990, codes=[1, 2, 3]),
        make_track("b", 1990, codes=[2, 3]),
        make_track("c", 1991, codes=[5, 6, 7, 8]),
    ])
