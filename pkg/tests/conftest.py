import numpy as np
import pandas as pd
import pytest

from tacklepep.synth.tracking import SimConfig, generate_tracking_corpus
from tacklepep.tracking import parse_tracking


def make_frame(carrier, defenders, offense=None, frame_id=1, carrier_id=1, carrier_dir=0.0):
    """One canonical frame: the carrier, 11 defenders and 10 other offense.

    ``defenders`` is a list of (x, y) or (x, y, direction); missing
    defenders and offensive players are parked far away in id order.
    """
    rows = [dict(entity_id=carrier_id, x=carrier[0], y=carrier[1], direction=carrier_dir,
                 side="offense")]
    defenders = list(defenders) + [(90.0 + i, 20.0) for i in range(11 - len(defenders))]
    for i, d in enumerate(defenders):
        rows.append(dict(entity_id=100 + i, x=d[0], y=d[1],
                         direction=d[2] if len(d) > 2 else 0.0, side="defense"))
    offense = list(offense or []) + [(80.0 + i, -20.0) for i in range(10 - len(offense or []))]
    for i, o in enumerate(offense):
        rows.append(dict(entity_id=2 + i, x=o[0], y=o[1], direction=0.0, side="offense"))
    rows.append(dict(entity_id=-1, x=carrier[0], y=carrier[1], direction=0.0, side="ball"))
    df = pd.DataFrame(rows)
    df["frame_id"] = frame_id
    df["game_id"] = 1
    df["play_id"] = 1
    for c in ("speed", "accel", "dist", "orientation"):
        df[c] = 0.0
    return df


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory):
    """A small zero-noise synthetic corpus written to disk."""
    out = tmp_path_factory.mktemp("corpus")
    corpus = generate_tracking_corpus(SimConfig(n_games=18, plays_per_game=10), seed=21)
    paths = corpus.write(out)
    return corpus, paths


@pytest.fixture(scope="session")
def parsed(corpus_dir):
    _, p = corpus_dir
    return parse_tracking(p["tracking"], p["plays"], p["tackles"], p["players"])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
