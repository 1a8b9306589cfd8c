"""Play-by-play rows from a known multinomial-logistic next-score process."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from tacklepep.ep_model import OUTCOMES, PBP_COLUMNS, STATE_COLUMNS

# logit coefficients per outcome (rows follow OUTCOMES); "no score" is the
# reference. Columns: intercept, yardline/100, down-1, min(ytg, 20)/10,
# score_diff/14, home, (timeouts_off - timeouts_def)/3, quarter==4
COEF = np.array([
    [-1.6, 2.0, 0.15, 0.10, 0.05, -0.10, -0.05, 0.10],    # -7
    [-1.5, 1.5, 0.10, 0.05, 0.00, -0.05, -0.05, 0.00],    # -3
    [-4.0, 3.0, 0.05, 0.00, 0.00, 0.00, 0.00, 0.00],      # -2
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],             # 0
    [-4.5, 0.0, 0.00, 0.00, 0.00, 0.00, 0.00, 0.00],      # 2
    [0.6, -1.2, -0.10, -0.10, -0.05, 0.05, 0.05, 0.10],   # 3
    [1.6, -3.2, -0.30, -0.30, -0.10, 0.10, 0.05, -0.10],  # 7
])


def design(states: pd.DataFrame) -> np.ndarray:
    s = states
    return np.column_stack([
        np.ones(len(s)), s["yardline"] / 100.0, s["down"] - 1.0,
        np.minimum(s["yards_to_go"], 20.0) / 10.0, s["score_differential"] / 14.0,
        s["home_possession"].astype(float),
        (s["timeouts_off"] - s["timeouts_def"]) / 3.0, (s["quarter"] == 4).astype(float),
    ])


def true_probabilities(states: pd.DataFrame) -> np.ndarray:
    """Generator probabilities over OUTCOMES for each state."""
    logits = design(states) @ COEF.T
    logits -= logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    return e / e.sum(axis=1, keepdims=True)


def random_states(n: int, rng) -> pd.DataFrame:
    yl = rng.integers(1, 100, n).astype(float)
    down = rng.choice([1, 2, 3, 4], n, p=[0.4, 0.3, 0.2, 0.1]).astype(float)
    ytg = np.where(down == 1, 10.0, rng.integers(1, 21, n).astype(float))
    ytg = np.minimum(ytg, yl)
    return pd.DataFrame({
        "yardline": yl, "yards_to_go": ytg, "down": down,
        "quarter": rng.choice([1, 2, 3, 4, 5], n, p=[0.24, 0.25, 0.24, 0.25, 0.02]).astype(float),
        "score_differential": np.round(rng.normal(0.0, 10.0, n)),
        "home_possession": rng.integers(0, 2, n).astype(float),
        "timeouts_off": rng.integers(0, 4, n).astype(float),
        "timeouts_def": rng.integers(0, 4, n).astype(float),
    })[STATE_COLUMNS]


def bayes_expected_points(states: pd.DataFrame) -> np.ndarray:
    """Closed-form EP of the generator; the Bayes-optimal predictor under squared loss."""
    return true_probabilities(states) @ OUTCOMES.astype(float)


def generator_parameters() -> dict:
    """Everything needed to recompute the generator probabilities."""
    return {"outcomes": OUTCOMES.tolist(), "reference_outcome": 0,
            "design": ["intercept", "yardline/100", "down-1", "min(ytg,20)/10", "score_diff/14",
                       "home", "(timeouts_off-timeouts_def)/3", "quarter==4"],
            "coef": COEF.tolist()}


@dataclass(frozen=True)
class PbpConfig:
    n_seasons: int = 4
    rows_per_season: int = 5000

    def __post_init__(self):
        if self.n_seasons < 2:
            raise ValueError("n_seasons must be >= 2 for leave-one-season-out CV")
        if self.rows_per_season < 1:
            raise ValueError("rows_per_season must be >= 1")


def generate_pbp_corpus(config: PbpConfig = PbpConfig(), seed: int = 0) -> pd.DataFrame:
    return generate_pbp(config.n_seasons, config.rows_per_season, seed)


def generate_pbp(n_seasons: int = 4, rows_per_season: int = 5000, seed: int = 0) -> pd.DataFrame:
    """Labelled play-by-play rows.

    Outcomes are drawn independently per row from the generator
    probabilities, so the analytic expected points of every row is known
    (see :func:`true_probabilities`).
    """
    rng = np.random.default_rng(seed)
    parts = []
    for s in range(n_seasons):
        st = random_states(rows_per_season, rng)
        p = true_probabilities(st)
        u = rng.random(len(st))[:, None]
        lab = (u > np.cumsum(p, axis=1)).sum(axis=1)
        lab = np.minimum(lab, len(OUTCOMES) - 1)
        st.insert(0, "drive_id", np.arange(len(st)) // 5)
        st.insert(0, "game_id", 2000 + s * 1000 + np.arange(len(st)) // 150)
        st.insert(0, "season", 2011 + s)
        st["next_score"] = OUTCOMES[lab]
        parts.append(st)
    return pd.concat(parts, ignore_index=True)[PBP_COLUMNS]
