"""Seven-outcome expected-points model and the EOPY-to-points mapping."""

from __future__ import annotations

import hashlib
import json
import logging
import struct
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

OUTCOMES = np.array([-7, -3, -2, 0, 2, 3, 7], dtype=np.int64)
STATE_COLUMNS = ["yardline", "yards_to_go", "down", "quarter", "score_differential",
                 "home_possession", "timeouts_off", "timeouts_def"]
PBP_COLUMNS = ["season", "game_id", "drive_id"] + STATE_COLUMNS + ["next_score"]
TOUCHDOWN = 7.0
SAFETY = -2.0
MODEL_MAGIC = b"TPEP"
MODEL_VERSION = 1

DEFAULT_GRID = (
    {"max_depth": 3, "learning_rate": 0.1, "n_estimators": 150, "min_child_weight": 1.0},
    {"max_depth": 5, "learning_rate": 0.1, "n_estimators": 100, "min_child_weight": 1.0},
)


@dataclass(frozen=True)
class GameState:
    """Pre-snap situation from the offense's point of view."""

    yardline: float
    yards_to_go: float
    down: int
    quarter: int
    score_differential: float
    home_possession: bool
    timeouts_off: int = 3
    timeouts_def: int = 3

    def __post_init__(self):
        if not 1 <= self.yardline <= 99:
            raise ValueError(f"yardline must lie in [1, 99], got {self.yardline}")
        if not 1 <= self.yards_to_go <= self.yardline:
            raise ValueError(f"yards_to_go must lie in [1, yardline], got {self.yards_to_go}")
        if self.down not in (1, 2, 3, 4):
            raise ValueError(f"down must be 1..4, got {self.down}")
        if self.quarter not in (1, 2, 3, 4, 5):
            raise ValueError(f"quarter must be 1..5, got {self.quarter}")
        for t in (self.timeouts_off, self.timeouts_def):
            if t not in (0, 1, 2, 3):
                raise ValueError(f"timeouts must be 0..3, got {t}")

    def as_row(self) -> dict:
        return {c: float(getattr(self, c)) for c in STATE_COLUMNS}


# -- distributions -----------------------------------------------------------

def is_valid_distribution(p, tol: float = 1e-9) -> np.ndarray:
    p = np.atleast_2d(np.asarray(p, dtype=float))
    return (p.shape[-1] == len(OUTCOMES)) & np.all((p >= 0) & (p <= 1), axis=-1) \
        & (np.abs(p.sum(axis=-1) - 1.0) <= tol)


def expected_points(dist) -> np.ndarray | float:
    """Expectation over the seven outcomes; rows are distributions.

    Symmetric outcome pairs are combined first so a uniform distribution
    gives exactly zero.
    """
    p = np.asarray(dist, dtype=float)
    if p.shape[-1] != len(OUTCOMES):
        raise ValueError(f"expected {len(OUTCOMES)} probabilities, got {p.shape[-1]}")
    ep = 7.0 * (p[..., 6] - p[..., 0]) + 3.0 * (p[..., 5] - p[..., 1]) + 2.0 * (p[..., 4] - p[..., 2])
    return float(ep) if np.ndim(ep) == 0 else ep


# -- state transitions ------------------------------------------------------

@dataclass
class NextStates:
    """Vectorized result of :func:`derive_next_state`.

    ``terminal`` holds the scoring value for draws that end the drive
    (nan otherwise); ``sign`` is -1 where possession flips.
    """

    terminal: np.ndarray
    states: pd.DataFrame
    sign: np.ndarray

    def __len__(self):
        return len(self.sign)


def _context_value(ctx, name, alt=None):
    if isinstance(ctx, GameState):
        return getattr(ctx, name)
    if isinstance(ctx, dict):
        return ctx[name] if name in ctx else ctx[alt]
    if isinstance(ctx, pd.DataFrame):
        return (ctx[name] if name in ctx.columns else ctx[alt]).to_numpy()
    return getattr(ctx, name) if hasattr(ctx, name) else getattr(ctx, alt)


def context_state(ctx) -> dict:
    """Pre-snap state arrays from a GameState, PlayMeta row, or frame."""
    return {
        "yardline": np.asarray(_context_value(ctx, "yardline", "adjusted_los"), dtype=float),
        "yards_to_go": np.asarray(_context_value(ctx, "yards_to_go"), dtype=float),
        "down": np.asarray(_context_value(ctx, "down"), dtype=float),
        "quarter": np.asarray(_context_value(ctx, "quarter"), dtype=float),
        "score_differential": np.asarray(_context_value(ctx, "score_differential"), dtype=float),
        "home_possession": np.asarray(_context_value(ctx, "home_possession"), dtype=float),
        "timeouts_off": np.asarray(_context_value(ctx, "timeouts_off"), dtype=float),
        "timeouts_def": np.asarray(_context_value(ctx, "timeouts_def"), dtype=float),
    }


def derive_next_state(eopy_draw, tackle_context) -> NextStates:
    """Successor state for each end-of-play yard line.

    Draws at or past the goal line are touchdowns (+7); draws at or behind
    the offense's own goal line (``>= 100``) are safeties (-2). Otherwise
    the usual first-down / next-down / turnover-on-downs rules apply. A
    turnover mirrors the state into the new offense's frame and sets
    ``sign = -1``. Yard lines are clipped to [1, 99] and distances to at
    least one yard and at most the yard line.
    """
    e = np.atleast_1d(np.asarray(eopy_draw, dtype=float))
    c = {k: np.broadcast_to(v, e.shape).astype(float) for k, v in context_state(tackle_context).items()}
    gained = c["yardline"] - e
    td = e <= 0.0
    safety = e >= 100.0
    terminal = np.where(td, TOUCHDOWN, np.where(safety, SAFETY, np.nan))

    first = gained >= c["yards_to_go"]
    turnover = ~first & (c["down"] >= 4)
    yl = np.where(turnover, 100.0 - e, e)
    yl = np.clip(yl, 1.0, 99.0)
    ytg = np.where(first | turnover, np.minimum(10.0, yl), c["yards_to_go"] - gained)
    ytg = np.clip(ytg, 1.0, None)
    ytg = np.minimum(ytg, yl)
    down = np.where(first | turnover, 1.0, c["down"] + 1.0)
    diff = np.where(turnover, -c["score_differential"], c["score_differential"])
    home = np.where(turnover, 1.0 - c["home_possession"], c["home_possession"])
    t_off = np.where(turnover, c["timeouts_def"], c["timeouts_off"])
    t_def = np.where(turnover, c["timeouts_off"], c["timeouts_def"])
    states = pd.DataFrame({"yardline": yl, "yards_to_go": ytg, "down": down,
                           "quarter": c["quarter"], "score_differential": diff,
                           "home_possession": home, "timeouts_off": t_off,
                           "timeouts_def": t_def})
    sign = np.where(turnover & ~td & ~safety, -1.0, 1.0)
    return NextStates(terminal, states, sign)


def g(eopy_draw, tackle_context, classifier) -> np.ndarray:
    """Expected points from the next play onwards for each EOPY draw.

    ``classifier`` needs a ``predict_proba(states) -> (n, 7)`` method.
    Terminal draws bypass the classifier.
    """
    nxt = derive_next_state(eopy_draw, tackle_context)
    out = nxt.terminal.copy()
    live = np.isnan(out)
    if live.any():
        p = classifier.predict_proba(nxt.states[live])
        out[live] = nxt.sign[live] * expected_points(p)
    return out


# -- classifier -------------------------------------------------------------

def score_weight(diff, scheme: str = "inverse") -> np.ndarray:
    """Row weights decreasing in |score differential|."""
    diff = np.abs(np.asarray(diff, dtype=float))
    if scheme == "inverse":
        return 1.0 / (1.0 + diff)
    if scheme == "none":
        return np.ones_like(diff)
    raise ValueError(f"unknown weighting scheme {scheme!r}")


def schema_hash(columns=STATE_COLUMNS) -> str:
    return hashlib.sha256(",".join(columns).encode()).hexdigest()[:16]


@dataclass
class EpClassifier:
    """Boosted softmax classifier over the seven next-score outcomes."""

    booster: object
    params: dict
    meta: dict = field(default_factory=dict)

    def predict_proba(self, states) -> np.ndarray:
        import xgboost as xgb
        X = _state_matrix(states)
        p = self.booster.predict(xgb.DMatrix(X, feature_names=STATE_COLUMNS)).astype(np.float64)
        p = np.clip(p.reshape(len(X), len(OUTCOMES)), 0.0, 1.0)
        return p / p.sum(axis=1, keepdims=True)

    def expected_points(self, states) -> np.ndarray:
        return expected_points(self.predict_proba(states))

    def to_bytes(self) -> bytes:
        header = json.dumps({"version": MODEL_VERSION, "schema": schema_hash(),
                             "columns": STATE_COLUMNS, "outcomes": OUTCOMES.tolist(),
                             "params": self.params, "meta": self.meta},
                            sort_keys=True).encode()
        body = bytes(self.booster.save_raw("json"))
        return MODEL_MAGIC + struct.pack("<Q", len(header)) + header + body

    def save(self, path) -> None:
        from tacklepep.io import atomic_write_bytes
        atomic_write_bytes(path, self.to_bytes())

    @classmethod
    def from_bytes(cls, blob: bytes) -> EpClassifier:
        import xgboost as xgb
        if blob[:4] != MODEL_MAGIC:
            raise ValueError("not an EP model file")
        n = struct.unpack("<Q", blob[4:12])[0]
        header = json.loads(blob[12:12 + n])
        if header["version"] != MODEL_VERSION:
            raise ValueError(f"unsupported EP model version {header['version']}")
        if header["schema"] != schema_hash():
            raise ValueError("EP model feature schema does not match")
        booster = xgb.Booster()
        booster.load_model(bytearray(blob[12 + n:]))
        return cls(booster, header["params"], header["meta"])

    @classmethod
    def load(cls, path) -> EpClassifier:
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def _state_matrix(states) -> np.ndarray:
    if isinstance(states, GameState):
        states = pd.DataFrame([states.as_row()])
    if isinstance(states, pd.DataFrame):
        return states[STATE_COLUMNS].to_numpy(dtype=np.float64)
    X = np.atleast_2d(np.asarray(states, dtype=np.float64))
    if X.shape[1] != len(STATE_COLUMNS):
        raise ValueError(f"states need {len(STATE_COLUMNS)} columns")
    return X


def _labels(next_score) -> np.ndarray:
    y = np.asarray(next_score, dtype=np.int64)
    lab = np.searchsorted(OUTCOMES, y)
    bad = (lab >= len(OUTCOMES)) | (OUTCOMES[np.minimum(lab, len(OUTCOMES) - 1)] != y)
    if bad.any():
        raise ValueError(f"next_score values outside {OUTCOMES.tolist()}: {np.unique(y[bad])}")
    return lab


def _train(X, lab, w, params, seed, n_jobs):
    import xgboost as xgb
    p = {"objective": "multi:softprob", "num_class": len(OUTCOMES), "tree_method": "hist",
         "max_depth": int(params["max_depth"]), "eta": float(params["learning_rate"]),
         "min_child_weight": float(params.get("min_child_weight", 1.0)),
         "seed": int(seed), "nthread": int(n_jobs), "eval_metric": "mlogloss"}
    d = xgb.DMatrix(X, label=lab, weight=w, feature_names=STATE_COLUMNS)
    return xgb.train(p, d, num_boost_round=int(params["n_estimators"]))


def fit_ep_classifier(pbp_rows: pd.DataFrame, grid=DEFAULT_GRID, weighting: str = "inverse",
                      seed: int = 0, n_jobs: int = 1) -> EpClassifier:
    """Fit the next-score classifier with leave-one-season-out model selection.

    Each grid entry is scored by weighted multi-class log loss on every
    held-out season; the best mean wins and is refit on all rows.
    """
    import xgboost as xgb
    missing = [c for c in ["season", "next_score"] + STATE_COLUMNS if c not in pbp_rows.columns]
    if missing:
        raise ValueError(f"play-by-play rows missing columns {missing}")
    seasons = np.unique(pbp_rows["season"].to_numpy())
    if len(seasons) < 2:
        raise ValueError("leave-one-season-out CV needs at least 2 seasons")
    X = _state_matrix(pbp_rows)
    lab = _labels(pbp_rows["next_score"])
    w = score_weight(pbp_rows["score_differential"], weighting)
    season = pbp_rows["season"].to_numpy()

    cv = []
    for gi, params in enumerate(grid):
        losses = []
        for s in seasons:
            tr, te = season != s, season == s
            b = _train(X[tr], lab[tr], w[tr], params, seed, n_jobs)
            p = b.predict(xgb.DMatrix(X[te], feature_names=STATE_COLUMNS)).reshape(-1, len(OUTCOMES))
            pk = np.clip(p[np.arange(te.sum()), lab[te]], 1e-15, 1.0)
            losses.append(float(-np.sum(w[te] * np.log(pk)) / np.sum(w[te])))
        cv.append({"params": dict(params), "fold_logloss": losses, "mean_logloss": float(np.mean(losses))})
        logger.info("EP grid %d: mean logloss %.5f", gi, cv[-1]["mean_logloss"])
    best = min(range(len(grid)), key=lambda i: (cv[i]["mean_logloss"], i))
    booster = _train(X, lab, w, grid[best], seed, n_jobs)
    meta = {"seasons": [int(s) for s in seasons], "weighting": weighting, "cv": cv,
            "selected": best, "n_rows": int(len(X)), "seed": int(seed)}
    return EpClassifier(booster, dict(grid[best]), meta)


def evaluate_ep(classifier, held_out_rows: pd.DataFrame) -> float:
    """Mean absolute error of EP against the realized next score."""
    ep = classifier.expected_points(held_out_rows)
    return float(np.mean(np.abs(ep - held_out_rows["next_score"].to_numpy(dtype=float))))


def load_pbp(path) -> pd.DataFrame:
    """Read a play-by-play file with the documented columns."""
    df = pd.read_csv(path)
    missing = [c for c in PBP_COLUMNS if c not in df.columns]
    if missing:
        raise ValueError(f"{path}: missing columns {missing}")
    _labels(df["next_score"])
    return df
