"""Tracking-data ingestion and feature engineering.

Raw files follow the Big Data Bowl layout (10 Hz tracking, one row per
player or ball per frame). Everything downstream works in *canonical*
coordinates:

* ``x`` is the distance to the opponent goal line (0 at the goal line,
  100 at the offense's own goal line, end zones extend 10 yards further);
* ``y`` is centred on the field midline;
* ``direction``/``orientation`` are 0 when heading straight at the opponent
  end zone and increase clockwise, so the unit heading vector is
  ``(-cos(dir), sin(dir))``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from tacklepep.io import atomic_write_text

logger = logging.getLogger(__name__)

FIELD_LENGTH = 120.0
FIELD_WIDTH = 53.3
HALF_WIDTH = FIELD_WIDTH / 2
BALL_ID = -1

TRACKING_COLUMNS = ["gameId", "playId", "nflId", "frameId", "playDirection",
                    "x", "y", "s", "a", "dis", "o", "dir", "event", "club"]
PLAYS_COLUMNS = ["gameId", "playId", "week", "quarter", "down", "yardsToGo",
                 "absoluteYardlineNumber", "possessionTeam", "defensiveTeam",
                 "homeTeamAbbr", "preSnapHomeScore", "preSnapVisitorScore",
                 "offTimeoutsRemaining", "defTimeoutsRemaining", "penaltyYards",
                 "playResult", "ballCarrierId", "passResult", "playType", "driveId"]
TACKLES_COLUMNS = ["gameId", "playId", "nflId", "tackle", "assist",
                   "forcedFumble", "pff_missedTackle"]
PLAYERS_COLUMNS = ["nflId", "position", "displayName"]

_TRACKING_NUMERIC = ["gameId", "playId", "frameId", "x", "y", "s", "a", "dis", "o", "dir"]
_PLAYS_REQUIRED = ["gameId", "playId", "week", "quarter", "down", "yardsToGo",
                   "absoluteYardlineNumber", "possessionTeam", "homeTeamAbbr",
                   "preSnapHomeScore", "preSnapVisitorScore", "ballCarrierId", "driveId"]

POSSESSION_EVENTS = frozenset({"handoff", "pass_outcome_caught", "run", "snap_direct",
                               "lateral", "pitch"})
END_EVENTS = frozenset({"tackle", "out_of_bounds", "touchdown", "qb_slide", "safety",
                        "fumble", "qb_sack"})

KINEMATICS = ["x", "y", "speed", "accel", "dist", "orientation", "direction"]
_DEF_EXTRA = ["euclid_dist", "x_dist", "y_dist", "pursuit_angle_diff"]
_OFF_EXTRA = ["euclid_dist", "x_dist", "y_dist"]


class ParseError(ValueError):
    """Input file does not match the documented schema."""


class DataError(ValueError):
    """Input data violates an invariant needed downstream."""


# -- raw IO -----------------------------------------------------------------

def _require_columns(df, columns, path):
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise ParseError(f"{path}: missing columns {missing}")


def _numeric(df, columns, path, allow_na=()):
    for c in columns:
        vals = pd.to_numeric(df[c], errors="coerce")
        bad = vals.isna() & ~df[c].isna() if c in allow_na else vals.isna()
        if bad.any():
            row = int(np.flatnonzero(bad.to_numpy())[0])
            raise ParseError(f"{path}: line {row + 2}: column {c!r} has non-numeric "
                             f"value {df[c].iloc[row]!r}")
        df[c] = vals
    return df


def read_tracking_raw(path) -> pd.DataFrame:
    df = pd.read_csv(path, dtype={"event": object, "club": object, "playDirection": object})
    _require_columns(df, TRACKING_COLUMNS, path)
    df = _numeric(df, _TRACKING_NUMERIC, path)
    df = _numeric(df, ["nflId"], path, allow_na=("nflId",))
    df["nflId"] = df["nflId"].astype("Int64")
    for c in ("gameId", "playId", "frameId"):
        df[c] = df[c].astype(np.int64)
    bad = ~df["playDirection"].isin(["left", "right"])
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise ParseError(f"{path}: line {row + 2}: unknown playDirection "
                         f"{df['playDirection'].iloc[row]!r}")
    return df


def write_tracking_raw(df: pd.DataFrame, path) -> None:
    """Write tracking rows in the raw layout with the canonical 2-decimal rounding."""
    out = df[TRACKING_COLUMNS].copy()
    out["nflId"] = out["nflId"].astype("Int64")
    atomic_write_text(path, out.to_csv(index=False, float_format="%.2f", lineterminator="\n"))


def read_table(path, columns, numeric=(), required=None) -> pd.DataFrame:
    df = pd.read_csv(path)
    _require_columns(df, required if required is not None else columns, path)
    return _numeric(df, [c for c in numeric if c in df.columns], path,
                    allow_na=tuple(numeric))


# -- coordinates ------------------------------------------------------------

def canonicalize(frames: pd.DataFrame, play_direction=None) -> pd.DataFrame:
    """Map raw field coordinates onto the canonical frame of reference.

    ``play_direction`` defaults to the ``playDirection`` column; a scalar
    applies to every row.
    """
    direction = frames["playDirection"] if play_direction is None else play_direction
    direction = pd.Series(direction, index=frames.index) if np.isscalar(direction) else direction
    unknown = ~direction.isin(["left", "right"])
    if unknown.any():
        raise ParseError(f"unknown play_direction {direction[unknown].iloc[0]!r}")
    left = (direction == "left").to_numpy()
    out = frames.copy()
    x = frames["x"].to_numpy(dtype=float)
    y = frames["y"].to_numpy(dtype=float)
    out["x"] = np.where(left, x - 10.0, 110.0 - x)
    out["y"] = np.where(left, y - HALF_WIDTH, HALF_WIDTH - y)
    for c in ("o", "dir"):
        a = frames[c].to_numpy(dtype=float)
        out[c] = np.mod(np.where(left, a - 270.0, a - 90.0), 360.0)
    return out


def decanonicalize(frames: pd.DataFrame) -> pd.DataFrame:
    """Inverse of :func:`canonicalize` (uses the ``playDirection`` column)."""
    left = (frames["playDirection"] == "left").to_numpy()
    out = frames.copy()
    x = frames["x"].to_numpy(dtype=float)
    y = frames["y"].to_numpy(dtype=float)
    out["x"] = np.where(left, x + 10.0, 110.0 - x)
    out["y"] = np.where(left, y + HALF_WIDTH, HALF_WIDTH - y)
    for c in ("o", "dir"):
        a = frames[c].to_numpy(dtype=float)
        out[c] = np.mod(np.where(left, a + 270.0, a + 90.0), 360.0)
    return out


def canonical_los(absolute_yardline, play_direction):
    absolute_yardline = np.asarray(absolute_yardline, dtype=float)
    return np.where(np.asarray(play_direction) == "left",
                    absolute_yardline - 10.0, 110.0 - absolute_yardline)


# -- parsed container -------------------------------------------------------

@dataclass
class TrackingData:
    """Canonical frames plus per-play metadata.

    ``frames`` columns: game_id, play_id, frame_id, entity_id, x, y, speed,
    accel, dist, orientation, direction, side, event, club, play_direction.
    ``plays`` holds one PlayMeta row per valid play.
    """

    frames: pd.DataFrame
    plays: pd.DataFrame
    tackles: pd.DataFrame
    players: pd.DataFrame | None = None
    invalid: list = field(default_factory=list)

    def play_frames(self, game_id, play_id) -> pd.DataFrame:
        key = (game_id, play_id)
        if not hasattr(self, "_groups"):
            self._groups = {k: g for k, g in self.frames.groupby(["game_id", "play_id"], sort=False)}
        return self._groups[key]

    def meta(self, game_id, play_id) -> pd.Series:
        return self.plays.loc[(game_id, play_id)]


def _frames_from_raw(raw: pd.DataFrame, plays_raw: pd.DataFrame) -> pd.DataFrame:
    canon = canonicalize(raw)
    poss = plays_raw.set_index(["gameId", "playId"])["possessionTeam"]
    key = pd.MultiIndex.from_arrays([raw["gameId"], raw["playId"]])
    team = poss.reindex(key).to_numpy()
    side = np.where(raw["club"].to_numpy() == "football", "ball",
                    np.where(raw["club"].to_numpy() == team, "offense", "defense"))
    frames = pd.DataFrame({
        "game_id": raw["gameId"].to_numpy(),
        "play_id": raw["playId"].to_numpy(),
        "frame_id": raw["frameId"].to_numpy(),
        "entity_id": raw["nflId"].fillna(BALL_ID).to_numpy(dtype=np.int64),
        "x": canon["x"].to_numpy(),
        "y": canon["y"].to_numpy(),
        "speed": raw["s"].to_numpy(dtype=float),
        "accel": raw["a"].to_numpy(dtype=float),
        "dist": raw["dis"].to_numpy(dtype=float),
        "orientation": canon["o"].to_numpy(),
        "direction": canon["dir"].to_numpy(),
        "side": side,
        "event": raw["event"].to_numpy(),
        "club": raw["club"].to_numpy(),
        "play_direction": raw["playDirection"].to_numpy(),
    })
    return frames.sort_values(["game_id", "play_id", "frame_id", "entity_id"],
                              kind="stable").reset_index(drop=True)


def _validate_play(g: pd.DataFrame) -> str | None:
    """Reason the play is invalid, or None."""
    counts = g.groupby("frame_id")["side"].agg(
        players=lambda s: int((s != "ball").sum()), balls=lambda s: int((s == "ball").sum()))
    if (counts["players"] != 22).any():
        bad = counts.index[counts["players"] != 22][0]
        return f"frame {bad} has {counts.loc[bad, 'players']} players"
    if (counts["balls"] != 1).any():
        return "ball missing or duplicated"
    if g.duplicated(["entity_id", "frame_id"]).any():
        return "duplicate (entity, frame) rows"
    if not (g["x"].between(-10.0, 110.0).all() and g["y"].between(-HALF_WIDTH, HALF_WIDTH).all()):
        return "coordinates outside the field"
    return None


def _possession_end(g: pd.DataFrame, carrier_id: int):
    frames = np.sort(g["frame_id"].unique())
    ev = g.drop_duplicates("frame_id").set_index("frame_id")["event"]
    start = frames[0]
    for f in frames:
        if ev.get(f) in POSSESSION_EVENTS:
            start = f
            break
    end = frames[-1]
    for f in frames:
        if f >= start and ev.get(f) in END_EVENTS:
            end = f
            break
    carrier_frames = g.loc[g["entity_id"] == carrier_id, "frame_id"]
    if not ((carrier_frames == start).any() and (carrier_frames == end).any()):
        return None
    return int(start), int(end)


def parse_tracking(tracking_file, plays_file, tackles_file, players_file=None) -> TrackingData:
    """Read and validate tracking, play, and tackle files.

    Plays missing required metadata are dropped; plays whose frames break
    the 22-players-plus-ball invariant are flagged invalid and excluded.
    Both are logged and listed in ``TrackingData.invalid``.
    """
    raw = read_tracking_raw(tracking_file)
    plays_raw = pd.read_csv(plays_file, dtype={"passResult": object, "playType": object})
    _require_columns(plays_raw, _PLAYS_REQUIRED, plays_file)
    tackles = pd.read_csv(tackles_file)
    _require_columns(tackles, ["gameId", "playId", "nflId", "tackle", "pff_missedTackle"],
                     tackles_file)
    tackles = _numeric(tackles, ["gameId", "playId", "nflId", "tackle", "pff_missedTackle"],
                       tackles_file)
    players = None
    if players_file is not None:
        players = pd.read_csv(players_file)
        _require_columns(players, ["nflId", "position"], players_file)

    invalid = []
    missing = plays_raw[_PLAYS_REQUIRED].isna().any(axis=1)
    for _, r in plays_raw[missing].iterrows():
        logger.warning("play %s/%s dropped: missing required fields", r["gameId"], r["playId"])
        invalid.append((int(r["gameId"]), int(r["playId"]), "missing required fields"))
    plays_raw = plays_raw[~missing].copy()
    plays_raw = _numeric(plays_raw, ["gameId", "playId", "week", "quarter", "down", "yardsToGo",
                                     "absoluteYardlineNumber", "preSnapHomeScore",
                                     "preSnapVisitorScore", "ballCarrierId"], plays_file)

    frames = _frames_from_raw(raw, plays_raw)
    direction = frames.groupby(["game_id", "play_id"])["play_direction"].first()

    meta_rows = []
    keep_keys = set()
    by_play = dict(tuple(frames.groupby(["game_id", "play_id"], sort=False)))
    tk = tackles.groupby(["gameId", "playId"])
    tackle_groups = {k: g for k, g in tk}
    for r in plays_raw.itertuples(index=False):
        key = (int(r.gameId), int(r.playId))
        g = by_play.get(key)
        if g is None:
            invalid.append((*key, "no tracking rows"))
            continue
        reason = _validate_play(g)
        carrier = int(r.ballCarrierId)
        pe = None if reason else _possession_end(g, carrier)
        if reason is None and pe is None:
            reason = "ball carrier absent at possession start or play end"
        if reason:
            logger.warning("play %s/%s flagged invalid: %s", *key, reason)
            invalid.append((*key, reason))
            continue
        start, end = pe
        pdir = direction.loc[key]
        home_pos = r.possessionTeam == r.homeTeamAbbr
        diff = (r.preSnapHomeScore - r.preSnapVisitorScore) * (1 if home_pos else -1)
        pass_result = getattr(r, "passResult", None)
        pass_result = None if pd.isna(pass_result) else str(pass_result)
        play_type = getattr(r, "playType", None)
        if play_type is None or pd.isna(play_type):
            play_type = "pass" if pass_result else "run"
        tg = tackle_groups.get(key)
        tackler = missed = None
        if tg is not None:
            made = tg[tg["tackle"] == 1].sort_values("nflId")
            if len(made):
                tackler = int(made["nflId"].iloc[0])
            miss = tg[tg["pff_missedTackle"] == 1].sort_values("nflId")
            if len(miss):
                missed = tuple(int(v) for v in miss["nflId"])
        carrier_end = g[(g["entity_id"] == carrier) & (g["frame_id"] == end)]["x"].iloc[0]
        penalty = getattr(r, "penaltyYards", np.nan)
        meta_rows.append({
            "game_id": key[0], "play_id": key[1], "week": int(r.week),
            "down": int(r.down), "yards_to_go": float(r.yardsToGo),
            "adjusted_los": float(canonical_los(r.absoluteYardlineNumber, pdir)),
            "quarter": int(r.quarter), "score_differential": float(diff),
            "home_possession": bool(home_pos),
            "timeouts_off": int(getattr(r, "offTimeoutsRemaining", 3)),
            "timeouts_def": int(getattr(r, "defTimeoutsRemaining", 3)),
            "ball_carrier_id": carrier, "tackler_id": tackler, "missed_tackler_ids": missed,
            "penalty_flag": bool(pd.notna(penalty) and penalty != 0),
            "play_type": str(play_type), "pass_result": pass_result,
            "drive_id": f"{key[0]}:{r.driveId}", "off_team_id": str(r.possessionTeam),
            "def_team_id": str(getattr(r, "defensiveTeam", "")),
            "end_of_play_x": float(carrier_end), "possession_frame": start, "end_frame": end,
            "play_direction": pdir,
        })
        keep_keys.add(key)

    plays = pd.DataFrame(meta_rows)
    if len(plays):
        plays = plays.sort_values(["game_id", "play_id"]).set_index(["game_id", "play_id"], drop=False)
        plays.index.names = ["gid", "pid"]
    mask = pd.Series(list(zip(frames["game_id"], frames["play_id"]))).isin(keep_keys).to_numpy()
    frames = frames[mask].reset_index(drop=True)
    return TrackingData(frames, plays, tackles, players, invalid)


def filter_tackle_plays(plays: pd.DataFrame) -> pd.DataFrame:
    """Penalty-free plays that end in a recorded tackle."""
    return plays[~plays["penalty_flag"].astype(bool) & plays["tackler_id"].notna()]


# -- response and features --------------------------------------------------

def carrier_frames(frames: pd.DataFrame, meta) -> pd.DataFrame:
    """Carrier rows from possession start through the end frame."""
    c = frames[(frames["entity_id"] == meta["ball_carrier_id"])
               & (frames["frame_id"] >= meta["possession_frame"])
               & (frames["frame_id"] <= meta["end_frame"])]
    return c.sort_values("frame_id")


def compute_response(frames: pd.DataFrame, meta) -> pd.DataFrame:
    """Yards to be gained per carrier frame of one play.

    ``response = carrier_x(frame) - carrier_x(end frame)``; adding it back
    to the carrier's position recovers the end-of-play yard line.
    """
    c = carrier_frames(frames, meta)
    x = c["x"].to_numpy()
    return pd.DataFrame({"frame_id": c["frame_id"].to_numpy(), "carrier_x": x,
                         "response": x - x[-1]})


def feature_names(k: int = 5) -> list[str]:
    names = [f"carrier_{c}" for c in KINEMATICS]
    for r in range(1, k + 1):
        names += [f"def{r}_{c}" for c in KINEMATICS + _DEF_EXTRA]
    for r in range(1, k + 1):
        names += [f"off{r}_{c}" for c in KINEMATICS + _OFF_EXTRA]
    return names


def bearing_deg(dx, dy):
    """Canonical heading (degrees) of the vector (dx, dy)."""
    return np.mod(np.degrees(np.arctan2(dy, -dx)), 360.0)


def angle_diff(a, b):
    """Absolute angular difference folded into [0, 180]."""
    d = np.mod(np.asarray(a) - np.asarray(b), 360.0)
    return np.minimum(d, 360.0 - d)


def _block_features(carrier, others, ids, k, defense):
    """Ranked feature blocks for one side.

    ``carrier`` is (n_frames, 7), ``others`` (n_frames, n_players, 7) with
    players ordered by ascending entity id so a stable sort breaks distance
    ties by id.
    """
    dx = others[:, :, 0] - carrier[:, None, 0]
    dy = others[:, :, 1] - carrier[:, None, 1]
    d = np.hypot(dx, dy)
    if others.shape[1] < k:
        side = "defenders" if defense else "offensive players"
        raise DataError(f"need at least {k} {side} besides the carrier, got {others.shape[1]}")
    order = np.argsort(d, axis=1, kind="stable")[:, :k]
    rows = np.arange(len(d))[:, None]
    blocks = [others[rows, order], d[rows, order][..., None],
              dx[rows, order][..., None], dy[rows, order][..., None]]
    if defense:
        # bearing of the segment from the defender to the carrier
        bearing = bearing_deg(-dx, -dy)
        pursuit = angle_diff(others[:, :, 6], bearing)
        blocks.append(pursuit[rows, order][..., None])
    return np.concatenate(blocks, axis=2).reshape(len(d), -1)


def _stack(g: pd.DataFrame, frame_ids):
    """(n_frames, n_entities, 7) kinematics; entities sorted by id."""
    g = g[g["frame_id"].isin(frame_ids)].sort_values(["frame_id", "entity_id"], kind="stable")
    n_f = len(frame_ids)
    vals = g[KINEMATICS].to_numpy(dtype=float)
    n_e = len(g) // n_f
    return vals.reshape(n_f, n_e, len(KINEMATICS)), g["entity_id"].to_numpy().reshape(n_f, n_e), \
        g["side"].to_numpy().reshape(n_f, n_e)


def frame_feature_matrix(g: pd.DataFrame, carrier_id: int, frame_ids, k: int = 5,
                         exclude=None) -> np.ndarray:
    """Raw (unstandardized) features for the given frames of one play.

    ``exclude`` removes an entity before ranking (the counterfactual).
    """
    if exclude is not None:
        g = g[g["entity_id"] != exclude]
    frame_ids = np.asarray(frame_ids)
    vals, ids, side = _stack(g, frame_ids)
    ids0, side0 = ids[0], side[0]
    is_carrier = ids0 == carrier_id
    if not is_carrier.any():
        raise DataError(f"carrier {carrier_id} absent from frame")
    carrier = vals[:, is_carrier, :][:, 0, :]
    dmask = side0 == "defense"
    omask = (side0 == "offense") & ~is_carrier
    return np.concatenate([carrier,
                           _block_features(carrier, vals[:, dmask], ids0[dmask], k, True),
                           _block_features(carrier, vals[:, omask], ids0[omask], k, False)],
                          axis=1)


def engineer_features(frame: pd.DataFrame, carrier_id: int, standardization_stats=None,
                      k: int = 5) -> np.ndarray:
    """Feature vector for a single frame (rows of one frame_id).

    Players are ranked by Euclidean distance to the carrier, ties broken by
    ascending entity id.
    """
    fid = frame["frame_id"].unique()
    if len(fid) != 1:
        raise ValueError("engineer_features expects the rows of exactly one frame")
    x = frame_feature_matrix(frame, carrier_id, fid, k)[0]
    return standardization_stats.apply(x) if standardization_stats is not None else x


def remove_defender(frame: pd.DataFrame, tackler_id: int, carrier_id: int,
                    standardization_stats=None, k: int = 5) -> np.ndarray:
    """Counterfactual feature vector with the tackler deleted before ranking."""
    return engineer_features(frame[frame["entity_id"] != tackler_id], carrier_id,
                             standardization_stats, k)


def identify_tackle_frame(play_frames: pd.DataFrame, tackler_id: int, carrier_id: int,
                          tol: float = 1e-9) -> int:
    """Frame minimizing tackler-carrier distance; earliest on ties."""
    t = play_frames[play_frames["entity_id"] == tackler_id].set_index("frame_id")
    if t.empty:
        raise DataError(f"tackler {tackler_id} never on field: corrupt tackle record")
    c = play_frames[play_frames["entity_id"] == carrier_id].set_index("frame_id")
    common = t.index.intersection(c.index).sort_values()
    if len(common) == 0:
        raise DataError(f"tackler {tackler_id} and carrier {carrier_id} never share a frame")
    d = np.hypot(t.loc[common, "x"].to_numpy() - c.loc[common, "x"].to_numpy(),
                 t.loc[common, "y"].to_numpy() - c.loc[common, "y"].to_numpy())
    return int(common[np.flatnonzero(d <= d.min() + tol)[0]])


# -- standardization ---------------------------------------------------------

@dataclass
class StandardizationStats:
    """Per-feature mean and SD fitted on training rows."""

    names: list
    mean: np.ndarray
    sd: np.ndarray

    @classmethod
    def fit(cls, X, names=None) -> StandardizationStats:
        X = np.asarray(X, dtype=float)
        mean = X.mean(axis=0)
        sd = X.std(axis=0)
        sd = np.where(sd > 0, sd, 1.0)
        names = list(names) if names is not None else [f"x{j}" for j in range(X.shape[1])]
        return cls(names, mean, sd)

    def apply(self, X):
        return (np.asarray(X, dtype=float) - self.mean) / self.sd

    def to_dict(self) -> dict:
        return {"names": list(self.names), "mean": [float(v) for v in self.mean],
                "sd": [float(v) for v in self.sd]}

    @classmethod
    def from_dict(cls, d) -> StandardizationStats:
        return cls(list(d["names"]), np.asarray(d["mean"], dtype=float),
                   np.asarray(d["sd"], dtype=float))


# -- batch tables ------------------------------------------------------------

def build_feature_table(data: TrackingData, k: int = 5, include_penalties: bool = False) -> pd.DataFrame:
    """One row per (play, carrier frame): keys, raw features, response."""
    names = feature_names(k)
    parts = []
    for meta in data.plays.itertuples(index=False):
        if meta.penalty_flag and not include_penalties:
            continue
        g = data.play_frames(meta.game_id, meta.play_id)
        resp = compute_response(g, meta._asdict())
        X = frame_feature_matrix(g, meta.ball_carrier_id, resp["frame_id"].to_numpy(), k)
        part = pd.DataFrame(X, columns=names)
        part.insert(0, "response", resp["response"].to_numpy())
        part.insert(0, "carrier_x_raw", resp["carrier_x"].to_numpy())
        part.insert(0, "week", meta.week)
        part.insert(0, "frame_id", resp["frame_id"].to_numpy())
        part.insert(0, "play_id", meta.play_id)
        part.insert(0, "game_id", meta.game_id)
        parts.append(part)
    if not parts:
        return pd.DataFrame(columns=["game_id", "play_id", "frame_id", "week",
                                     "carrier_x_raw", "response"] + names)
    return pd.concat(parts, ignore_index=True)


def build_contact_table(data: TrackingData, k: int = 5, missed: bool = False) -> pd.DataFrame:
    """Contact-frame features with and without the contacting defender.

    One row per tackle (or, with ``missed=True``, per missed tackle) on a
    penalty-free play. Columns: keys, ``defender_id``, ``frame_id``,
    ``scenario`` in {real, removed}, ``carrier_x_raw``, raw features.
    """
    names = feature_names(k)
    rows = []
    for meta in data.plays.itertuples(index=False):
        if meta.penalty_flag:
            continue
        if missed:
            defenders = meta.missed_tackler_ids or ()
        else:
            defenders = () if meta.tackler_id is None or pd.isna(meta.tackler_id) else (int(meta.tackler_id),)
        if not defenders:
            continue
        g = data.play_frames(meta.game_id, meta.play_id)
        window = g[(g["frame_id"] >= meta.possession_frame) & (g["frame_id"] <= meta.end_frame)]
        for d in defenders:
            fid = identify_tackle_frame(window, d, meta.ball_carrier_id)
            frame = window[window["frame_id"] == fid]
            cx = frame.loc[frame["entity_id"] == meta.ball_carrier_id, "x"].iloc[0]
            real = engineer_features(frame, meta.ball_carrier_id, None, k)
            removed = remove_defender(frame, d, meta.ball_carrier_id, None, k)
            for scen, vec in (("real", real), ("removed", removed)):
                rows.append([meta.game_id, meta.play_id, d, fid, scen, cx, *vec])
    cols = ["game_id", "play_id", "defender_id", "frame_id", "scenario", "carrier_x_raw"] + names
    return pd.DataFrame(rows, columns=cols)
