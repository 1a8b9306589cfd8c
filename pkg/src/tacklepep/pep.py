"""Prevented expected points (PEP) per tackle.

For a tackle made at frame ``t`` the forest gives a density of yards still
to be gained, once with the tackler on the field (``x_0``) and once with the
tackler deleted (``x_removed``). Draws are turned into end-of-play yard
lines and mapped to expected points with :func:`tacklepep.ep_model.g`:

* ``ep_hyp = mean g(draws | x_removed)``
* ``ep_real_pred = mean g(draws | x_0)``
* ``ep_real_obs = g(observed end-of-play yard line)``

``pep = ep_hyp - ep_real_obs`` and ``pep_alt = ep_hyp - ep_real_pred``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd

from tacklepep import ep_model
from tacklepep.forest import ConditionalDensity

logger = logging.getLogger(__name__)

RECORD_COLUMNS = [
    "game_id", "play_id", "week", "tackler_id", "tackler_position", "ball_carrier_id",
    "ball_carrier_position", "off_team_id", "def_team_id", "drive_id", "frame_id",
    "pep", "pep_alt", "ep_hyp", "ep_real_pred", "ep_real_obs",
    "short_yardage", "fourth_down", "fourth_quarter", "turnover",
    "pass_result", "play_type", "source",
]
RECORD_DOC = {
    "pep": "ep_hyp - ep_real_obs",
    "pep_alt": "ep_hyp - ep_real_pred",
    "ep_hyp": "mean EP over the density with the tackler removed",
    "ep_real_pred": "mean EP over the density with the tackler present",
    "ep_real_obs": "EP of the observed end-of-play yard line",
    "short_yardage": "yards_to_go < 2",
    "turnover": "fourth down not converted at the observed end-of-play yard line",
    "source": "'tackle' or 'missed'",
}


@dataclass(frozen=True)
class PepRecord:
    game_id: int
    play_id: int
    tackler_id: int
    pep: float
    pep_alt: float
    ep_hyp: float
    ep_real_pred: float
    ep_real_obs: float
    week: int = 0
    tackler_position: str = ""
    ball_carrier_id: int = 0
    ball_carrier_position: str = ""
    off_team_id: str = ""
    def_team_id: str = ""
    drive_id: str = ""
    frame_id: int = 0
    short_yardage: bool = False
    fourth_down: bool = False
    fourth_quarter: bool = False
    turnover: bool = False
    pass_result: str = ""
    play_type: str = ""
    source: str = "tackle"

    @classmethod
    def from_components(cls, ep_hyp: float, ep_real_pred: float, ep_real_obs: float,
                        **fields) -> PepRecord:
        """Build a record from the three EP terms; pep and pep_alt follow."""
        fields.setdefault("game_id", 0)
        fields.setdefault("play_id", 0)
        fields.setdefault("tackler_id", 0)
        return cls(pep=ep_hyp - ep_real_obs, pep_alt=ep_hyp - ep_real_pred,
                   ep_hyp=ep_hyp, ep_real_pred=ep_real_pred, ep_real_obs=ep_real_obs, **fields)

    def as_dict(self) -> dict:
        return asdict(self)


def mc_expected_ep(density, tackle_context, classifier, carrier_x: float | None = None) -> float:
    """Monte-Carlo mean of g over the draws of a density.

    ``density`` holds end-of-play yard lines, or yards-to-gain when
    ``carrier_x`` is given (yard line = carrier_x - yards).
    """
    draws = density.draws if isinstance(density, ConditionalDensity) else np.asarray(density, float)
    if draws.size == 0:
        raise ValueError("empty density")
    eopy = draws if carrier_x is None else carrier_x - draws
    vals = ep_model.g(eopy, tackle_context, classifier)
    return math.fsum(vals) / len(vals)


def play_flags(meta) -> dict:
    """Situational covariates for one play."""
    m = meta if isinstance(meta, dict) else meta._asdict() if hasattr(meta, "_asdict") else dict(meta)
    eopy = float(m["end_of_play_x"])
    gained = float(m["adjusted_los"]) - eopy
    turnover = int(m["down"]) == 4 and gained < float(m["yards_to_go"]) and 0.0 < eopy < 100.0
    pr = m.get("pass_result")
    return {"short_yardage": bool(float(m["yards_to_go"]) < 2), "fourth_down": int(m["down"]) == 4,
            "fourth_quarter": int(m["quarter"]) == 4, "turnover": bool(turnover),
            "pass_result": "" if pr is None or (isinstance(pr, float) and np.isnan(pr)) else str(pr),
            "play_type": str(m.get("play_type", ""))}


def compute_pep(tackle_play: dict, fold_forest, classifier) -> PepRecord:
    """PEP for one tackle.

    ``tackle_play`` carries ``meta`` (a PlayMeta mapping), ``tackler_id``,
    ``frame_id``, ``carrier_x`` at the contact frame, and the raw feature
    vectors ``x_real`` / ``x_removed``. Features are standardized with the
    fold forest's statistics.
    """
    meta = tackle_play["meta"]
    stats = fold_forest.stats
    X = np.vstack([tackle_play["x_removed"], tackle_play["x_real"]])
    if stats is not None:
        X = stats.apply(X)
    draws = fold_forest.tree_predictions(X)
    cx = float(tackle_play["carrier_x"])
    ep_hyp = mc_expected_ep(draws[0], meta, classifier, carrier_x=cx)
    ep_pred = mc_expected_ep(draws[1], meta, classifier, carrier_x=cx)
    ep_obs = float(ep_model.g(float(meta["end_of_play_x"]), meta, classifier)[0])
    return PepRecord.from_components(
        ep_hyp, ep_pred, ep_obs, game_id=int(meta["game_id"]), play_id=int(meta["play_id"]),
        tackler_id=int(tackle_play["tackler_id"]), week=int(meta["week"]),
        ball_carrier_id=int(meta["ball_carrier_id"]), off_team_id=str(meta.get("off_team_id", "")),
        def_team_id=str(meta.get("def_team_id", "")), drive_id=str(meta.get("drive_id", "")),
        frame_id=int(tackle_play["frame_id"]), **play_flags(meta))


def compute_pep_alt(tackle_play: dict, fold_forest, classifier) -> float:
    return compute_pep(tackle_play, fold_forest, classifier).pep_alt


def _row_means(vals: np.ndarray) -> np.ndarray:
    return np.array([math.fsum(r) / len(r) for r in vals])


def _context_frame(meta_rows: pd.DataFrame, n_draws: int) -> pd.DataFrame:
    return meta_rows.loc[meta_rows.index.repeat(n_draws)].reset_index(drop=True)


def score_contacts(contact_table: pd.DataFrame, plays: pd.DataFrame, forests: dict, classifier,
                   feature_names, players: pd.DataFrame | None = None,
                   source: str = "tackle", draws_out: list | None = None) -> pd.DataFrame:
    """PEP records for every contact row pair (real, removed).

    ``forests`` maps a held-out week to the forest that did not see it, so
    every tackle is scored out of sample. Records come out sorted by
    (game_id, play_id, tackler_id). With ``source='missed'`` the value is
    the missed-tackle PEP (see :func:`missed_tackle_pep`). When
    ``draws_out`` is a list, one long table of per-tree yards-to-gain draws
    (``scenario``, ``draw_index``, ``yhat``) is appended to it per week.
    """
    if contact_table.empty:
        return pd.DataFrame(columns=RECORD_COLUMNS)
    meta = plays.reset_index(drop=True).set_index(["game_id", "play_id"], drop=False)
    pos = {} if players is None else dict(zip(players["nflId"].astype(int), players["position"]))
    keys = ["game_id", "play_id", "defender_id"]
    real = contact_table[contact_table["scenario"] == "real"].set_index(keys).sort_index()
    removed = contact_table[contact_table["scenario"] == "removed"].set_index(keys).sort_index()
    if not real.index.equals(removed.index):
        raise ValueError("contact table needs one real and one removed row per contact")
    idx = real.index
    m = meta.loc[list(zip(idx.get_level_values(0), idx.get_level_values(1)))].reset_index(drop=True)
    weeks = m["week"].to_numpy()
    n = len(m)
    ep_hyp = np.full(n, np.nan)
    ep_pred = np.full(n, np.nan)
    for w in np.unique(weeks):
        if w not in forests:
            raise KeyError(f"no fold forest holds out week {w}")
        f = forests[w]
        sel = np.flatnonzero(weeks == w)
        Xr = real[list(feature_names)].to_numpy(float)[sel]
        Xh = removed[list(feature_names)].to_numpy(float)[sel]
        if f.stats is not None:
            Xr, Xh = f.stats.apply(Xr), f.stats.apply(Xh)
        cx = real["carrier_x_raw"].to_numpy(float)[sel][:, None]
        ctx = _context_frame(m.iloc[sel], f.n_trees)
        for arr, X, scen in ((ep_hyp, Xh, "removed"), (ep_pred, Xr, "real")):
            yhat = f.tree_predictions(X)
            if draws_out is not None:
                k = idx[sel]
                draws_out.append(pd.DataFrame({
                    "game_id": np.repeat(k.get_level_values(0), f.n_trees),
                    "play_id": np.repeat(k.get_level_values(1), f.n_trees),
                    "tackler_id": np.repeat(k.get_level_values(2), f.n_trees),
                    "scenario": scen, "draw_index": np.tile(np.arange(f.n_trees), len(sel)),
                    "yhat": yhat.ravel()}))
            eopy = (cx - yhat).ravel()
            vals = ep_model.g(eopy, ctx, classifier).reshape(len(sel), f.n_trees)
            arr[sel] = _row_means(vals)
    ep_obs = ep_model.g(m["end_of_play_x"].to_numpy(float), m, classifier)
    out = []
    for i in range(n):
        row = m.iloc[i]
        d = int(idx[i][2])
        if source == "missed":
            pep, pep_alt = ep_pred[i] - ep_obs[i], 0.0
            hyp = ep_pred[i]
        else:
            pep, pep_alt, hyp = ep_hyp[i] - ep_obs[i], ep_hyp[i] - ep_pred[i], ep_hyp[i]
        rec = {"game_id": int(row["game_id"]), "play_id": int(row["play_id"]),
               "week": int(row["week"]), "tackler_id": d,
               "tackler_position": pos.get(d, ""),
               "ball_carrier_id": int(row["ball_carrier_id"]),
               "ball_carrier_position": pos.get(int(row["ball_carrier_id"]), ""),
               "off_team_id": row.get("off_team_id", ""), "def_team_id": row.get("def_team_id", ""),
               "drive_id": row.get("drive_id", ""), "frame_id": int(real["frame_id"].iloc[i]),
               "pep": pep, "pep_alt": pep_alt, "ep_hyp": hyp, "ep_real_pred": ep_pred[i],
               "ep_real_obs": float(ep_obs[i]), **play_flags(row.to_dict()), "source": source}
        out.append(rec)
    return pd.DataFrame(out, columns=RECORD_COLUMNS)


def missed_tackle_pep(missed_tackle_event: dict, fold_forest, classifier) -> float:
    """Value of a missed tackle on the PEP scale.

    The hypothetical made tackle is scored by the density at the contact
    frame with the defender present. The result is
    ``E[g | made tackle] - g(observed EOPY)``, which shares the sign of
    PEP: a miss that let the carrier gain a lot is negative, so real and
    missed records can be pooled in one mixed model.
    """
    meta = missed_tackle_event["meta"]
    x = np.atleast_2d(missed_tackle_event["x_real"])
    if fold_forest.stats is not None:
        x = fold_forest.stats.apply(x)
    draws = fold_forest.tree_predictions(x)[0]
    made = mc_expected_ep(draws, meta, classifier, carrier_x=float(missed_tackle_event["carrier_x"]))
    obs = float(ep_model.g(float(meta["end_of_play_x"]), meta, classifier)[0])
    return made - obs


def aggregate_pep(records: pd.DataFrame, group_by: str = "tackler_id") -> pd.DataFrame:
    """Per-group cumulative PEP, count, and average (sum / n)."""
    if len(records) == 0:
        raise ValueError("no records to aggregate")
    rows = []
    for key, grp in records.groupby(group_by, sort=True):
        s = math.fsum(grp["pep"].to_numpy(float))
        rows.append({group_by: key, "sum_pep": s, "n_tackles": len(grp), "avg_pep": s / len(grp)})
    return pd.DataFrame(rows)


def filter_run_plays(records: pd.DataFrame) -> pd.DataFrame:
    return records[records["play_type"] == "run"]


def check_identity(records: pd.DataFrame, tol: float = 1e-9) -> float:
    """Largest violation of pep - pep_alt = ep_real_pred - ep_real_obs."""
    r = records[records["source"] == "tackle"] if "source" in records else records
    lhs = r["pep"].to_numpy(float) - r["pep_alt"].to_numpy(float)
    rhs = r["ep_real_pred"].to_numpy(float) - r["ep_real_obs"].to_numpy(float)
    err = float(np.max(np.abs(lhs - rhs))) if len(r) else 0.0
    if err > tol:
        logger.warning("PEP identity violated by %.3g", err)
    return err
