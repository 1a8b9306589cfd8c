"""Drive-level bootstrap of tackler intercepts and the player ranking."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd
from threadpoolctl import threadpool_limits

from tacklepep.gamlss.mixed import build_design, fit_gamlss

logger = logging.getLogger(__name__)


@dataclass
class BootstrapDistribution:
    """Replicate intercepts, one column per tackler."""

    intercepts: pd.DataFrame  # index: replicate, columns: tackler ids
    n_tackles: pd.Series
    n_requested: int
    failed: list
    flagged: bool

    def long(self) -> pd.DataFrame:
        """(tackler_id, replicate, intercept) rows, sorted."""
        df = self.intercepts.stack().rename("intercept").reset_index()
        df.columns = ["replicate", "tackler_id", "intercept"]
        return df.sort_values(["tackler_id", "replicate"], kind="stable").reset_index(drop=True)

    def sd(self) -> pd.Series:
        return self.intercepts.std(ddof=1)

    def median(self) -> pd.Series:
        return self.intercepts.median()


def drive_weights(drive_codes: np.ndarray, n_drives: int, rng) -> np.ndarray:
    """Record multiplicities after resampling ``n_drives`` drives with replacement."""
    pick = rng.integers(0, n_drives, n_drives)
    mult = np.bincount(pick, minlength=n_drives)
    return mult[drive_codes].astype(float)


def _replicate(args):
    b, seq, design, drive_codes, n_drives, family, init, tol, max_iter = args
    rng = np.random.default_rng(seq)
    w = drive_weights(drive_codes, n_drives, rng)
    with threadpool_limits(1):
        try:
            fit = fit_gamlss(family=family, design=design, weights=w, init=init, tol=tol,
                             max_iter=max_iter, nest=False)
        except (np.linalg.LinAlgError, ValueError, FloatingPointError) as exc:
            return b, None, str(exc)
    if not fit.converged:
        return b, None, "did not converge"
    T = fit.T.copy()
    absent = np.bincount(design.group_index[0], weights=w, minlength=len(T)) == 0
    # tacklers absent from the replicate sit at the group mean
    T[absent] = fit.group_means["tackler"]
    return b, T.to_numpy(), None


def drive_bootstrap(records: pd.DataFrame, B: int = 1000, seed: int = 0, family: str = "SST",
                    n_jobs: int = 1, full_fit=None, tol: float = 1e-8, max_iter: int = 500,
                    reference: dict | None = None) -> BootstrapDistribution:
    """Resample whole drives with replacement and refit the model B times.

    A drive drawn k times contributes its records with weight k, which is
    the same objective as duplicating them. Replicate ``b`` uses child
    ``b`` of ``SeedSequence(seed)``; results do not depend on ``n_jobs``.
    Replicates warm-start from ``full_fit`` (fitted here when omitted).
    """
    if "drive_id" not in records or records["drive_id"].isna().any():
        raise ValueError("every record needs a drive_id")
    design = build_design(records, reference=reference)
    if full_fit is None:
        full_fit = fit_gamlss(family=family, design=design, tol=tol, max_iter=max_iter)
    drive_codes, drives = pd.factorize(records["drive_id"].astype(str), sort=True)
    seqs = np.random.SeedSequence(seed).spawn(B)
    jobs = [(b, seqs[b], design, drive_codes, len(drives), family, full_fit, tol, max_iter)
            for b in range(B)]
    if n_jobs > 1:
        with ProcessPoolExecutor(n_jobs) as ex:
            results = list(ex.map(_replicate, jobs, chunksize=max(1, B // (4 * n_jobs))))
    else:
        results = [_replicate(j) for j in jobs]
    rows, failed = {}, []
    for b, T, err in sorted(results, key=lambda r: r[0]):
        if T is None:
            logger.warning("bootstrap replicate %d dropped: %s", b, err)
            failed.append(b)
        else:
            rows[b] = T
    levels = design.group_levels[0]
    inter = pd.DataFrame.from_dict(rows, orient="index", columns=levels)
    inter.index.name = "replicate"
    n_t = records.groupby(records["tackler_id"].astype(str)).size().reindex(levels)
    flagged = len(rows) < math.ceil(0.9 * B)
    if flagged:
        logger.warning("only %d of %d bootstrap replicates succeeded", len(rows), B)
    return BootstrapDistribution(inter, n_t, B, failed, flagged)


def rank_players(bootstrap: BootstrapDistribution, records: pd.DataFrame, min_tackles: int = 10,
                 names: pd.DataFrame | None = None) -> pd.DataFrame:
    """Players with more than ``min_tackles`` tackles, by bootstrap median."""
    rec = records.assign(tackler_id=records["tackler_id"].astype(str))
    agg = rec.groupby("tackler_id").agg(sum_pep=("pep", lambda v: math.fsum(v)),
                                        n_tackles=("pep", "size"),
                                        position=("tackler_position", "first"))
    agg["avg_pep"] = agg["sum_pep"] / agg["n_tackles"]
    med = bootstrap.median().rename("median_intercept")
    tab = agg.join(med, how="inner")
    tab = tab[tab["n_tackles"] > min_tackles]
    tab = tab.reset_index().rename(columns={"tackler_id": "player"})
    tab = tab.sort_values(["median_intercept", "player"], ascending=[False, True], kind="stable")
    tab.insert(0, "rank", np.arange(1, len(tab) + 1))
    if names is not None and len(names):
        nm = dict(zip(names["nflId"].astype(str), names["displayName"]))
        tab.insert(2, "name", tab["player"].map(nm).fillna(""))
    cols = ["rank", "player"] + (["name"] if "name" in tab else []) + \
        ["position", "median_intercept", "sum_pep", "avg_pep", "n_tackles"]
    return tab[cols].reset_index(drop=True)
