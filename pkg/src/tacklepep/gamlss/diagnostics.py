"""Normalized quantile residuals and wormplot data."""

from __future__ import annotations

import logging

import numpy as np
import pandas as pd
from scipy import special

from tacklepep.gamlss.families import get_family

logger = logging.getLogger(__name__)

CLAMP = 8.0


def quantile_residuals(fit, records: pd.DataFrame, response: str = "pep") -> np.ndarray:
    """``Phi^-1(F(y_i))`` under each record's fitted distribution.

    The tail beyond the median is computed from the survival function so
    that large residuals keep their precision. Values whose probability
    underflows are clamped to +-8 with a warning.
    """
    fam = get_family(fit.family)
    y = records[response].to_numpy(dtype=float)
    mu = fit.fitted_mean(records)
    return residuals_from(fam, y, mu, fit.sigma, fit.nu, fit.tau)


def residuals_from(fam, y, mu, sigma, nu=1.0, tau=np.inf) -> np.ndarray:
    F = np.asarray(fam.cdf(y, mu, sigma, nu, tau), dtype=float)
    S = np.asarray(fam.sf(y, mu, sigma, nu, tau), dtype=float)
    with np.errstate(divide="ignore"):
        r = np.where(F <= 0.5, special.ndtri(F), -special.ndtri(S))
    bad = ~np.isfinite(r) | (np.abs(r) > CLAMP)
    if bad.any():
        logger.warning("%d quantile residuals clamped to +-%g", int(bad.sum()), CLAMP)
        r = np.clip(np.nan_to_num(r, nan=0.0, posinf=CLAMP, neginf=-CLAMP), -CLAMP, CLAMP)
    return r


def plotting_positions(n: int) -> np.ndarray:
    """``(i - a) / (n + 1 - 2a)`` with ``a = 3/8`` for n <= 10, else 1/2."""
    a = 3.0 / 8.0 if n <= 10 else 0.5
    return (np.arange(1, n + 1) - a) / (n + 1 - 2 * a)


def wormplot_data(residuals, level: float = 0.95) -> pd.DataFrame:
    """Detrended normal Q-Q points with a pointwise confidence band.

    Columns ``theoretical_q``, ``deviation`` (ordered residual minus
    theoretical quantile), ``band_lo``, ``band_hi``. The band uses the
    normal approximation to the order-statistic SD,
    ``sqrt(p (1 - p) / n) / phi(q)``.
    """
    r = np.sort(np.asarray(residuals, dtype=float))
    n = len(r)
    if n == 0:
        return pd.DataFrame(columns=["theoretical_q", "deviation", "band_lo", "band_hi"])
    p = plotting_positions(n)
    q = special.ndtri(p)
    z = special.ndtri(0.5 + level / 2.0)
    se = np.sqrt(p * (1.0 - p) / n) / (np.exp(-0.5 * q * q) / np.sqrt(2.0 * np.pi))
    return pd.DataFrame({"theoretical_q": q, "deviation": r - q, "band_lo": -z * se, "band_hi": z * se})


def outside_band_fraction(worm: pd.DataFrame) -> float:
    out = (worm["deviation"] < worm["band_lo"]) | (worm["deviation"] > worm["band_hi"])
    return float(out.mean()) if len(worm) else 0.0
