"""Response families for the mixed model: normal, symmetric t, skew t.

All three are parameterized by their mean ``mu`` and standard deviation
``sigma`` so the mean model has an identity link and the families nest:

* ``TF(mu, sigma, tau)`` is a Student t with ``tau`` degrees of freedom,
  rescaled to standard deviation ``sigma`` (scale ``sigma*sqrt((tau-2)/tau)``);
  ``tau = inf`` is the normal.
* ``SST(mu, sigma, nu, tau)`` is the spliced-scale skew t (left half-scale
  ``1/nu``, right half-scale ``nu`` relative to a t_tau kernel), shifted and
  rescaled so that its mean is ``mu`` and its SD ``sigma``. ``nu = 1`` is TF.

With ``z = (y - m1) / s1`` for the spliced-scale location ``m1`` and scale
``s1`` the density is

    f(y) = 2 nu / ((1 + nu^2) s1) * t_tau(nu z)     for z < 0
    f(y) = 2 nu / ((1 + nu^2) s1) * t_tau(z / nu)   for z >= 0
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats


class DomainError(ValueError):
    """Family parameters outside their domain."""


@dataclass(frozen=True)
class SstParams:
    mu: float
    sigma: float
    nu: float = 1.0
    tau: float = math.inf

    def __post_init__(self):
        if not self.sigma > 0:
            raise DomainError(f"sigma must be > 0, got {self.sigma}")
        if not self.nu > 0:
            raise DomainError(f"nu must be > 0, got {self.nu}")
        if not self.tau > 2:
            raise DomainError(f"tau must be > 2, got {self.tau}")


def _check(sigma, nu, tau):
    SstParams(0.0, sigma, nu, tau)


def sst_moments(nu: float, tau: float) -> tuple[float, float]:
    """Mean and SD of the unit spliced-scale skew t (location 0, scale 1)."""
    if math.isinf(tau):
        m1 = math.sqrt(2.0 / math.pi) * (nu - 1.0 / nu)
        m2 = (nu ** 3 + nu ** -3) / (nu + 1.0 / nu)
    else:
        m1 = 2.0 * math.sqrt(tau) * (nu - 1.0 / nu) / ((tau - 1.0) * special.beta(0.5, tau / 2.0))
        m2 = tau * (nu ** 3 + nu ** -3) / ((tau - 2.0) * (nu + 1.0 / nu))
    return m1, math.sqrt(m2 - m1 * m1)


def spliced_location_scale(mu, sigma, nu, tau):
    """(m1, s1) of the spliced-scale form with mean ``mu`` and SD ``sigma``."""
    m, s = sst_moments(nu, tau)
    s1 = sigma / s
    return np.asarray(mu, dtype=float) - s1 * m, s1


def _t_logpdf(a, tau):
    if math.isinf(tau):
        return -0.5 * a * a - 0.5 * math.log(2 * math.pi)
    return (special.gammaln((tau + 1) / 2) - special.gammaln(tau / 2)
            - 0.5 * math.log(tau * math.pi) - (tau + 1) / 2 * np.log1p(a * a / tau))


def _t_cdf(a, tau):
    return special.ndtr(a) if math.isinf(tau) else special.stdtr(tau, a)


def _t_ppf(p, tau):
    return special.ndtri(p) if math.isinf(tau) else special.stdtrit(tau, p)


class Family:
    """Common interface; ``nu``/``tau`` are ignored where they do not apply."""

    name = "family"
    shape_names: tuple = ()

    def logpdf(self, y, mu, sigma, nu=1.0, tau=math.inf):
        raise NotImplementedError

    def cdf(self, y, mu, sigma, nu=1.0, tau=math.inf):
        raise NotImplementedError

    def sf(self, y, mu, sigma, nu=1.0, tau=math.inf):
        raise NotImplementedError

    def ppf(self, p, mu, sigma, nu=1.0, tau=math.inf):
        raise NotImplementedError

    def score_mu(self, y, mu, sigma, nu=1.0, tau=math.inf):
        """d log f / d mu."""
        raise NotImplementedError

    def fisher_mu(self, sigma, nu=1.0, tau=math.inf) -> float:
        """Expected information for mu (constant in mu for these families)."""
        raise NotImplementedError

    def rvs(self, size, mu, sigma, nu=1.0, tau=math.inf, rng=None):
        rng = np.random.default_rng(rng)
        return self.ppf(rng.random(size), mu, sigma, nu, tau)


class SST(Family):
    name = "SST"
    shape_names = ("sigma", "nu", "tau")

    def logpdf(self, y, mu, sigma, nu=1.0, tau=math.inf):
        _check(sigma, nu, tau)
        m1, s1 = spliced_location_scale(mu, sigma, nu, tau)
        z = (np.asarray(y, dtype=float) - m1) / s1
        a = np.where(z < 0, nu * z, z / nu)
        return (math.log(2.0) + math.log(nu) - math.log1p(nu * nu) - math.log(s1)
                + _t_logpdf(a, tau))

    def _z(self, y, mu, sigma, nu, tau):
        _check(sigma, nu, tau)
        m1, s1 = spliced_location_scale(mu, sigma, nu, tau)
        return (np.asarray(y, dtype=float) - m1) / s1

    def cdf(self, y, mu, sigma, nu=1.0, tau=math.inf):
        z = self._z(y, mu, sigma, nu, tau)
        k = 1.0 + nu * nu
        left = 2.0 / k * _t_cdf(nu * z, tau)
        right = 1.0 - 2.0 * nu * nu / k * _t_cdf(-z / nu, tau)
        return np.where(z < 0, left, right)

    def sf(self, y, mu, sigma, nu=1.0, tau=math.inf):
        z = self._z(y, mu, sigma, nu, tau)
        k = 1.0 + nu * nu
        left = 1.0 - 2.0 / k * _t_cdf(nu * z, tau)
        right = 2.0 * nu * nu / k * _t_cdf(-z / nu, tau)
        return np.where(z < 0, left, right)

    def ppf(self, p, mu, sigma, nu=1.0, tau=math.inf):
        _check(sigma, nu, tau)
        m1, s1 = spliced_location_scale(mu, sigma, nu, tau)
        p = np.asarray(p, dtype=float)
        k = 1.0 + nu * nu
        p0 = 1.0 / k
        with np.errstate(invalid="ignore", divide="ignore"):
            zl = _t_ppf(np.minimum(p, p0) * k / 2.0, tau) / nu
            zr = -nu * _t_ppf(np.minimum((1.0 - p) * k / (2.0 * nu * nu), 0.5), tau)
        return m1 + s1 * np.where(p < p0, zl, zr)

    def score_mu(self, y, mu, sigma, nu=1.0, tau=math.inf):
        z = self._z(y, mu, sigma, nu, tau)
        _, s1 = spliced_location_scale(0.0, sigma, nu, tau)
        k = np.where(z < 0, nu, 1.0 / nu)
        a = z * k
        if math.isinf(tau):
            return a * k / s1
        return (tau + 1.0) * a * k / ((tau + a * a) * s1)

    def fisher_mu(self, sigma, nu=1.0, tau=math.inf) -> float:
        _, s1 = spliced_location_scale(0.0, sigma, nu, tau)
        if math.isinf(tau):
            return 1.0 / (s1 * s1)
        return (tau + 1.0) / ((tau + 3.0) * s1 * s1)


class TF(SST):
    """Symmetric t with mean ``mu`` and SD ``sigma``."""

    name = "TF"
    shape_names = ("sigma", "tau")

    def logpdf(self, y, mu, sigma, nu=1.0, tau=math.inf):
        return super().logpdf(y, mu, sigma, 1.0, tau)

    def cdf(self, y, mu, sigma, nu=1.0, tau=math.inf):
        return super().cdf(y, mu, sigma, 1.0, tau)

    def sf(self, y, mu, sigma, nu=1.0, tau=math.inf):
        return super().sf(y, mu, sigma, 1.0, tau)

    def ppf(self, p, mu, sigma, nu=1.0, tau=math.inf):
        return super().ppf(p, mu, sigma, 1.0, tau)

    def score_mu(self, y, mu, sigma, nu=1.0, tau=math.inf):
        return super().score_mu(y, mu, sigma, 1.0, tau)

    def fisher_mu(self, sigma, nu=1.0, tau=math.inf) -> float:
        return super().fisher_mu(sigma, 1.0, tau)


class Normal(Family):
    name = "normal"
    shape_names = ("sigma",)

    def logpdf(self, y, mu, sigma, nu=1.0, tau=math.inf):
        _check(sigma, 1.0, math.inf)
        return stats.norm.logpdf(y, mu, sigma)

    def cdf(self, y, mu, sigma, nu=1.0, tau=math.inf):
        return special.ndtr((np.asarray(y, dtype=float) - mu) / sigma)

    def sf(self, y, mu, sigma, nu=1.0, tau=math.inf):
        return special.ndtr(-(np.asarray(y, dtype=float) - mu) / sigma)

    def ppf(self, p, mu, sigma, nu=1.0, tau=math.inf):
        return mu + sigma * special.ndtri(p)

    def score_mu(self, y, mu, sigma, nu=1.0, tau=math.inf):
        return (np.asarray(y, dtype=float) - mu) / (sigma * sigma)

    def fisher_mu(self, sigma, nu=1.0, tau=math.inf) -> float:
        return 1.0 / (sigma * sigma)


FAMILIES = {"normal": Normal(), "TF": TF(), "SST": SST()}


def get_family(name: str) -> Family:
    try:
        return FAMILIES[name]
    except KeyError:
        raise ValueError(f"unknown family {name!r}; choose from {sorted(FAMILIES)}") from None


def sst_logdensity(y, params: SstParams):
    return SST().logpdf(y, params.mu, params.sigma, params.nu, params.tau)


def tf_logdensity(y, mu, sigma, tau):
    return TF().logpdf(y, mu, sigma, 1.0, tau)
