import math

import numpy as np
import pytest
from scipy import integrate, special, stats

from tacklepep.gamlss.diagnostics import (outside_band_fraction, plotting_positions,
                                          residuals_from, wormplot_data)
from tacklepep.gamlss.families import (SST, TF, DomainError, Normal, SstParams, get_family,
                                       sst_logdensity, tf_logdensity)

SETTINGS = [(0.5, 1.0, 5.0), (1.0, 2.0, 3.5), (1.5, 0.7, 10.0), (5.0, 1.3, math.inf)]


def test_sst_at_nu_one_is_tf():
    y = np.linspace(-15, 15, 1000)
    for tau in (2.5, 4.0, 30.0):
        a = sst_logdensity(y, SstParams(0.3, 1.7, 1.0, tau))
        b = tf_logdensity(y, 0.3, 1.7, tau)
        assert np.max(np.abs(a - b)) < 1e-12


def test_tf_matches_scaled_student_t():
    y = np.linspace(-6, 6, 101)
    tau, sd = 5.0, 2.0
    scale = sd * math.sqrt((tau - 2) / tau)
    np.testing.assert_allclose(TF().logpdf(y, 1.0, sd, tau=tau),
                               stats.t.logpdf(y, tau, 1.0, scale), atol=1e-12)


def test_large_tau_approaches_normal():
    y = np.linspace(-5, 5, 201)
    d = TF().logpdf(y, 0.0, 1.0, tau=1e6) - Normal().logpdf(y, 0.0, 1.0)
    assert np.max(np.abs(d)) < 1e-3


@pytest.mark.parametrize("nu,sigma,tau", SETTINGS)
def test_density_integrates_to_one(nu, sigma, tau):
    f = lambda y: math.exp(SST().logpdf(y, 0.0, sigma, nu, tau))
    # split at the mode region to help the quadrature
    total = sum(integrate.quad(f, a, b, limit=400, epsabs=1e-12, epsrel=1e-12)[0]
                for a, b in ((-np.inf, -5 * sigma), (-5 * sigma, 5 * sigma), (5 * sigma, np.inf)))
    assert abs(total - 1.0) < 1e-6


@pytest.mark.parametrize("nu,sigma,tau", SETTINGS)
def test_mean_and_sd_are_the_parameters(nu, sigma, tau):
    mu = 0.4
    f = lambda y, k: (y ** k) * math.exp(SST().logpdf(y, mu, sigma, nu, tau))
    parts = ((-np.inf, mu - 5 * sigma), (mu - 5 * sigma, mu + 5 * sigma), (mu + 5 * sigma, np.inf))
    m1 = sum(integrate.quad(f, a, b, args=(1,), limit=400)[0] for a, b in parts)
    m2 = sum(integrate.quad(f, a, b, args=(2,), limit=400)[0] for a, b in parts)
    assert m1 == pytest.approx(mu, abs=1e-5)
    assert math.sqrt(m2 - m1 * m1) == pytest.approx(sigma, rel=1e-4)


@pytest.mark.parametrize("nu,sigma,tau", SETTINGS)
def test_cdf_sf_ppf_consistent(nu, sigma, tau):
    fam = SST()
    y = np.linspace(-4, 4, 41)
    F, S = fam.cdf(y, 0.2, sigma, nu, tau), fam.sf(y, 0.2, sigma, nu, tau)
    np.testing.assert_allclose(F + S, 1.0, atol=1e-13)
    assert np.all(np.diff(F) >= 0)
    p = np.linspace(0.01, 0.99, 25)
    np.testing.assert_allclose(fam.cdf(fam.ppf(p, 0.2, sigma, nu, tau), 0.2, sigma, nu, tau), p,
                               atol=1e-10)
    # numeric derivative of the cdf is the density
    h = 1e-5
    dens = (fam.cdf(y + h, 0.2, sigma, nu, tau) - fam.cdf(y - h, 0.2, sigma, nu, tau)) / (2 * h)
    np.testing.assert_allclose(dens, np.exp(fam.logpdf(y, 0.2, sigma, nu, tau)), atol=1e-6)


@pytest.mark.parametrize("name", ["normal", "TF", "SST"])
def test_score_matches_finite_difference(name):
    fam = get_family(name)
    y = np.array([-3.0, -0.4, 0.1, 2.5])
    mu, sigma, nu, tau = 0.2, 1.4, 1.6, 6.0
    h = 1e-6
    fd = (fam.logpdf(y, mu + h, sigma, nu, tau) - fam.logpdf(y, mu - h, sigma, nu, tau)) / (2 * h)
    np.testing.assert_allclose(fam.score_mu(y, mu, sigma, nu, tau), fd, rtol=1e-6, atol=1e-8)


@pytest.mark.parametrize("name", ["normal", "TF", "SST"])
def test_fisher_information_is_score_variance(name):
    fam = get_family(name)
    mu, sigma, nu, tau = 0.0, 1.2, 0.8, 7.0
    info = integrate.quad(lambda y: fam.score_mu(y, mu, sigma, nu, tau) ** 2
                          * math.exp(fam.logpdf(y, mu, sigma, nu, tau)), -60, 60, limit=400,
                          points=[0.0])[0]
    assert fam.fisher_mu(sigma, nu, tau) == pytest.approx(info, rel=1e-5)


def test_domain_errors():
    with pytest.raises(DomainError):
        SST().logpdf(0.0, 0.0, -1.0, 1.0, 5.0)
    with pytest.raises(DomainError):
        SST().logpdf(0.0, 0.0, 1.0, 0.0, 5.0)
    with pytest.raises(DomainError):
        SST().logpdf(0.0, 0.0, 1.0, 1.0, 2.0)
    with pytest.raises(ValueError):
        get_family("gamma")


def test_rvs_reproducible_and_moments():
    a = SST().rvs(20000, 1.0, 2.0, 1.5, 8.0, rng=3)
    b = SST().rvs(20000, 1.0, 2.0, 1.5, 8.0, rng=3)
    assert a.tobytes() == b.tobytes()
    assert a.mean() == pytest.approx(1.0, abs=0.05)
    assert a.std() == pytest.approx(2.0, rel=0.05)


# -- residuals and wormplots -------------------------------------------------

def test_residual_at_median_is_zero():
    fam = SST()
    med = fam.ppf(0.5, 0.3, 1.1, 1.7, 6.0)
    assert residuals_from(fam, np.array([med]), 0.3, 1.1, 1.7, 6.0)[0] == pytest.approx(0, abs=1e-12)


def test_normal_residual_is_standardized_value():
    r = residuals_from(Normal(), np.array([2.0 + 3.0]), 2.0, 3.0)
    assert r[0] == pytest.approx(1.0, abs=1e-12)


def test_far_tail_keeps_precision():
    r = residuals_from(Normal(), np.array([7.5, -7.5]), 0.0, 1.0)
    np.testing.assert_allclose(r, [7.5, -7.5], atol=1e-8)


def test_extreme_residuals_clamped():
    r = residuals_from(Normal(), np.array([50.0]), 0.0, 1.0)
    assert r[0] == 8.0


def test_wormplot_of_exact_quantiles_is_flat():
    n = 500
    r = special.ndtri(plotting_positions(n))[::-1]
    w = wormplot_data(r)
    assert np.max(np.abs(w["deviation"])) < 1e-10
    assert outside_band_fraction(w) == 0.0


def test_heavy_tails_leave_the_band():
    r = stats.t.rvs(3, size=2000, random_state=np.random.default_rng(0))
    w = wormplot_data(r)
    tails = w[np.abs(w["theoretical_q"]) > 2.5]
    outside = (tails["deviation"] < tails["band_lo"]) | (tails["deviation"] > tails["band_hi"])
    assert outside.any()
    assert outside_band_fraction(w) > 0.0


def test_wormplot_single_point():
    w = wormplot_data([0.3])
    assert len(w) == 1
    assert w["theoretical_q"].iloc[0] == pytest.approx(0.0)
    assert np.isfinite(w["band_hi"].iloc[0])
    assert wormplot_data([]).empty


def test_plotting_positions_formula():
    np.testing.assert_allclose(plotting_positions(3), (np.arange(1, 4) - 0.375) / 3.25)
    np.testing.assert_allclose(plotting_positions(20), (np.arange(1, 21) - 0.5) / 20)
