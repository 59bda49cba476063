"""Exponentiated Weibull and frailty laws against independent numeric oracles."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from exhaz.distributions import (
    EwParams,
    GammaFrailtyParams,
    LogNormalFrailtyParams,
    ew_cdf,
    ew_cum_hazard,
    ew_hazard,
    ew_pdf,
    ew_quantile,
    ew_survival,
    gamma_frailty_pdf,
    gamma_laplace,
    sample_gamma_frailty,
    sample_lognormal_frailty,
)
from exhaz.errors import NonPositive

P_TABLE1 = EwParams(kappa=0.6, theta=1.75, alpha=2.5)


# ---------------------------------------------------------------------------
# EW density / CDF
# ---------------------------------------------------------------------------

def test_alpha_one_reduces_to_weibull():
    p = EwParams(kappa=1.3, theta=2.0, alpha=1.0)
    for t in (0.1, 0.5, 1.0, 3.7, 10.0):
        weib = (p.kappa / p.theta) * (t / p.theta) ** (p.kappa - 1) * math.exp(
            -((t / p.theta) ** p.kappa)
        )
        assert ew_pdf(t, p) == pytest.approx(weib, rel=1e-14)


def test_unit_exponential_at_one():
    p = EwParams(kappa=1.0, theta=1.0, alpha=1.0)
    assert ew_pdf(1.0, p) == pytest.approx(math.exp(-1.0), rel=1e-14)


def test_pdf_matches_cdf_derivative():
    # central finite difference of the CDF as the oracle
    t, h = 2.0, 1e-6
    fd = (ew_cdf(t + h, P_TABLE1) - ew_cdf(t - h, P_TABLE1)) / (2 * h)
    assert ew_pdf(t, P_TABLE1) == pytest.approx(fd, abs=1e-8)


def test_cdf_at_theta_and_zero():
    for p in (P_TABLE1, EwParams(2.0, 0.5, 0.7)):
        assert ew_cdf(p.theta, p) == pytest.approx((1 - math.exp(-1)) ** p.alpha, rel=1e-14)
        assert ew_cdf(0.0, p) == 0.0


def test_cdf_matches_integrated_pdf():
    val, err = quad(lambda s: float(ew_pdf(s, P_TABLE1)), 0, 5, limit=200)
    assert err < 1e-8
    got = ew_cdf(5.0, P_TABLE1)
    assert 0 < got < 1
    assert got == pytest.approx(val, abs=1e-8)


def test_pdf_integrates_to_one_over_random_params():
    rng = np.random.default_rng(101)
    for _ in range(8):
        p = EwParams(
            kappa=float(rng.uniform(0.3, 3.0)),
            theta=float(rng.uniform(0.5, 5.0)),
            alpha=float(rng.uniform(0.5, 5.0)),
        )
        val, _ = quad(lambda s: float(ew_pdf(s, p)), 0, np.inf, limit=400)
        assert val == pytest.approx(1.0, abs=1e-6)


def test_cdf_nondecreasing_and_finite():
    grid = np.linspace(0.0, 50.0, 400)
    for p in (P_TABLE1, EwParams(0.3, 0.5, 5.0), EwParams(3.0, 5.0, 0.5)):
        f = ew_cdf(grid, p)
        assert np.all(np.isfinite(f))
        assert np.all(np.diff(f) >= -1e-15)
        assert np.all((f >= 0) & (f <= 1))


# ---------------------------------------------------------------------------
# hazard / cumulative hazard
# ---------------------------------------------------------------------------

def test_exponential_constant_hazard():
    p = EwParams(kappa=1.0, theta=4.0, alpha=1.0)
    for t in (0.01, 1.0, 10.0, 100.0):
        assert ew_hazard(t, p) == pytest.approx(1 / 4.0, rel=1e-12)


def test_cum_hazard_zero_at_zero():
    assert ew_cum_hazard(0.0, P_TABLE1) == 0.0


def test_hazard_unimodal_for_table1_params():
    grid = np.linspace(0.01, 20.0, 2000)
    h = ew_hazard(grid, P_TABLE1)
    imax = int(np.argmax(h))
    assert 0 < imax < len(grid) - 1
    assert h[0] < h[imax] > h[-1]
    # rises before the mode, falls after
    assert np.all(np.diff(h[: imax + 1]) > 0)
    assert np.all(np.diff(h[imax:]) < 0)


def test_cum_hazard_matches_integrated_hazard():
    for t in (0.5, 2.0, 8.0):
        val, _ = quad(lambda s: float(ew_hazard(s, P_TABLE1)), 0, t, limit=300)
        assert ew_cum_hazard(t, P_TABLE1) == pytest.approx(val, abs=1e-8)


def test_log_survival_far_tail_stays_finite():
    # deep tail where 1-F underflows in naive arithmetic
    p = EwParams(kappa=2.0, theta=1.0, alpha=3.0)
    H = ew_cum_hazard(50.0, p)  # w = 2500
    assert math.isfinite(H)
    assert H == pytest.approx(2500.0 - math.log(3.0), rel=1e-12)


# ---------------------------------------------------------------------------
# quantile
# ---------------------------------------------------------------------------

def test_quantile_round_trip():
    for u in (0.01, 0.5, 0.99):
        t = ew_quantile(u, P_TABLE1)
        assert ew_cdf(t, P_TABLE1) == pytest.approx(u, abs=1e-12)


def test_quantile_at_theta_point():
    for p in (P_TABLE1, EwParams(1.4, 3.0, 0.8)):
        u = (1 - math.exp(-1)) ** p.alpha
        assert ew_quantile(u, p) == pytest.approx(p.theta, rel=1e-12)


def test_median_matches_bisection():
    lo, hi = 1e-9, 1e3
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if ew_cdf(mid, P_TABLE1) < 0.5:
            lo = mid
        else:
            hi = mid
    assert ew_quantile(0.5, P_TABLE1) == pytest.approx(0.5 * (lo + hi), abs=1e-10)


def test_quantile_cdf_identity_on_time_grid():
    for t in np.geomspace(0.01, 20, 50):
        u = float(ew_cdf(t, P_TABLE1))
        assert ew_quantile(u, P_TABLE1) == pytest.approx(t, rel=1e-10)


def test_quantile_rejects_bad_u():
    with pytest.raises(ValueError):
        ew_quantile(0.0, P_TABLE1)
    with pytest.raises(ValueError):
        ew_quantile(1.0, P_TABLE1)


def test_params_validated():
    with pytest.raises(NonPositive):
        EwParams(kappa=-1.0, theta=1.0, alpha=1.0)
    with pytest.raises(NonPositive):
        EwParams(kappa=1.0, theta=0.0, alpha=1.0)
    with pytest.raises(NonPositive):
        GammaFrailtyParams(mu=1.0, b=-0.1)
    with pytest.raises(NonPositive):
        LogNormalFrailtyParams(m=0.0, s=0.0)


# ---------------------------------------------------------------------------
# Gamma frailty
# ---------------------------------------------------------------------------

def test_gamma_pdf_shape_one_is_exponential():
    g = GammaFrailtyParams(mu=2.0, b=2.0)  # shape 1
    for r in (0.1, 1.0, 5.0):
        assert gamma_frailty_pdf(r, g) == pytest.approx(math.exp(-r / 2.0) / 2.0, rel=1e-12)


def test_gamma_pdf_integrates_to_mean():
    g = GammaFrailtyParams(mu=6.5, b=10.0)
    total, _ = quad(lambda r: float(gamma_frailty_pdf(r, g)), 0, np.inf, limit=400)
    mean, _ = quad(lambda r: r * float(gamma_frailty_pdf(r, g)), 0, np.inf, limit=400)
    assert total == pytest.approx(1.0, abs=1e-8)
    assert mean == pytest.approx(6.5, abs=1e-6)


def test_moderate_mismatch_concentrates_near_mean():
    g = GammaFrailtyParams(mu=1.2, b=0.02)
    sd = math.sqrt(g.mu * g.b)
    assert sd == pytest.approx(0.155, abs=0.001)
    mass, _ = quad(lambda r: float(gamma_frailty_pdf(r, g)), 1.2 - 3 * sd, 1.2 + 3 * sd)
    assert mass > 0.99


def test_laplace_at_zero_and_monotone():
    g = GammaFrailtyParams(mu=1.875, b=0.075)
    assert gamma_laplace(0.0, g) == 1.0
    s = np.linspace(0, 5, 100)
    vals = gamma_laplace(s, g)
    assert np.all(np.diff(vals) < 0)
    assert np.all((vals > 0) & (vals <= 1))


def test_laplace_matches_quadrature():
    g = GammaFrailtyParams(mu=6.5, b=10.0)
    val = quad(
        lambda r: math.exp(-0.3 * r) * float(gamma_frailty_pdf(r, g)), 0, 1, limit=400
    )[0] + quad(
        lambda r: math.exp(-0.3 * r) * float(gamma_frailty_pdf(r, g)), 1, np.inf, limit=400
    )[0]
    assert gamma_laplace(0.3, g) == pytest.approx(val, abs=1e-8)


def test_laplace_quadrature_grid():
    # all three frailty laws used in the recovery study
    for mu, b in [(1.2, 0.02), (1.875, 0.075), (6.5, 10.0)]:
        g = GammaFrailtyParams(mu=mu, b=b)
        for s in (0.0, 0.1, 0.7, 2.0, 5.0):
            val = quad(
                lambda r: math.exp(-s * r) * float(gamma_frailty_pdf(r, g)),
                0, 1, limit=400,
            )[0] + quad(
                lambda r: math.exp(-s * r) * float(gamma_frailty_pdf(r, g)),
                1, np.inf, limit=400,
            )[0]
            assert gamma_laplace(s, g) == pytest.approx(val, abs=1e-8)


def test_laplace_small_b_limit_is_exponential():
    g = GammaFrailtyParams(mu=1.2, b=1e-8)
    assert gamma_laplace(0.5, g) == pytest.approx(math.exp(-0.6), rel=1e-6)


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------

def test_gamma_sampler_moments_wide():
    rng = np.random.default_rng(42)
    draws = sample_gamma_frailty(GammaFrailtyParams(6.5, 10.0), rng, size=100_000)
    assert np.all(draws > 0)
    assert draws.mean() == pytest.approx(6.5, abs=0.2)
    assert draws.var() == pytest.approx(65.0, abs=5.0)


def test_gamma_sampler_moments_severe():
    rng = np.random.default_rng(43)
    draws = sample_gamma_frailty(GammaFrailtyParams(1.875, 0.075), rng, size=100_000)
    assert draws.mean() == pytest.approx(1.875, abs=0.01)


def test_lognormal_degenerate_limit():
    rng = np.random.default_rng(44)
    draws = sample_lognormal_frailty(LogNormalFrailtyParams(0.0, 1e-6), rng, size=1000)
    assert np.allclose(draws, 1.0, atol=1e-4)
