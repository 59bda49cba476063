"""Likelihood terms against hand computations, quadrature, and brute force."""

import math
from math import fsum

import numpy as np
import pytest
from scipy.integrate import quad

from exhaz.distributions import EwParams, GammaFrailtyParams, gamma_frailty_pdf
from exhaz.errors import NonFiniteLikelihood
from exhaz.gh_model import GhParams, excess_cum_hazard, excess_hazard
from exhaz.lifetable import LexisPosition, make_life_table
from exhaz.likelihoods import (
    ModelParams,
    PatientRecord,
    PreparedCohort,
    SingleGamma,
    loglik,
    loglik_and_grad,
    marginal_survival_m3,
    omega1,
    overall_hazard,
    prepare_cohort,
)

BASE = EwParams(0.6, 1.75, 2.5)
GH = GhParams(BASE, beta1=np.array([0.1, 0.1, 0.1]), beta2=np.array([0.05, 0.2, 0.25]))


def fake_cohort(n=50, seed=0, p=3):
    """Synthetic prepared cohort with plausible cached life-table values."""
    rng = np.random.default_rng(seed)
    time = rng.uniform(0.05, 5.0, n)
    status = (rng.uniform(size=n) < 0.7).astype(np.int8)
    X = np.column_stack(
        [rng.normal(0, 1, n), rng.integers(0, 2, n), rng.integers(0, 2, n)]
    )[:, :p]
    hp = rng.uniform(0.005, 0.08, n)
    dhp = hp * time * rng.uniform(0.8, 1.3, n)
    return PreparedCohort(time, status, X, hp, dhp)


# ---------------------------------------------------------------------------
# overall hazard and omega1
# ---------------------------------------------------------------------------

def test_m2_gamma_one_equals_m1():
    m1 = ModelParams(GH)
    m2 = ModelParams(GH, SingleGamma(1.0))
    x = np.array([0.5, 1.0, 0.0])
    for t, hp, dhp in [(0.5, 0.02, 0.01), (3.0, 0.05, 0.12)]:
        assert overall_hazard(t, x, m2, hp, dhp) == overall_hazard(t, x, m1, hp, dhp)


def test_m3_at_dhp_zero_is_mu_times_hp():
    m3 = ModelParams(GH, GammaFrailtyParams(6.5, 10.0))
    x = np.zeros(3)
    he = float(excess_hazard(1.0, x, GH))
    assert overall_hazard(1.0, x, m3, 0.02, 0.0) == pytest.approx(6.5 * 0.02 + he, rel=1e-12)


def test_m3_population_term_arithmetic():
    m3 = ModelParams(GH, GammaFrailtyParams(6.5, 10.0))
    x = np.zeros(3)
    he = float(excess_hazard(1.0, x, GH))
    got = overall_hazard(1.0, x, m3, 0.02, 0.1)
    assert got - he == pytest.approx(6.5 * 0.02 / 2.0, rel=1e-12)


def test_omega1_values():
    g = GammaFrailtyParams(6.5, 10.0)
    assert omega1(0.0, g) == 6.5
    assert omega1(0.1, g) == pytest.approx(3.25, rel=1e-14)
    tiny_b = GammaFrailtyParams(6.5, 1e-10)
    for dhp in (0.0, 1.0, 10.0):
        assert omega1(dhp, tiny_b) == pytest.approx(6.5, rel=1e-8)
    # strictly decreasing in dhp
    grid = np.linspace(0, 5, 50)
    vals = omega1(grid, g)
    assert np.all(np.diff(vals) < 0)


# ---------------------------------------------------------------------------
# marginal survival under M3
# ---------------------------------------------------------------------------

@pytest.fixture
def flat_table():
    return make_life_table(["sex"], (30, 100), (2005, 2020), lambda a, y, s: 0.03, [("0",)])


def rec(t=2.0, status=1, age=70.0, x=(0.2, 1.0, 0.0)):
    return PatientRecord(
        time=t, status=status, age_diag=age, year_diag=2010.0, x=np.array(x), z=("0",)
    )


def test_marginal_survival_one_at_zero(flat_table):
    m3 = ModelParams(GH, GammaFrailtyParams(1.875, 0.075))
    assert marginal_survival_m3(0.0, rec(), m3, flat_table) == pytest.approx(1.0)


def test_marginal_survival_matches_frailty_quadrature(flat_table):
    # integrate the conditional survival over the frailty law
    r0 = rec()
    for mu, b in [(1.2, 0.02), (1.875, 0.075), (6.5, 10.0)]:
        g = GammaFrailtyParams(mu, b)
        m3 = ModelParams(GH, g)
        for t in (0.5, 2.0, 4.5):
            dhp = 0.03 * t  # constant-rate table
            he = float(excess_cum_hazard(t, r0.x, GH))
            integrand = lambda r: math.exp(-r * dhp) * float(gamma_frailty_pdf(r, g))
            lap = quad(integrand, 0, 1, limit=400)[0] + quad(
                integrand, 1, np.inf, limit=400
            )[0]
            expected = math.exp(-he) * lap
            got = float(marginal_survival_m3(t, r0, m3, flat_table))
            assert got == pytest.approx(expected, abs=1e-8)


def test_marginal_survival_b_to_zero_limit(flat_table):
    # b -> 0 collapses to the single-parameter correction with gamma = mu
    r0 = rec()
    mu = 1.7
    m3 = ModelParams(GH, GammaFrailtyParams(mu, 1e-8))
    t = 3.0
    dhp = 0.03 * t
    he = float(excess_cum_hazard(t, r0.x, GH))
    expected = math.exp(-he - mu * dhp)
    assert float(marginal_survival_m3(t, r0, m3, flat_table)) == pytest.approx(
        expected, rel=1e-6
    )


# ---------------------------------------------------------------------------
# log-likelihood
# ---------------------------------------------------------------------------

def test_m2_at_gamma_one_equals_m1_minus_sum_dhp():
    cohort = fake_cohort(200, seed=3)
    l1 = loglik(ModelParams(GH), cohort)
    l2 = loglik(ModelParams(GH, SingleGamma(1.0)), cohort)
    assert l2 == pytest.approx(l1 - cohort.sum_dhp(), abs=1e-10)


def test_single_censored_patient_m3_hand_check():
    t, dhp, hp = 2.5, 0.08, 0.03
    mu, b = 1.875, 0.075
    x = np.array([0.4, 0.0, 1.0])
    cohort = PreparedCohort(
        np.array([t]), np.array([0], dtype=np.int8),
        x[None, :], np.array([hp]), np.array([dhp]),
    )
    he = float(excess_cum_hazard(t, x, GH))
    expected = -he - (mu / b) * math.log1p(b * dhp)
    got = loglik(ModelParams(GH, GammaFrailtyParams(mu, b)), cohort)
    assert got == pytest.approx(expected, rel=1e-12)


def test_loglik_matches_per_patient_brute_force():
    # independent route: log[h_o^delta * S_o] from the marginal formulas
    cohort = fake_cohort(50, seed=11)
    for params in (
        ModelParams(GH),
        ModelParams(GH, SingleGamma(1.7)),
        ModelParams(GH, GammaFrailtyParams(6.5, 10.0)),
    ):
        brute_terms = []
        for i in range(cohort.n):
            t = float(cohort.time[i])
            x = cohort.X[i]
            hp, dhp = float(cohort.hp[i]), float(cohort.dhp[i])
            he = float(excess_cum_hazard(t, x, GH))
            corr = params.correction
            if corr is None:
                log_s = -he  # population-survival constant omitted for M1
            elif isinstance(corr, SingleGamma):
                log_s = -he - corr.gamma * dhp
            else:
                log_s = -he - (corr.mu / corr.b) * math.log1p(corr.b * dhp)
            term = log_s
            if cohort.status[i] == 1:
                term += math.log(float(overall_hazard(t, x, params, hp, dhp)))
            brute_terms.append(term)
        assert loglik(params, cohort) == pytest.approx(fsum(brute_terms), abs=1e-9)


def test_delta_flip_changes_by_log_hazard():
    cohort = fake_cohort(30, seed=5)
    params = ModelParams(GH, GammaFrailtyParams(1.2, 0.02))
    base = loglik(params, cohort)
    i = 7
    status = cohort.status.copy()
    assert status[i] == 0 or status[7] == 1  # flip whatever it is
    flipped = status.copy()
    flipped[i] = 1 - flipped[i]
    cohort2 = PreparedCohort(cohort.time, flipped, cohort.X, cohort.hp, cohort.dhp)
    lam = float(
        overall_hazard(cohort.time[i], cohort.X[i], params, cohort.hp[i], cohort.dhp[i])
    )
    sign = 1.0 if flipped[i] == 1 else -1.0
    assert loglik(params, cohort2) - base == pytest.approx(sign * math.log(lam), abs=1e-10)


def test_m3_b_to_zero_approaches_m2():
    cohort = fake_cohort(150, seed=9)
    mu = 2.2
    l2 = loglik(ModelParams(GH, SingleGamma(mu)), cohort)
    for b in (1e-6, 1e-8):
        l3 = loglik(ModelParams(GH, GammaFrailtyParams(mu, b)), cohort)
        assert l3 == pytest.approx(l2, rel=1e-5)


def test_permutation_invariance_exact():
    cohort = fake_cohort(500, seed=13)
    params = ModelParams(GH, GammaFrailtyParams(6.5, 10.0))
    base = loglik(params, cohort)
    rng = np.random.default_rng(1)
    perm = rng.permutation(cohort.n)
    shuffled = PreparedCohort(
        cohort.time[perm], cohort.status[perm], cohort.X[perm],
        cohort.hp[perm], cohort.dhp[perm],
    )
    assert abs(loglik(params, shuffled) - base) <= 1e-12 * max(1.0, abs(base))


def test_nonfinite_likelihood_reports_index():
    # event with zero total hazard: hp = 0 and excess hazard underflows
    gh = GhParams(BASE, beta1=np.zeros(1), beta2=np.array([-800.0]))
    cohort = PreparedCohort(
        np.array([1.0, 2.0]),
        np.array([1, 1], dtype=np.int8),
        np.array([[0.0], [1.0]]),
        np.array([0.01, 0.0]),
        np.array([0.01, 0.0]),
    )
    with pytest.raises(NonFiniteLikelihood) as err:
        loglik(ModelParams(gh), cohort)
    assert err.value.patient_index == 1


def test_comparable_scale_identity():
    cohort = fake_cohort(80, seed=21)
    l1c = loglik(ModelParams(GH), cohort, comparable=True)
    l2c = loglik(ModelParams(GH, SingleGamma(1.0)), cohort, comparable=True)
    assert l2c == l1c  # bitwise: identical code path at gamma = 1


# ---------------------------------------------------------------------------
# analytic gradient against central finite differences
# ---------------------------------------------------------------------------

def params_from_vector(vec, model, p=3):
    gh = GhParams(
        EwParams(vec[0], vec[1], vec[2]),
        beta1=np.array(vec[3 : 3 + p]),
        beta2=np.array(vec[3 + p : 3 + 2 * p]),
    )
    if model == "M1":
        return ModelParams(gh)
    if model == "M2":
        return ModelParams(gh, SingleGamma(vec[3 + 2 * p]))
    return ModelParams(gh, GammaFrailtyParams(vec[3 + 2 * p], vec[4 + 2 * p]))


def fd_gradient(vec, model, cohort, h=1e-6):
    grad = np.empty(len(vec))
    for j in range(len(vec)):
        hj = h * max(1.0, abs(vec[j]))
        up, dn = vec.copy(), vec.copy()
        up[j] += hj
        dn[j] -= hj
        lu = loglik(params_from_vector(up, model), cohort)
        ld = loglik(params_from_vector(dn, model), cohort)
        grad[j] = (lu - ld) / (2 * hj)
    return grad


@pytest.mark.parametrize("model,extra", [("M1", []), ("M2", [1.4]), ("M3", [2.0, 0.8])])
def test_analytic_gradient_matches_fd(model, extra):
    cohort = fake_cohort(120, seed=31)
    rng = np.random.default_rng(17)
    for _ in range(4):
        vec = np.array(
            [
                rng.uniform(0.4, 1.6),
                rng.uniform(0.8, 3.0),
                rng.uniform(0.6, 3.0),
                *rng.normal(0, 0.2, 6),
                *extra,
            ]
        )
        params = params_from_vector(vec, model)
        ll, grad = loglik_and_grad(params, cohort)
        assert ll == pytest.approx(loglik(params, cohort), abs=1e-10)
        fd = fd_gradient(vec, model, cohort)
        scale = np.maximum(1.0, np.abs(fd))
        assert np.max(np.abs(grad - fd) / scale) < 1e-5


def test_fd_gradient_richardson_self_consistency():
    # the optimization surface is smooth: h=1e-4 and h=1e-5 agree
    cohort = fake_cohort(120, seed=37)
    vec = np.array([0.7, 1.5, 2.0, 0.05, 0.1, -0.1, 0.1, 0.2, 0.15, 2.5, 1.0])
    g4 = fd_gradient(vec, "M3", cohort, h=1e-4)
    g5 = fd_gradient(vec, "M3", cohort, h=1e-5)
    scale = np.maximum(1.0, np.abs(g4))
    assert np.max(np.abs(g4 - g5) / scale) < 1e-4


def test_prepare_cohort_caches_match_table(flat_table):
    records = [rec(t=1.2, age=64.3), rec(t=4.0, status=0, age=75.0)]
    cohort = prepare_cohort(records, flat_table)
    assert cohort.n == 2
    # constant-rate table: dhp = 0.03 * t, hp = 0.03 everywhere
    assert cohort.dhp[0] == pytest.approx(0.03 * 1.2, rel=1e-12)
    assert cohort.dhp[1] == pytest.approx(0.03 * 4.0, rel=1e-12)
    assert np.allclose(cohort.hp, 0.03)
    assert cohort.n_events == 1
