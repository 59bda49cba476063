"""Shared test helpers: quick synthetic cohorts with known truth."""

import numpy as np
import pytest

from exhaz.distributions import EwParams
from exhaz.gh_model import GhParams, inverse_excess_survival
from exhaz.likelihoods import PreparedCohort

TRUE_BASE = EwParams(kappa=0.6, theta=1.75, alpha=2.5)
TRUE_GH = GhParams(
    TRUE_BASE, beta1=np.array([0.1, 0.1, 0.1]), beta2=np.array([0.05, 0.2, 0.25])
)


def sim_cohort(n=1000, seed=0, gh=TRUE_GH, pop_rate=0.02, frailty=None, t_max=5.0):
    """Cohort from the additive decomposition with a constant background rate.

    The cached life-table quantities are exact (dhp = pop_rate * t), so the
    cohort is internally consistent for likelihood work without a table.
    ``frailty``: optional per-patient multipliers on the background hazard.
    """
    rng = np.random.default_rng(seed)
    X = np.column_stack(
        [rng.normal(0.0, 1.0, n), rng.integers(0, 2, n), rng.integers(0, 2, n)]
    ).astype(float)
    gamma = np.ones(n) if frailty is None else frailty(rng, n)
    te = inverse_excess_survival(rng.uniform(size=n), X, gh)
    tp = rng.exponential(1.0, size=n) / (pop_rate * gamma)
    tobs = np.minimum(np.minimum(te, tp), t_max)
    status = (np.minimum(te, tp) <= t_max).astype(np.int8)
    return PreparedCohort(
        tobs, status, X, np.full(n, pop_rate), pop_rate * tobs, ("x1", "x2", "x3")
    )


@pytest.fixture(scope="session")
def m1_cohort_1000():
    return sim_cohort(n=1000, seed=123)
