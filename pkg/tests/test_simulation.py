import math

import numpy as np
import pytest

from hazardlab.estimation import ModelSpec, fit
from hazardlab.simulate import default_seed, simulate_survival

TRUTH = np.array([0.5, 0.3, -0.2, math.log(1.4)])


def weibull_fit(n, seed, robust=False):
    sd = simulate_survival("weibull", "aft", TRUTH[:3], TRUTH[3:], n=n, seed=seed, censor_rate=0.1)
    return fit(ModelSpec(family="weibull", covariates=sd.names, robust=robust), sd)


def test_weibull_aft_recovery_within_three_se():
    hits = np.zeros(4)
    for rep in range(200):
        f = weibull_fit(2000, 100 + rep)
        assert f.converged
        hits += np.abs(f.x - TRUTH) <= 3 * f.se_model
    assert np.all(hits / 200 >= 0.95), hits


def test_robust_and_model_se_agree_under_true_model():
    ratios = []
    for rep in range(100):
        f = weibull_fit(5000, 900 + rep, robust=True)
        ratios.append(f.se_robust / f.se_model)
    med = np.median(np.array(ratios), axis=0)
    assert np.all((med >= 0.85) & (med <= 1.15)), med


@pytest.mark.parametrize("family,metric,anc", [("lognormal", "aft", [-0.4]), ("exponential", "ph", []),
                                               ("gengamma", "aft", [0.2, 0.5])])
def test_other_families_recover(family, metric, anc):
    beta = [0.4, 0.3, -0.2]
    sd = simulate_survival(family, metric, beta, anc, n=4000, seed=31)
    f = fit(ModelSpec(family=family, metric=metric, covariates=sd.names), sd)
    assert np.all(np.abs(f.x - np.array(beta + anc)) <= 4 * f.se_model)


def test_frailty_data_inflate_naive_fit():
    sd = simulate_survival("weibull", "ph", [0.0, 0.5, -0.3], [math.log(1.5)], n=4000, frailty="gamma",
                           theta=1.0, seed=12)
    naive = fit(ModelSpec(family="weibull", metric="ph", covariates=sd.names), sd)
    frail = fit(ModelSpec(family="weibull", metric="ph", frailty="gamma", covariates=sd.names), sd)
    assert frail.loglik > naive.loglik + 10
    # neglected frailty attenuates covariate effects towards zero
    assert abs(naive.x[1]) < abs(frail.x[1])
    assert abs(frail.x[1] - 0.5) <= 4 * frail.se_model[1]


def test_seed_from_environment(monkeypatch):
    monkeypatch.setenv("HAZARDLAB_SEED", "99")
    assert default_seed() == 99
    a = simulate_survival("weibull", "aft", [0.1, 0.2, 0.3], [0.0], n=20)
    b = simulate_survival("weibull", "aft", [0.1, 0.2, 0.3], [0.0], n=20, seed=99)
    assert np.array_equal(a.t, b.t)
