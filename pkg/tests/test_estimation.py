import json
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize, stats
from statsmodels.duration.hazard_regression import PHReg

from hazardlab.estimation import (
    COX,
    FitResult,
    Frailty,
    HazardPeakError,
    Metric,
    ModelSpec,
    NonFiniteLikelihood,
    ParamLayout,
    ParamVector,
    PredictionError,
    SingularHessianError,
    SurvivalData,
    acceleration_factor,
    fit,
    fit_cox,
    fit_mle,
    hazard_peak,
    loglik,
    parameter_link_fit,
    predict,
    robust_covariance,
    sandwich,
    score_hessian,
)
from hazardlab.estimation.cox import cox_terms
from hazardlab.estimation.newton import newton_raphson
from hazardlab.simulate import simulate_survival

COVS = ("recession", "price_decline", "interest_rate")


def sim(family="weibull", metric="aft", beta=(0.4, 0.3, -0.2), anc=(math.log(1.4),), n=400, seed=1, **kw):
    return simulate_survival(family, metric, list(beta), list(anc), n=n, seed=seed, **kw)


def spec_for(data, family, metric="aft", frailty="none", **kw):
    return ModelSpec(family=family, metric=metric, frailty=frailty, covariates=data.names, **kw)


def with_params(res: FitResult, x) -> FitResult:
    return replace(res, params=ParamVector.from_array(np.asarray(x, dtype=float), res.layout))


def fd_gradient(f, x, rel=1e-3):
    g = np.empty_like(x)
    for i in range(len(x)):
        h = rel * max(1.0, abs(x[i]))
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (-f(x + 2 * e) + 8 * f(x + e) - 8 * f(x - e) + f(x - 2 * e)) / (12 * h)
    return g


class TestSpec:
    def test_lognormal_ph_rejected(self):
        with pytest.raises(ValueError):
            ModelSpec(family="lognormal", metric="ph")

    def test_cox_constraints(self):
        with pytest.raises(ValueError):
            ModelSpec(family=COX, metric=Metric.AFT)
        with pytest.raises(ValueError):
            ModelSpec(family=COX, metric=Metric.PL, frailty=Frailty.GAMMA)
        with pytest.raises(ValueError):
            ModelSpec(family="weibull", metric=Metric.PL)

    def test_link_must_name_ancillary(self):
        with pytest.raises(ValueError):
            ModelSpec(family="weibull", metric="aft", linked=(("ln_sigma", ("recession",)),))

    def test_round_trip(self):
        s = ModelSpec(family="weibull", metric="ph", frailty="invgauss", linked=(("ln_p", ("recession",)),))
        assert ModelSpec.from_dict(json.loads(json.dumps(s.to_dict()))) == s

    def test_layout_names(self):
        lay = ParamLayout.from_spec(ModelSpec(family="gengamma", metric="aft", frailty="gamma",
                                              linked=(("ln_k", ("recession",)),)))
        assert lay.names == ("_cons", *COVS, "ln_p", "ln_k", "ln_k:recession", "ln_theta")


class TestLoglik:
    def test_unit_spell(self):
        sd = SurvivalData([1.0], [1.0], np.empty((1, 0)), ())
        spec = ModelSpec(family="exponential", metric="ph", covariates=())
        assert loglik(spec, sd, [0.0]) == -1.0

    def test_exponential_closed_form(self, rng):
        n = 200
        X = rng.normal(size=(n, 2))
        t = rng.exponential(size=n) + 0.01
        d = (rng.random(n) < 0.7).astype(float)
        sd = SurvivalData(t, d, X, ("a", "b"))
        spec = ModelSpec(family="exponential", metric="ph", covariates=("a", "b"))
        b = np.array([0.2, -0.4, 0.3])
        xb = b[0] + X @ b[1:]
        closed = float(np.sum(d * xb) - np.sum(t * np.exp(xb)))
        assert loglik(spec, sd, b) == pytest.approx(closed, abs=1e-12 * abs(closed))

    def test_dimension_checked(self):
        sd = sim()
        with pytest.raises(ValueError, match="expects"):
            loglik(spec_for(sd, "weibull"), sd, [0.0, 0.0])

    def test_nonfinite_names_spell(self):
        sd = SurvivalData([1.0, 2.0, 1e300], [1.0, 1.0, 1.0], np.empty((3, 0)), ())
        spec = ModelSpec(family="weibull", metric="ph", covariates=())
        with pytest.raises(NonFiniteLikelihood) as info:
            loglik(spec, sd, [0.0, math.log(5.0)])
        assert info.value.index == 2

    def test_param_vector_input(self):
        sd = sim()
        spec = spec_for(sd, "weibull")
        x = np.array([0.3, 0.2, -0.1, 0.2])
        pv = ParamVector.from_array(x, ParamLayout.from_spec(spec))
        assert loglik(spec, sd, pv) == loglik(spec, sd, x)


class TestDerivatives:
    def test_exponential_ph_analytic(self, rng):
        n = 150
        X = rng.normal(size=(n, 2))
        t = rng.exponential(size=n) + 0.05
        d = (rng.random(n) < 0.8).astype(float)
        sd = SurvivalData(t, d, X, ("a", "b"))
        spec = ModelSpec(family="exponential", metric="ph", covariates=("a", "b"))
        b = np.array([0.1, 0.3, -0.2])
        Z = np.column_stack([np.ones(n), X])
        w = t * np.exp(Z @ b)
        g, H = score_hessian(spec, sd, b)
        assert np.allclose(g, Z.T @ (d - w), rtol=1e-13, atol=1e-12)
        assert np.allclose(H, -(Z * w[:, None]).T @ Z, rtol=1e-13, atol=1e-12)

    CASES = [
        ("exponential", "aft", "none", ()),
        ("exponential", "ph", "gamma", ()),
        ("weibull", "aft", "none", ()),
        ("weibull", "ph", "gamma", ()),
        ("weibull", "aft", "invgauss", ()),
        ("weibull", "link", "none", (("ln_p", ("x1",)),)),
        ("gamma", "aft", "none", ()),
        ("gengamma", "aft", "none", ()),
        ("gengamma", "ph", "gamma", ()),
        ("lognormal", "aft", "none", ()),
        ("lognormal", "aft", "gamma", (("ln_sigma", ("x2",)),)),
        ("lognormal", "aft", "invgauss", ()),
    ]

    @pytest.mark.parametrize("family,metric,frailty,linked", CASES)
    def test_gradient_matches_finite_differences(self, family, metric, frailty, linked):
        sd = sim(n=300, censor_rate=0.2)
        spec = ModelSpec(family=family, metric=metric, frailty=frailty, covariates=sd.names, linked=linked)
        rng = np.random.default_rng(5)
        x = 0.3 * rng.standard_normal(ParamLayout.from_spec(spec).size)
        if frailty != "none":
            x[-1] = math.log(0.4)
        g, H = score_hessian(spec, sd, x)
        f = lambda v: loglik(spec, sd, v)
        g_fd = fd_gradient(f, x)
        assert np.max(np.abs(g - g_fd)) <= 1e-5 * max(1.0, np.max(np.abs(g_fd)))
        assert np.allclose(H, H.T)


class TestExponential:
    def test_closed_form_mle(self):
        sd = sim("exponential", anc=(), beta=(0.7, 0, 0), censor_rate=0.3, n=500)
        sd0 = SurvivalData(sd.t, sd.d, np.empty((len(sd), 0)), ())
        for metric, sign in (("aft", -1.0), ("ph", 1.0)):
            res = fit_mle(ModelSpec(family="exponential", metric=metric, covariates=(), tol=1e-12), sd0)
            lam = sd0.d.sum() / sd0.t.sum()
            assert math.exp(sign * res.x[0]) == pytest.approx(lam, rel=1e-10)

    def test_aft_ph_reparameterization(self):
        sd = sim("exponential", anc=(), censor_rate=0.2)
        aft = fit(spec_for(sd, "exponential", "aft", tol=1e-10), sd)
        ph = fit(spec_for(sd, "exponential", "ph", tol=1e-10), sd)
        assert aft.loglik == pytest.approx(ph.loglik, abs=1e-10)
        assert np.allclose(ph.x, -aft.x, atol=1e-9)
        grid = np.linspace(0.1, 10, 50)
        x = {"x1": 1.0, "x2": -0.3}
        assert np.allclose(predict(aft, x, grid, "hazard"), predict(ph, x, grid, "hazard"), rtol=1e-10)

    def test_link_equals_ph(self):
        sd = sim("exponential", anc=(), censor_rate=0.2)
        ph = fit(spec_for(sd, "exponential", "ph"), sd)
        link = parameter_link_fit(spec_for(sd, "exponential", "link"), sd)
        assert link.loglik == pytest.approx(ph.loglik, abs=1e-8)


class TestWeibullClosure:
    def test_aft_ph_relation(self, synthetic_spells):
        aft = fit(ModelSpec(family="weibull", metric="aft", tol=1e-10), synthetic_spells)
        ph = fit(ModelSpec(family="weibull", metric="ph", tol=1e-10), synthetic_spells)
        p = math.exp(aft.params.ancillary[0])
        assert ph.loglik == pytest.approx(aft.loglik, abs=1e-8)
        assert np.allclose(ph.params.beta, -p * aft.params.beta, atol=1e-6)
        assert ph.params.ancillary[0] == pytest.approx(aft.params.ancillary[0], abs=1e-8)


class TestFrailty:
    @pytest.mark.parametrize("family", ["lognormal", "weibull", "exponential"])
    @pytest.mark.parametrize("frailty", ["gamma", "invgauss"])
    def test_theta_to_zero_continuity(self, synthetic_spells, family, frailty):
        base = fit(ModelSpec(family=family, metric="aft"), synthetic_spells)
        spec = ModelSpec(family=family, metric="aft", frailty=frailty)
        ll = loglik(spec, synthetic_spells, np.append(base.x, math.log(1e-8)))
        assert ll == pytest.approx(base.loglik, abs=1e-4)

    def test_boundary_fit_reports_nan_variance(self, synthetic_spells):
        res = fit(ModelSpec(family="exponential", metric="aft", frailty="gamma"), synthetic_spells)
        assert res.converged
        assert math.exp(res.params.ln_theta) < 1e-6
        assert math.isnan(res.se_model[-1])
        assert np.all(np.isfinite(res.se_model[:-1]))
        assert "boundary" in res.message

    def test_gamma_frailty_recovery(self):
        sd = sim("weibull", n=3000, frailty="gamma", theta=0.6, seed=11)
        res = fit(spec_for(sd, "weibull", frailty="gamma"), sd)
        assert res.converged
        assert abs(math.exp(res.params.ln_theta) - 0.6) < 3 * 0.6 * res.se_model[-1]


class TestFitInvariants:
    @pytest.mark.parametrize("family,metric", [("lognormal", "aft"), ("weibull", "aft"), ("weibull", "ph"),
                                               ("exponential", "aft"), ("gamma", "aft")])
    def test_converged_optimum(self, synthetic_spells, family, metric):
        res = fit(ModelSpec(family=family, metric=metric, robust=True), synthetic_spells)
        assert res.converged and res.grad_max <= res.spec.tol
        _, H = score_hessian(res.spec, synthetic_spells, res.x)
        assert np.linalg.eigvalsh(H).max() < 0
        for V in (res.cov_model, res.cov_robust):
            assert np.allclose(V, V.T, atol=1e-8)
            assert np.linalg.eigvalsh(V).min() >= -1e-8

    def test_gengamma_on_gengamma_data(self):
        sd = sim("gengamma", anc=(math.log(1.3), math.log(2.0)), n=3000, censor_rate=0.1, seed=4)
        res = fit(spec_for(sd, "gengamma"), sd)
        assert res.converged
        truth = np.array([0.4, 0.3, -0.2, math.log(1.3), math.log(2.0)])
        assert np.all(np.abs(res.x - truth) <= 4 * res.se_model)

    def test_gengamma_drifts_to_lognormal_limit(self, synthetic_spells):
        # The log-normal is the k -> infinity limit; with no interior optimum the fit must say so.
        ln = fit(ModelSpec(family="lognormal", metric="aft"), synthetic_spells)
        gg = fit(ModelSpec(family="gengamma", metric="aft"), synthetic_spells)
        assert not gg.converged
        assert gg.params.ancillary[1] > 3
        assert ln.loglik - 3 < gg.loglik <= ln.loglik + 1e-6

    def test_aic_bic_and_json(self, synthetic_spells):
        res = fit(ModelSpec(family="lognormal", metric="aft", robust=True), synthetic_spells)
        assert res.aic == -2 * res.loglik + 2 * res.n_params
        assert res.bic == -2 * res.loglik + math.log(res.n) * res.n_params
        d = json.loads(res.to_json())
        assert d["aic"] == -2 * d["loglik"] + 2 * res.n_params
        assert {"spec", "coefficients", "ancillary", "ln_theta", "loglik", "aic", "bic", "n", "n_events",
                "iterations", "converged"} <= set(d)
        assert set(d["coefficients"][0]) == {"name", "estimate", "se_model", "se_robust", "z", "p"}
        back = FitResult.from_dict(d)
        assert back.aic == res.aic
        assert np.array_equal(back.x, res.x)

    def test_too_few_events(self):
        sd = SurvivalData([1.0, 2.0, 3.0], [1.0, 0.0, 0.0], [[0.0], [1.0], [0.5]], ("a",))
        with pytest.raises(ValueError, match="cannot identify"):
            fit(ModelSpec(family="weibull", metric="aft", covariates=("a",)), sd)

    def test_collinear_covariates_singular(self):
        sd = sim(n=300)
        X = np.column_stack([sd.X, sd.X[:, 0]])
        sd2 = SurvivalData(sd.t, sd.d, X, ("x1", "x2", "x3"))
        with pytest.raises(SingularHessianError, match="iteration"):
            fit(ModelSpec(family="weibull", metric="aft", covariates=("x1", "x2", "x3")), sd2)

    def test_non_convergence_reported(self):
        sd = sim(n=300)
        res = fit(spec_for(sd, "weibull", max_iter=1), sd)
        assert not res.converged
        assert "maximum" in res.message


class TestNewton:
    def test_quadratic_one_step(self):
        A = np.array([[2.0, 0.5], [0.5, 1.0]])
        b = np.array([1.0, -2.0])
        f = lambda x: -0.5 * x @ A @ x + b @ x
        res = newton_raphson(f, lambda x: (f(x), b - A @ x, -A), [0.0, 0.0], tol=1e-12)
        assert res.converged and res.iterations == 1
        assert np.allclose(res.x, np.linalg.solve(A, b))

    def test_step_halving(self):
        f = lambda x: -float(np.log(np.cosh(x[0] - 3.0)))
        d = lambda x: (f(x), np.array([-np.tanh(x[0] - 3.0)]), np.array([[-1.0 / np.cosh(x[0] - 3.0) ** 2]]))
        res = newton_raphson(f, d, [0.0], tol=1e-10)
        assert res.converged and res.x[0] == pytest.approx(3.0, abs=1e-9)

    def test_nonfinite_hessian(self):
        f = lambda x: 0.0
        d = lambda x: (0.0, np.array([1.0]), np.array([[np.nan]]))
        with pytest.raises(SingularHessianError, match="iteration 0"):
            newton_raphson(f, d, [0.0])


class TestCox:
    @pytest.mark.parametrize("ties", ["efron", "breslow"])
    def test_statsmodels_oracle(self, synthetic_spells, ties):
        res = fit_cox(synthetic_spells, COVS, ties=ties)
        t, d = synthetic_spells.durations, synthetic_spells.events
        X = synthetic_spells.covariate_matrix(COVS)
        ref = PHReg(t, X, status=d, ties=ties).fit()
        assert np.allclose(res.x, ref.params, rtol=1e-7, atol=1e-9)
        assert np.allclose(res.se_model, ref.bse, rtol=1e-6)
        assert res.loglik == pytest.approx(ref.llf, abs=1e-8)

    def test_identical_covariates(self):
        sd = SurvivalData([1, 2, 2, 3, 5], [1, 1, 0, 1, 1], np.ones((5, 1)), ("a",))
        terms = cox_terms(sd.t, sd.d, sd.X, np.array([0.0]), "efron")
        assert np.allclose(terms.score, 0.0)
        with pytest.raises(SingularHessianError):
            fit_cox(sd, ("a",))

    def test_scalar_bisection_oracle(self):
        t = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
        d = np.array([1, 1, 1, 0, 1, 1], dtype=float)
        x = np.array([1.0, 0.0, 1.0, 1.0, 0.0, 0.0])

        def score(b):
            s = 0.0
            for i in np.flatnonzero(d):
                risk = t >= t[i]
                w = np.exp(b * x[risk])
                s += x[i] - np.sum(w * x[risk]) / np.sum(w)
            return s

        root = optimize.bisect(score, -20, 20, xtol=1e-14)
        res = fit_cox(SurvivalData(t, d, x[:, None], ("a",)), ("a",), spec=None)
        assert res.x[0] == pytest.approx(root, abs=1e-8)

    def test_two_spell_monotone_likelihood(self):
        sd = SurvivalData([1.0, 2.0], [1.0, 1.0], [[1.0], [0.0]], ("a",))
        res = fit_cox(sd, ("a",))
        assert not res.converged
        assert "monotone" in res.message
        assert res.x[0] > 8

    def test_residual_sums(self, synthetic_spells):
        X = synthetic_spells.covariate_matrix(COVS)
        t, d = synthetic_spells.durations, synthetic_spells.events
        for ties in ("efron", "breslow"):
            b = np.array([-0.2, 0.05, 0.01])
            ct = cox_terms(t, d, X, b, ties)
            assert np.allclose(ct.score_resid.sum(axis=0), ct.score, atol=1e-10)
            assert np.allclose(ct.schoenfeld.sum(axis=0), ct.score, atol=1e-10)

    def test_breslow_residuals_match_statsmodels(self, synthetic_spells):
        res = fit_cox(synthetic_spells, COVS, ties="breslow")
        t, d = synthetic_spells.durations, synthetic_spells.events
        X = synthetic_spells.covariate_matrix(COVS)
        ref = PHReg(t, X, status=d, ties="breslow").fit()
        ct = cox_terms(t, d, X, res.x, "breslow")
        assert np.allclose(ct.score_resid, ref.score_residuals, atol=1e-9)

    def test_predict_refused(self, synthetic_spells):
        res = fit_cox(synthetic_spells, COVS)
        with pytest.raises(PredictionError):
            predict(res, [0, 0, 0], 1.0)


class TestRobust:
    def test_single_score_row_is_rank_one(self, rng):
        B = np.array([[2.0, 0.3], [0.3, 1.0]])
        S = np.zeros((10, 2))
        S[0] = rng.normal(size=2)
        V = sandwich(B, S, 2)
        assert np.linalg.matrix_rank(V, tol=1e-12) == 1
        assert np.allclose(V, np.outer(B @ S[0], B @ S[0]) * 10 / 7, rtol=1e-14, atol=0)

    def test_triple_product(self, rng):
        B = np.linalg.inv(np.cov(rng.normal(size=(3, 50))))
        S = rng.normal(size=(40, 3))
        expect = B @ sum(np.outer(s, s) for s in S) @ B * 40 / (40 - 2 - 1)
        assert np.allclose(sandwich(B, S, 2), expect, rtol=1e-13)

    def test_requires_convergence(self, synthetic_spells):
        res = fit(ModelSpec(family="weibull", metric="aft", max_iter=1), synthetic_spells)
        with pytest.raises(ValueError):
            robust_covariance(res, synthetic_spells)

    def test_cox_robust_uses_score_residuals(self, synthetic_spells):
        res = fit(ModelSpec(family=COX, metric="pl", robust=True, ties="breslow"), synthetic_spells)
        t, d = synthetic_spells.durations, synthetic_spells.events
        X = synthetic_spells.covariate_matrix(COVS)
        S = PHReg(t, X, status=d, ties="breslow").fit().score_residuals
        n = len(t)
        expect = res.cov_model @ S.T @ S @ res.cov_model * n / (n - 3 - 1)
        assert np.allclose(res.cov_robust, expect, rtol=1e-8)


@pytest.fixture(scope="module")
def fits(synthetic_spells):
    return {
        "ln": fit(ModelSpec(family="lognormal", metric="aft"), synthetic_spells),
        "wph": fit(ModelSpec(family="weibull", metric="ph"), synthetic_spells),
        "lnf": fit(ModelSpec(family="lognormal", metric="aft", frailty="gamma"), synthetic_spells),
    }


class TestPredict:

    def test_zero_covariates_baseline(self, fits):
        f = fits["ln"]
        grid = np.linspace(0.2, 10, 30)
        mu, sigma = f.params.beta[0], math.exp(f.params.ancillary[0])
        s = predict(f, [0, 0, 0], grid, "survivor")
        assert np.array_equal(s, predict(f, {"recession": 0, "price_decline": 0, "interest_rate": 0}, grid))
        assert np.allclose(s, stats.lognorm.sf(grid, sigma, scale=math.exp(mu)), rtol=1e-12)

    def test_ph_power_rule(self, fits):
        f = fits["wph"]
        b = f.params.beta
        x = {"recession": math.log(2.0) / b[1], "price_decline": 0.0, "interest_rate": 0.0}
        grid = np.linspace(0.2, 10, 30)
        s0 = predict(f, [0, 0, 0], grid)
        assert np.allclose(predict(f, x, grid), s0**2, rtol=1e-12)

    @pytest.mark.parametrize("key", ["ln", "wph", "lnf"])
    def test_survivor_monotone_and_cumhaz(self, fits, key):
        grid = np.geomspace(0.05, 40, 200)
        x = [0.3, 2.6, 4.6]
        s = predict(fits[key], x, grid)
        assert np.all(np.diff(s) <= 0)
        assert np.allclose(s, np.exp(-predict(fits[key], x, grid, "cumhazard")), rtol=1e-10, atol=0)

    def test_hazard_is_derivative_of_cumhaz(self, fits):
        f = fits["lnf"]
        x = [1, 3, 5]
        h = 1e-5
        num = (predict(f, x, 2.0 + h, "cumhazard") - predict(f, x, 2.0 - h, "cumhazard")) / (2 * h)
        assert predict(f, x, 2.0, "hazard") == pytest.approx(num, rel=1e-7)

    def test_acceleration_factor(self, fits):
        f = fits["ln"]
        x = {"recession": 0.3, "price_decline": 2.6, "interest_rate": 4.6}
        assert acceleration_factor(f, x) == pytest.approx(math.exp(np.dot(f.params.beta[1:], list(x.values()))))

    def test_bad_kind_and_time(self, fits):
        with pytest.raises(ValueError):
            predict(fits["ln"], [0, 0, 0], 1.0, "density")
        with pytest.raises(ValueError):
            predict(fits["ln"], [0, 0, 0], 0.0)


class TestHazardPeak:
    def test_standard_lognormal_grid_oracle(self):
        sd = sim("lognormal", beta=(0.0,), anc=(0.0,), n=200, X=np.empty((200, 0)), names=())
        base = fit(ModelSpec(family="lognormal", metric="aft", covariates=()), sd)
        f = with_params(base, [0.0, 0.0])
        grid = np.linspace(0.01, 60, 1_000_000)
        h = stats.lognorm.pdf(grid, 1.0) / stats.lognorm.sf(grid, 1.0)
        t_star, h_star = hazard_peak(f, [])
        assert t_star == pytest.approx(grid[np.argmax(h)], abs=1e-3)
        assert h_star == pytest.approx(h.max(), rel=1e-9)

    def test_exponential_has_no_peak(self, synthetic_spells):
        f = fit(ModelSpec(family="exponential", metric="aft"), synthetic_spells)
        with pytest.raises(HazardPeakError):
            hazard_peak(f, [0, 2, 4])

    @settings(max_examples=25, deadline=None)
    @given(st.floats(-1.0, 2.0), st.floats(math.log(0.3), math.log(1.5)))
    def test_peak_is_maximum(self, mu, ln_sigma):
        sd = sim("lognormal", beta=(0.0,), anc=(0.0,), n=50, X=np.empty((50, 0)), names=())
        base = fit(ModelSpec(family="lognormal", metric="aft", covariates=()), sd)
        f = with_params(base, [mu, ln_sigma])
        t_star, h_star = hazard_peak(f, [])
        grid = np.geomspace(0.01, 60, 20001)
        assert h_star >= predict(f, [], grid, "hazard").max() - 1e-9


class TestLinkFits:
    def test_intercept_only_link_reduces(self):
        sd = sim(n=400)
        plain = fit(spec_for(sd, "weibull"), sd)
        linked = parameter_link_fit(spec_for(sd, "weibull", linked=(("ln_p", ()),)), sd)
        assert linked.loglik == pytest.approx(plain.loglik, abs=1e-10)

    def test_heteroskedastic_weibull_recovery(self):
        n = 3000
        rng = np.random.default_rng(8)
        X = np.column_stack([rng.random(n) < 0.5, rng.standard_normal(n)]).astype(float)
        ln_p = 0.2 + 0.5 * X[:, 0]
        sd = simulate_survival("weibull", "aft", [0.4, 0.3, -0.2], [ln_p], n=n, X=X, seed=9)
        res = parameter_link_fit(spec_for(sd, "weibull", linked=(("ln_p", ("x1",)),)), sd)
        i = res.names.index("ln_p:x1")
        assert abs(res.x[i] - 0.5) <= 3 * res.se_model[i]
