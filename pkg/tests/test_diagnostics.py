import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats
from statsmodels.stats.diagnostic import acorr_breusch_godfrey, het_breuschpagan
from statsmodels.regression.linear_model import OLS

from hazardlab.diagnostics import (
    ResidualSet,
    bg_serial_test,
    bpg_hetero_test,
    cox_snell,
    linear_predictor,
    qq_csv,
    qq_points,
    residual_summary,
    residuals,
    residuals_csv,
)
from hazardlab.pipeline import parse_month
from hazardlab.estimation import ModelSpec, ParamVector, SurvivalData, fit, fit_cox
from hazardlab.simulate import simulate_survival
from hazardlab.special import std_normal_quantile

COVS = ("recession", "price_decline", "interest_rate")


def exp_fit_at(sd, log_rate):
    """Exponential PH fit on ``sd`` with its constant forced to ``log_rate``."""
    base = fit(ModelSpec(family="exponential", metric="ph", covariates=()),
               SurvivalData(np.full(4, 1.0), np.ones(4), np.empty((4, 0)), ()))
    return replace(base, params=ParamVector(beta=[log_rate]))


class TestResiduals:
    def test_unit_cox_snell(self):
        sd = SurvivalData([2.0, 1.0], [1.0, 0.0], np.empty((2, 0)), ())
        f = exp_fit_at(sd, math.log(0.5))
        r = residuals(f, sd, "cox_snell").values
        m = residuals(f, sd, "martingale").values
        dev = residuals(f, sd, "deviance").values
        assert r == pytest.approx([1.0, 0.5], abs=1e-15)
        assert m == pytest.approx([0.0, -0.5], abs=1e-15)
        assert dev == pytest.approx([0.0, -1.0], abs=1e-7)

    def test_deviance_error_names_spell(self):
        sd = SurvivalData([1.0, 1e-300, 3.0], [1.0, 1.0, 1.0], np.empty((3, 0)), ())
        f = exp_fit_at(sd, -60.0)
        with pytest.raises(ValueError, match="spell 1"):
            residuals(f, sd, "deviance")

    def test_unknown_kind(self, synthetic_spells):
        f = fit(ModelSpec(family="weibull"), synthetic_spells)
        with pytest.raises(ValueError):
            residuals(f, synthetic_spells, "pearson")

    @pytest.mark.parametrize("family,frailty", [("lognormal", "none"), ("lognormal", "gamma"),
                                                ("weibull", "invgauss"), ("cox", "none")])
    def test_martingale_identity_bitwise(self, synthetic_spells, family, frailty):
        spec = ModelSpec(family=family, metric="pl" if family == "cox" else "aft", frailty=frailty)
        f = fit(spec, synthetic_spells)
        r = residuals(f, synthetic_spells, "cox_snell").values
        m = residuals(f, synthetic_spells, "martingale").values
        assert np.array_equal(m, synthetic_spells.events - r)

    def test_all_events_mean_identity(self):
        sd = simulate_survival("weibull", "aft", [0.3, 0.2, -0.1], [0.3], n=500, seed=2)
        f = fit(ModelSpec(family="weibull", covariates=sd.names), sd)
        r = residuals(f, sd, "cox_snell").values
        m = residuals(f, sd, "martingale").values
        assert m.mean() == pytest.approx(1.0 - r.mean(), abs=1e-13)

    @pytest.mark.parametrize("family,anc", [("weibull", [0.4]), ("lognormal", [-0.3]), ("gamma", [0.5])])
    def test_true_model_unit_exponential(self, family, anc):
        sd = simulate_survival(family, "aft", [0.3, 0.2, -0.1], anc, n=2000, seed=8)
        f = fit(ModelSpec(family=family, covariates=sd.names), sd)
        r = cox_snell(f, sd)
        assert 0.9 <= r.mean() <= 1.1
        assert stats.kstest(r, "expon").pvalue > 0.001

    def test_parametric_cox_snell_by_hand(self, synthetic_spells):
        f = fit(ModelSpec(family="weibull", metric="ph"), synthetic_spells)
        sd = synthetic_spells
        eta = linear_predictor(f, sd)
        p = math.exp(f.params.ancillary[0])
        assert np.allclose(cox_snell(f, sd), np.exp(eta) * sd.durations**p, rtol=1e-12)

    def test_cox_snell_for_cox_uses_breslow_baseline(self, synthetic_spells):
        f = fit_cox(synthetic_spells, COVS, ties="breslow")
        X = synthetic_spells.covariate_matrix(COVS)
        t, d = synthetic_spells.durations, synthetic_spells.events
        w = np.exp((X - X.mean(axis=0)) @ f.x)
        H = np.array([sum(d[t == u].sum() / w[t >= u].sum() for u in np.unique(t[d == 1]) if u <= ti)
                      for ti in t])
        assert np.allclose(cox_snell(f, synthetic_spells), H * w, rtol=1e-10)

    def test_deviance_tamer_than_martingale(self, synthetic_spells):
        f = fit(ModelSpec(family="lognormal"), synthetic_spells)
        m = residual_summary(residuals(f, synthetic_spells, "martingale"))
        dv = residual_summary(residuals(f, synthetic_spells, "deviance"))
        assert abs(dv.skewness) < abs(m.skewness)
        assert abs(dv.kurtosis - 3) < abs(m.kurtosis - 3)


class TestSummary:
    def test_against_scipy(self, rng):
        x = rng.gamma(2.0, size=300)
        s = residual_summary(x)
        assert s.skewness == pytest.approx(stats.skew(x), rel=1e-12)
        assert s.kurtosis == pytest.approx(stats.kurtosis(x, fisher=False), rel=1e-12)
        assert s.sd == pytest.approx(x.std(ddof=1), rel=1e-12)
        assert s.jarque_bera.statistic == pytest.approx(stats.jarque_bera(x).statistic, rel=1e-12)
        assert s.sum_sq_dev == pytest.approx(((x - x.mean()) ** 2).sum(), rel=1e-12)

    def test_constant(self):
        s = residual_summary(np.full(10, 0.3))
        assert math.isnan(s.skewness) and math.isnan(s.kurtosis)
        assert s.jarque_bera is None
        assert s.to_dict()["jarque_bera"] is None

    def test_too_short(self):
        with pytest.raises(ValueError):
            residual_summary(np.arange(7.0))

    def test_jarque_bera_size(self):
        rng = np.random.default_rng(20260601)
        keep = sum(residual_summary(rng.standard_normal(100_000)).jarque_bera.p_value > 0.05 for _ in range(100))
        assert keep >= 95


def ar1(n, phi, rng):
    e = rng.standard_normal(n)
    out = np.empty(n)
    out[0] = e[0]
    for i in range(1, n):
        out[i] = phi * out[i - 1] + e[i]
    return out


class TestBreuschGodfrey:
    def test_matches_statsmodels(self, rng):
        n = 200
        Z = rng.normal(size=(n, 2))
        y = 1 + Z @ [0.5, -0.3] + ar1(n, 0.3, rng)
        res = OLS(y, np.column_stack([np.ones(n), Z])).fit()
        lm, lmp, _, _ = acorr_breusch_godfrey(res, nlags=2)
        mine = bg_serial_test(res.resid, 2, Z)
        assert mine.statistic == pytest.approx(lm, rel=1e-9)
        assert mine.p_value == pytest.approx(lmp, rel=1e-8)

    def test_size(self):
        rng = np.random.default_rng(77)
        rej = sum(bg_serial_test(rng.standard_normal(500), 2).p_value < 0.05 for _ in range(400))
        assert abs(rej / 400 - 0.05) <= 0.025

    def test_power(self, rng):
        assert bg_serial_test(ar1(500, 0.6, rng), 2).p_value < 0.01

    def test_orders_by_spell_start(self, rng):
        e = ar1(300, 0.6, rng)
        perm = rng.permutation(300)
        rs = ResidualSet("deviance", e[perm], start=perm)
        assert bg_serial_test(rs, 2).statistic == pytest.approx(bg_serial_test(e, 2).statistic, rel=1e-12)

    def test_errors(self, rng):
        with pytest.raises(ValueError):
            bg_serial_test(rng.standard_normal(3), 2)
        with pytest.raises(np.linalg.LinAlgError):
            bg_serial_test(rng.standard_normal(50), 2, np.ones((50, 1)))


class TestBreuschPaganGodfrey:
    def test_matches_statsmodels(self, rng):
        n = 300
        z = rng.normal(size=n)
        e = rng.normal(size=n) * np.exp(0.3 * z)
        lm, lmp, _, _ = het_breuschpagan(e, np.column_stack([np.ones(n), z]))
        mine_lm, scaled = bpg_hetero_test(e, z)
        assert mine_lm.statistic == pytest.approx(lm, rel=1e-9)
        assert mine_lm.p_value == pytest.approx(lmp, rel=1e-8)
        lm_r, _, _, _ = het_breuschpagan(e, np.column_stack([np.ones(n), z]), robust=False)
        assert scaled.statistic == pytest.approx(lm_r, rel=1e-9)

    def test_size(self):
        rng = np.random.default_rng(78)
        rej = 0
        for _ in range(400):
            z = rng.normal(size=300)
            rej += bpg_hetero_test(rng.standard_normal(300), z)[0].p_value < 0.05
        assert abs(rej / 400 - 0.05) <= 0.025

    def test_power(self, rng):
        z = rng.uniform(1, 5, 500)
        e = rng.standard_normal(500) * np.sqrt(z)
        assert bpg_hetero_test(e, z)[0].p_value < 0.01

    def test_rank_deficient(self, rng):
        with pytest.raises(np.linalg.LinAlgError):
            bpg_hetero_test(rng.standard_normal(50), np.ones(50))


class TestQQ:
    def test_identity_on_normal_quantiles(self):
        n = 57
        q = std_normal_quantile((np.arange(1, n + 1) - 0.5) / n)
        theo, emp = qq_points(q[::-1].copy())
        assert np.allclose(theo, emp, atol=1e-6)

    def test_right_skew_upper_tail(self, rng):
        x = rng.lognormal(0, 1, 1000)
        x = (x - x.mean()) / x.std()
        theo, emp = qq_points(x)
        assert np.all(emp[-20:] > theo[-20:])
        assert np.all(emp[:20] > theo[:20])

    def test_too_short(self):
        with pytest.raises(ValueError):
            qq_points([1.0])


class TestCsv:
    def test_residuals_csv(self):
        rs = ResidualSet("martingale", [0.5, -0.25], start=np.array([parse_month("1873-01"), parse_month("1873-07")]))
        assert residuals_csv([rs], 6).splitlines() == ["spell_start,kind,value", "1873-01,martingale,0.5",
                                                       "1873-07,martingale,-0.25"]

    def test_qq_csv(self):
        lines = qq_csv(np.array([1.0, -1.0]), 4).splitlines()
        assert lines[0] == "theoretical,empirical"
        assert lines[1] == "-0.6745,-1"
