"""Model comparison and hypothesis tests on fitted models."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .estimation.cox import cox_terms
from .estimation.model import Frailty, FitResult, ModelSpec, survival_data
from .pipeline import SpellSet
from .stattests import TestResult, chi2_pvalue

__all__ = [
    "TestResult",
    "InconsistentFitsError",
    "information_criteria",
    "lr_test",
    "wald_test",
    "ph_assumption_test",
    "ph_components",
    "ssr_goodness",
    "is_nested",
]


class InconsistentFitsError(ValueError):
    pass


def information_criteria(fit: FitResult) -> tuple[float, float]:
    """``(AIC, BIC)`` with every estimated parameter counted.

    For the Cox model these use the partial likelihood and are not
    comparable with parametric fits.
    """
    return fit.aic, fit.bic


_FAMILY_RESTRICTIONS = {
    ("exponential", "weibull"),
    ("exponential", "gamma"),
    ("exponential", "gengamma"),
    ("weibull", "gengamma"),
    ("gamma", "gengamma"),
}
# Families closed under both metrics: AFT, PH and link fits are reparameterizations.
_METRIC_FREE = {"exponential", "weibull"}


def is_nested(nested: ModelSpec, full: ModelSpec) -> bool:
    """Whether ``nested`` is a parameter restriction of ``full``.

    Recognized restrictions: dropping covariates or links, removing frailty
    (theta on the boundary), and the family chains exponential < Weibull <
    generalized gamma and exponential < gamma < generalized gamma.
    """
    if nested.is_cox or full.is_cox:
        return (
            nested.is_cox
            and full.is_cox
            and set(nested.covariates) <= set(full.covariates)
            and nested.ties == full.ties
        )
    fn, ff = nested.family.value, full.family.value
    if fn != ff and (fn, ff) not in _FAMILY_RESTRICTIONS:
        return False
    if nested.metric != full.metric:
        if not ({fn, ff} <= _METRIC_FREE and not nested.linked and not full.linked):
            return False
    if not set(nested.covariates) <= set(full.covariates):
        return False
    if nested.intercept and not full.intercept:
        return False
    if any(not set(cs) <= set(full.link_covariates(a)) for a, cs in nested.linked):
        return False
    return nested.frailty is Frailty.NONE or nested.frailty == full.frailty


def lr_test(nested: FitResult, full: FitResult, df: int | None = None) -> TestResult:
    """Likelihood-ratio test ``-2 (lnL0 - lnL1)`` against chi-square(df).

    ``df`` defaults to the difference in parameter counts. Non-nested
    pairs are refused.
    """
    if not (nested.converged and full.converged):
        raise ValueError("both fits must have converged")
    if not is_nested(nested.spec, full.spec):
        raise ValueError(
            f"{nested.spec.family_name} ({nested.spec.metric.value}) is not nested in "
            f"{full.spec.family_name} ({full.spec.metric.value}); likelihood-ratio and Wald tests "
            "cannot compare non-nested models"
        )
    if nested.n != full.n:
        raise ValueError("the two fits use different samples")
    diff = full.loglik - nested.loglik
    if diff < -1e-6:
        raise InconsistentFitsError(
            f"restricted fit has the larger log-likelihood ({nested.loglik:.6f} > {full.loglik:.6f})"
        )
    if df is None:
        df = full.n_params - nested.n_params
    if df < 1:
        raise ValueError(f"degrees of freedom must be positive, got {df}")
    stat = max(0.0, 2.0 * diff)
    return TestResult("likelihood_ratio", stat, int(df), chi2_pvalue(stat, df))


def wald_test(fit: FitResult, restriction: Sequence[int | str], robust: bool | None = None) -> TestResult:
    """Joint Wald test that the selected coefficients are zero.

    Uses the robust covariance when the fit carries one (or when
    ``robust=True``; then it must exist).
    """
    idx = [fit.names.index(r) if isinstance(r, str) else int(r) for r in restriction]
    if not idx:
        raise ValueError("empty restriction set")
    if robust is None:
        V = fit.cov
    elif robust:
        if fit.cov_robust is None:
            raise ValueError("fit has no robust covariance")
        V = fit.cov_robust
    else:
        V = fit.cov_model
    b = fit.x[idx]
    Vr = V[np.ix_(idx, idx)]
    if not np.all(np.isfinite(Vr)):
        raise np.linalg.LinAlgError("restricted covariance is not finite")
    try:
        stat = float(b @ np.linalg.solve(Vr, b))
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("restricted covariance is singular") from exc
    if np.linalg.cond(Vr) > 1e14:
        raise np.linalg.LinAlgError("restricted covariance is singular")
    return TestResult("wald", stat, len(idx), chi2_pvalue(stat, len(idx)))


def _time_transform(t: np.ndarray, transform: str) -> np.ndarray:
    if transform == "identity":
        return t
    if transform == "log":
        return np.log(t)
    if transform == "rank":
        return rankdata(t)
    raise ValueError(f"unknown time transform {transform!r}")


def ph_components(cox_fit: FitResult, data: SpellSet, transform: str = "identity"):
    """Global and per-covariate proportional-hazards statistics.

    Returns ``(global TestResult, list of per-covariate TestResult)`` from
    the score test of a linear time trend in the scaled Schoenfeld
    residuals.
    """
    spec = cox_fit.spec
    if not spec.is_cox:
        raise ValueError("the proportional-hazards test needs a Cox fit")
    if not cox_fit.converged:
        raise ValueError("the proportional-hazards test needs a converged fit")
    sd = survival_data(data, spec.covariates)
    p = len(spec.covariates)
    n_dead = sd.n_events
    if n_dead <= p:
        raise ValueError(f"{n_dead} events are too few for a test on {p} covariates")
    terms = cox_terms(sd.t, sd.d, sd.columns(spec.covariates), cox_fit.x, spec.ties)
    g = _time_transform(sd.t[terms.death_index], transform)
    gc = g - g.mean()
    ss = float(gc @ gc)
    if ss <= 0:
        raise ValueError("all events occur at one time; no time trend can be tested")
    V = cox_fit.cov_model
    U = gc @ terms.schoenfeld
    stat = float(n_dead * U @ V @ U / ss)
    VU = V @ U
    per = []
    for j, nm in enumerate(spec.covariates):
        s = float(n_dead * VU[j] ** 2 / (V[j, j] * ss))
        per.append(TestResult(f"ph_{nm}", s, 1, chi2_pvalue(s, 1)))
    return TestResult("ph_global", stat, p, chi2_pvalue(stat, p)), per


def ph_assumption_test(cox_fit: FitResult, data: SpellSet, transform: str = "identity") -> TestResult:
    """Global chi-square(number of covariates) test of proportional hazards."""
    return ph_components(cox_fit, data, transform)[0]


def ssr_goodness(fit: FitResult, data: SpellSet) -> float:
    """Sum of squared martingale-like residuals ``d - r`` (``r`` the Cox-Snell residual)."""
    from .diagnostics import residuals

    m = residuals(fit, data, "martingale").values
    return float(m @ m)
