"""Model fitting, robust covariance, prediction and hazard turning points."""

from __future__ import annotations

import math
from dataclasses import replace
from typing import Mapping, Sequence

import numpy as np
from scipy import optimize

from ..distributions import Family, baseline_log_cumhaz_hazard
from ..pipeline import SpellSet
from ..special import EULER_GAMMA
from .cox import cox_terms
from .likelihood import (
    Design,
    _full_derivatives,
    build_design,
    frailty_marginal,
    log_cumhaz_hazard,
    obs_loglik,
    obs_scores,
)
from .model import (
    COX,
    FitResult,
    Frailty,
    Metric,
    ModelSpec,
    ParamLayout,
    ParamVector,
    SurvivalData,
    survival_data,
)
from .newton import SingularHessianError, newton_raphson

__all__ = [
    "fit",
    "fit_mle",
    "fit_cox",
    "parameter_link_fit",
    "robust_covariance",
    "initial_params",
    "predict",
    "acceleration_factor",
    "hazard_peak",
    "HazardPeakError",
    "PredictionError",
    "INITIAL_THETA",
]

INITIAL_THETA = 0.1


class PredictionError(ValueError):
    pass


class HazardPeakError(ValueError):
    pass


def _covariance(H: np.ndarray, iteration: int) -> np.ndarray:
    negH = -0.5 * (H + H.T)
    w = np.linalg.eigvalsh(negH)
    if not np.all(np.isfinite(w)) or w.min() <= 1e-12 * max(1.0, w.max()):
        raise SingularHessianError(iteration, "Hessian is not negative definite at the optimum")
    cov = np.linalg.inv(negH)
    return 0.5 * (cov + cov.T)


def _n_slopes(spec: ModelSpec) -> int:
    return len(spec.covariates)


def sandwich(bread: np.ndarray, scores: np.ndarray, n_covariates: int) -> np.ndarray:
    """``bread @ (S'S) @ bread`` scaled by ``n / (n - k - 1)``."""
    n = scores.shape[0]
    meat = scores.T @ scores
    adj = n / (n - n_covariates - 1) if n - n_covariates - 1 > 0 else float("nan")
    V = bread @ meat @ bread * adj
    return 0.5 * (V + V.T)


def robust_covariance(fit: FitResult, data: SpellSet | SurvivalData) -> np.ndarray:
    """Sandwich covariance with per-spell score contributions as the meat.

    Parameters whose model variance is undefined (a frailty variance on the
    zero boundary) are left out with NaN entries. The small-sample factor is ``n / (n - k - 1)`` with ``k`` the number of
    covariates (excluding the constant).
    """
    if not fit.converged:
        raise ValueError("robust covariance requires a converged fit")
    spec = fit.spec
    if spec.is_cox:
        sd = survival_data(data, spec.covariates)
        terms = cox_terms(sd.t, sd.d, sd.columns(spec.covariates), fit.x, spec.ties)
        scores = terms.score_resid
    else:
        scores = obs_scores(spec, data, fit.x)
    bread = fit.cov_model
    keep = np.flatnonzero(np.isfinite(np.diag(bread)))
    if keep.size == 0 or not np.all(np.isfinite(bread[np.ix_(keep, keep)])):
        raise np.linalg.LinAlgError("model covariance is singular; no sandwich available")
    V = np.full_like(bread, np.nan)
    V[np.ix_(keep, keep)] = sandwich(bread[np.ix_(keep, keep)], scores[:, keep], _n_slopes(spec))
    return V


def initial_params(spec: ModelSpec, data: SpellSet | SurvivalData) -> np.ndarray:
    """Starting values: zero slopes and a data-driven constant and ancillaries.

    Log-durations of completed spells give a location ``mu`` and spread
    ``s``. Log-normal uses ``ln sigma = ln s``; Weibull and generalized gamma
    use ``p = pi / (sqrt(6) s)``; gamma takes ``k`` from the duration
    moments. The PH constant is the exact zero-slope optimum.
    """
    lay = ParamLayout.from_spec(spec)
    x = np.zeros(lay.size)
    if spec.is_cox:
        return x
    sd = survival_data(data, spec.all_covariates())
    t, d = sd.t, sd.d
    te = t[d > 0] if (d > 0).sum() >= 2 else t
    lt = np.log(te)
    mu = float(lt.mean())
    s = max(float(lt.std(ddof=1)) if lt.size > 1 else 1.0, 0.05)
    fam = spec.family
    anc = {}
    if fam is Family.LOGNORMAL:
        anc["ln_sigma"] = math.log(s)
        aft_const = mu
    elif fam in (Family.WEIBULL, Family.GENERALIZED_GAMMA):
        p = min(max(math.pi / (math.sqrt(6.0) * s), 0.05), 20.0)
        anc["ln_p"] = math.log(p)
        anc["ln_k"] = 0.0
        aft_const = mu + EULER_GAMMA / p
    elif fam is Family.GAMMA:
        m1 = float(te.mean())
        v = float(te.var(ddof=1)) if te.size > 1 else m1 * m1
        k = min(max(m1 * m1 / v if v > 0 else 1.0, 0.05), 50.0)
        anc["ln_k"] = math.log(k)
        aft_const = math.log(m1 / k)
    else:
        aft_const = math.log(t.sum() / max(d.sum(), 1.0))
    for j, a in enumerate(fam.ancillary):
        x[lay.ancillary[j]] = anc[a]
    if spec.intercept:
        if spec.metric is Metric.AFT:
            x[0] = aft_const
        elif spec.metric is Metric.LINK:
            x[0] = -aft_const
        else:
            log_ch0, _ = baseline_log_cumhaz_hazard(fam, t, [np.full_like(t, anc[a]) for a in fam.ancillary])
            x[0] = math.log(max(d.sum(), 1.0) / float(np.sum(np.exp(log_ch0))))
    if lay.theta is not None:
        x[lay.theta] = math.log(INITIAL_THETA)
    return x


THETA_BOUNDARY = 1e-6


def _boundary_covariance(H: np.ndarray, layout: ParamLayout, x: np.ndarray, iteration: int) -> np.ndarray | None:
    """Covariance with the frailty variance on the zero boundary.

    ``ln theta`` gets an undefined (NaN) variance; the remaining block is
    inverted on its own. Returns ``None`` when not at the boundary.
    """
    if layout.theta is None or math.exp(x[layout.theta]) >= THETA_BOUNDARY:
        return None
    keep = [i for i in range(layout.size) if i != layout.theta]
    cov = np.full((layout.size, layout.size), np.nan)
    cov[np.ix_(keep, keep)] = _covariance(H[np.ix_(keep, keep)], iteration)
    return cov


def _finish(spec, res, n, n_events, layout, data) -> FitResult:
    cov = np.full((layout.size, layout.size), np.nan)
    message = res.message
    try:
        cov = _covariance(res.hess, res.iterations)
    except SingularHessianError:
        boundary = _boundary_covariance(res.hess, layout, res.x, res.iterations)
        if boundary is not None:
            cov = boundary
            message = f"{message}; frailty variance at the zero boundary"
        elif res.converged:
            raise
    fit = FitResult(
        spec=spec,
        params=ParamVector.from_array(res.x, layout),
        loglik=float(res.value),
        cov_model=cov,
        cov_robust=None,
        iterations=res.iterations,
        converged=res.converged,
        n=n,
        n_events=n_events,
        names=layout.names,
        grad_max=float(np.max(np.abs(res.grad), initial=0.0)),
        message=message,
    )
    if spec.robust and res.converged:
        fit = _with_robust(fit, robust_covariance(fit, data))
    return fit


def _with_robust(fit: FitResult, V: np.ndarray) -> FitResult:
    return replace(fit, cov_robust=V)


def fit_mle(spec: ModelSpec, data: SpellSet | SurvivalData, x0: Sequence[float] | None = None) -> FitResult:
    """Maximum-likelihood fit of a parametric AFT, PH or link-metric model.

    Frailty models start from the converged frailty-free fit with
    ``theta = 0.1``. Non-convergence is reported through ``converged`` and
    ``message``; a singular Hessian raises ``SingularHessianError``.
    """
    if spec.is_cox:
        raise ValueError("use fit_cox for the Cox model")
    sd = survival_data(data, spec.all_covariates())
    design = build_design(spec, sd)
    lay = design.layout
    if sd.n_events < lay.size:
        raise ValueError(f"{sd.n_events} events cannot identify {lay.size} parameters")
    if x0 is None:
        if spec.frailty is not Frailty.NONE:
            base = fit_mle(spec.with_(frailty=Frailty.NONE, robust=False), sd)
            x0 = np.append(base.x, math.log(INITIAL_THETA))
        else:
            x0 = initial_params(spec, sd)
    x0 = np.asarray(x0, dtype=float)

    def value(x):
        return float(obs_loglik(design, x).sum())

    def derivs(x):
        return _full_derivatives(design, x)

    res = newton_raphson(value, derivs, x0, tol=spec.tol, max_iter=spec.max_iter)
    return _finish(spec, res, len(sd), sd.n_events, lay, sd)


def parameter_link_fit(spec: ModelSpec, data: SpellSet | SurvivalData) -> FitResult:
    """Fit with log ancillary parameters linear in covariates.

    ``spec.linked`` names the ancillaries and their regressors; with an
    empty regressor list this is ``fit_mle``. Use ``Metric.LINK`` to put
    ``ln lambda = x'b`` on the scale parameter itself.
    """
    if spec.is_cox:
        raise ValueError("the Cox model has no ancillary parameters")
    return fit_mle(spec, data)


def fit_cox(data: SpellSet | SurvivalData, covariates: Sequence[str] | None = None, ties: str = "efron",
            spec: ModelSpec | None = None) -> FitResult:
    """Maximize the Cox partial likelihood by Newton-Raphson.

    No constant or ancillary parameters are estimated. Separation (a
    monotone likelihood) shows up as ``converged = False``.
    """
    if spec is None:
        kw = {} if covariates is None else {"covariates": tuple(covariates)}
        spec = ModelSpec(family=COX, metric=Metric.PL, ties=ties, **kw)
    sd = survival_data(data, spec.covariates)
    if sd.n_events < 1:
        raise ValueError("the Cox model needs at least one event")
    X = sd.columns(spec.covariates)
    lay = ParamLayout.from_spec(spec)

    def value(b):
        return cox_terms(sd.t, sd.d, X, b, spec.ties).loglik

    def derivs(b):
        ct = cox_terms(sd.t, sd.d, X, b, spec.ties)
        return ct.loglik, ct.score, -ct.info

    res = newton_raphson(value, derivs, np.zeros(X.shape[1]), tol=spec.tol, max_iter=spec.max_iter,
                         max_step=2.0)
    if res.converged and _diverging(res.x, X, value, res.value):
        res = replace(res, converged=False,
                      message="monotone likelihood: the partial likelihood keeps rising as coefficients grow")
    return _finish(spec, res, len(sd), sd.n_events, lay, sd)


def _diverging(b: np.ndarray, X: np.ndarray, value, f: float) -> bool:
    # A huge standardized effect whose loglik still rises when doubled is separation, not an optimum.
    if not np.any(np.abs(b) * X.std(axis=0) > 8.0):
        return False
    try:
        return value(2.0 * b) >= f
    except ArithmeticError:
        return False


def fit(spec: ModelSpec, data: SpellSet | SurvivalData) -> FitResult:
    """Dispatch to ``fit_cox`` or ``fit_mle``."""
    if spec.is_cox:
        return fit_cox(data, spec=spec)
    return fit_mle(spec, data)


def _covariate_vector(spec: ModelSpec, covariates) -> dict[str, float]:
    names = spec.all_covariates()
    if isinstance(covariates, Mapping):
        missing = [c for c in names if c not in covariates]
        if missing:
            raise KeyError(f"missing covariate values: {', '.join(missing)}")
        return {c: float(covariates[c]) for c in names}
    vals = np.atleast_1d(np.asarray(covariates, dtype=float))
    if vals.size != len(names):
        raise ValueError(f"expected {len(names)} covariate values ({', '.join(names)}), got {vals.size}")
    return dict(zip(names, vals.tolist()))


def _prediction_design(fit: FitResult, covariates, t: np.ndarray) -> Design:
    spec = fit.spec
    vals = _covariate_vector(spec, covariates)
    names = spec.all_covariates()
    X = np.tile([vals[c] for c in names], (len(t), 1)) if names else np.empty((len(t), 0))
    sd = SurvivalData(t, np.ones_like(t), X, names)
    return build_design(spec, sd)


def predict(fit: FitResult, covariates, t, kind: str = "survivor"):
    """Survivor, hazard or cumulative hazard at durations ``t`` for given covariates.

    With frailty the population (frailty-marginal) quantities are returned.
    ``covariates`` is a mapping by name or a vector ordered as
    ``fit.spec.all_covariates()``.
    """
    if fit.spec.is_cox:
        raise PredictionError("the Cox baseline hazard is unspecified; parametric prediction is unavailable")
    if kind not in ("survivor", "hazard", "cumhazard"):
        raise ValueError(f"kind must be survivor, hazard or cumhazard, got {kind!r}")
    scalar = np.ndim(t) == 0
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(tt <= 0):
        raise ValueError("prediction durations must be positive")
    design = _prediction_design(fit, covariates, tt)
    from .likelihood import core_values

    C = core_values(design, fit.x)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        log_ch, log_h = log_cumhaz_hazard(fit.spec, tt, C)
        ln_theta = C[:, -1] if fit.spec.frailty is not Frailty.NONE else None
        pop_cumhaz, pop_log_h = frailty_marginal(fit.spec.frailty, log_ch, log_h, ln_theta)
    out = {"survivor": np.exp(-pop_cumhaz), "hazard": np.exp(pop_log_h), "cumhazard": pop_cumhaz}[kind]
    return float(out[0]) if scalar else out


def acceleration_factor(fit: FitResult, covariates) -> float:
    """``exp(x'b)`` over the non-constant coefficients: the time multiplier in an AFT fit."""
    spec = fit.spec
    vals = _covariate_vector(spec, covariates)
    beta = fit.params.beta
    slopes = beta[1:] if spec.intercept and not spec.is_cox else beta
    return float(math.exp(sum(b * vals[c] for b, c in zip(slopes, spec.covariates))))


def hazard_peak(fit: FitResult, covariates, lower: float = 0.01, upper: float = 60.0,
                xtol: float = 1e-6) -> tuple[float, float]:
    """Duration and height of the hazard maximum on ``[lower, upper]``.

    A coarse log-spaced scan brackets the maximum, then golden-section
    search refines it. Hazards whose maximum sits on an endpoint (monotone
    or flat hazards) raise ``HazardPeakError``.
    """
    grid = np.geomspace(lower, upper, 2001)
    h = predict(fit, covariates, grid, "hazard")
    i = int(np.argmax(h))
    spread = np.ptp(h)
    if i == 0 or i == len(grid) - 1 or not spread > 1e-12 * max(1.0, abs(h[i])):
        raise HazardPeakError(
            f"{fit.spec.family_name} hazard has no interior maximum on [{lower}, {upper}]; "
            "the supremum is at the boundary"
        )
    neg = lambda s: -predict(fit, covariates, s, "hazard")
    res = optimize.minimize_scalar(neg, bracket=(grid[i - 1], grid[i], grid[i + 1]), method="golden",
                                   tol=xtol / grid[i + 1])
    t_star = float(res.x)
    return t_star, float(predict(fit, covariates, t_star, "hazard"))
