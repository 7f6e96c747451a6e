"""Residuals of fitted duration models and residual-based specification tests."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .estimation.cox import cox_terms
from .estimation.likelihood import build_design, core_values, frailty_marginal, log_cumhaz_hazard
from .estimation.model import FitResult, Frailty, SurvivalData, survival_data
from .pipeline import SpellSet, format_month
from .special import std_normal_quantile
from .stattests import TestResult, chi2_pvalue, ols

__all__ = [
    "KINDS",
    "ResidualSet",
    "ResidualSummary",
    "cox_snell",
    "residuals",
    "linear_predictor",
    "residual_summary",
    "bg_serial_test",
    "bpg_hetero_test",
    "qq_points",
    "residuals_csv",
    "qq_csv",
]

KINDS = ("cox_snell", "martingale", "deviance")


@dataclass(frozen=True)
class ResidualSet:
    """Residuals aligned with the spell order; ``start`` holds spell start months when known."""

    kind: str
    values: np.ndarray
    start: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown residual kind {self.kind!r}")
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    def __len__(self) -> int:
        return len(self.values)

    def ordered(self) -> np.ndarray:
        """Values sorted by spell start (stable), the order serial-correlation tests use."""
        if self.start is None:
            return self.values
        return self.values[np.argsort(self.start, kind="stable")]


def cox_snell(fit: FitResult, data: SpellSet | SurvivalData) -> np.ndarray:
    """Fitted cumulative hazard at each observed duration (frailty-marginal)."""
    spec = fit.spec
    if spec.is_cox:
        sd = survival_data(data, spec.covariates)
        return cox_terms(sd.t, sd.d, sd.columns(spec.covariates), fit.x, spec.ties).cox_snell
    design = build_design(spec, data)
    C = core_values(design, fit.x)
    log_ch, log_h = log_cumhaz_hazard(spec, design.t, C)
    ln_theta = C[:, -1] if spec.frailty is not Frailty.NONE else None
    return frailty_marginal(spec.frailty, log_ch, log_h, ln_theta)[0]


def residuals(fit: FitResult, data: SpellSet | SurvivalData, kind: str = "cox_snell") -> ResidualSet:
    """Cox-Snell ``r``, martingale-like ``m = d - r`` or deviance residuals.

    Deviance: ``sign(m) sqrt(-2 [m + d ln(d - m)])`` with ``0 ln(.) = 0``
    for censored spells.
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
    sd = survival_data(data, fit.spec.all_covariates())
    r = cox_snell(fit, sd)
    d = sd.d
    if kind == "cox_snell":
        vals = r
    else:
        m = d - r
        if kind == "martingale":
            vals = m
        else:
            dm = r  # d - m, without the cancellation of forming it from m
            bad = np.flatnonzero((d > 0) & ~(dm > 0))
            if bad.size:
                raise ValueError(f"deviance residual undefined at spell {int(bad[0])}: d - m = {dm[bad[0]]!r}")
            with np.errstate(divide="ignore", invalid="ignore"):
                log_term = np.where(d > 0, d * np.log(np.where(d > 0, dm, 1.0)), 0.0)
            inner = np.maximum(-2.0 * (m + log_term), 0.0)
            vals = np.sign(m) * np.sqrt(inner)
    return ResidualSet(kind, vals, sd.start)


def linear_predictor(fit: FitResult, data: SpellSet | SurvivalData) -> np.ndarray:
    """``x'b`` per spell (including the constant for parametric fits)."""
    spec = fit.spec
    sd = survival_data(data, spec.all_covariates())
    X = sd.columns(spec.covariates)
    beta = fit.params.beta
    if spec.intercept and not spec.is_cox:
        return beta[0] + X @ beta[1:]
    return X @ beta


@dataclass(frozen=True)
class ResidualSummary:
    """Descriptive statistics in the econometric-package convention.

    ``sd`` uses ``n - 1``; skewness and kurtosis use population moments and
    the kurtosis is not excess. Skewness, kurtosis and the Jarque-Bera test
    are ``nan``/``None`` for constant residuals.
    """

    kind: str
    n: int
    mean: float
    median: float
    maximum: float
    minimum: float
    sd: float
    skewness: float
    kurtosis: float
    sum: float
    sum_sq_dev: float
    jarque_bera: TestResult | None

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "jarque_bera"}
        out["jarque_bera"] = None if self.jarque_bera is None else self.jarque_bera.to_dict()
        return out


def residual_summary(res: ResidualSet | np.ndarray, kind: str | None = None) -> ResidualSummary:
    """Mean, median, extremes, SD, skewness, kurtosis, sums and Jarque-Bera."""
    if isinstance(res, ResidualSet):
        x, kind = res.values, res.kind
    else:
        x = np.asarray(res, dtype=float)
        kind = kind or "cox_snell"
    n = x.size
    if n < 8:
        raise ValueError(f"residual summary needs at least 8 values, got {n}")
    mean = float(x.mean())
    dev = x - mean
    m2 = float(np.mean(dev**2))
    ssd = float(dev @ dev)
    if m2 > 0 and np.ptp(x) > 0:
        skew = float(np.mean(dev**3) / m2**1.5)
        kurt = float(np.mean(dev**4) / m2**2)
        jb = n / 6.0 * (skew**2 + (kurt - 3.0) ** 2 / 4.0)
        jb_res = TestResult("jarque_bera", jb, 2, chi2_pvalue(jb, 2))
    else:
        skew = kurt = float("nan")
        jb_res = None
    return ResidualSummary(
        kind=kind,
        n=n,
        mean=mean,
        median=float(np.median(x)),
        maximum=float(x.max()),
        minimum=float(x.min()),
        sd=math.sqrt(ssd / (n - 1)),
        skewness=skew,
        kurtosis=kurt,
        sum=float(x.sum()),
        sum_sq_dev=ssd,
        jarque_bera=jb_res,
    )


def _as_values(res) -> np.ndarray:
    return res.ordered() if isinstance(res, ResidualSet) else np.asarray(res, dtype=float)


def _ordered_regressors(res, regressors) -> np.ndarray:
    Z = np.asarray(regressors, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    if isinstance(res, ResidualSet) and res.start is not None:
        Z = Z[np.argsort(res.start, kind="stable")]
    return Z


def bg_serial_test(res: ResidualSet | np.ndarray, lags: int = 2, regressors=None) -> TestResult:
    """Breusch-Godfrey LM test for serial correlation up to ``lags``.

    Auxiliary regression of the residuals on a constant, ``regressors`` and
    ``lags`` lagged residuals with zeros before the sample start; the
    statistic is ``n R^2`` against chi-square(lags).
    """
    e = _as_values(res)
    n = e.size
    if lags < 1:
        raise ValueError("lags must be positive")
    Z = np.empty((n, 0)) if regressors is None else _ordered_regressors(res, regressors)
    if n <= lags + Z.shape[1] + 1:
        raise ValueError(f"{n} observations are too few for {lags} lags and {Z.shape[1]} regressors")
    lagged = np.column_stack([np.concatenate([np.zeros(k), e[:-k]]) for k in range(1, lags + 1)])
    design = np.column_stack([np.ones(n), Z, lagged])
    fit = ols(e, design)
    stat = n * fit.r2
    return TestResult("breusch_godfrey", float(stat), lags, chi2_pvalue(stat, lags))


def bpg_hetero_test(res: ResidualSet | np.ndarray, regressors) -> tuple[TestResult, TestResult]:
    """Breusch-Pagan-Godfrey heteroskedasticity tests.

    Regresses squared residuals on a constant and ``regressors``. Returns the
    ``n R^2`` statistic and the scaled explained sum of squares
    ``ESS / (2 s^4)`` with ``s^2 = sum(e^2) / n``, both against
    chi-square(number of regressors).
    """
    e = _as_values(res)
    n = e.size
    Z = _ordered_regressors(res, regressors)
    q = Z.shape[1]
    if n <= q + 1:
        raise ValueError(f"{n} observations are too few for {q} regressors")
    e2 = e * e
    fit = ols(e2, np.column_stack([np.ones(n), Z]))
    lm = n * fit.r2
    s2 = float(e2.mean())
    scaled = fit.ess / (2.0 * s2 * s2)
    return (
        TestResult("bpg_lm", float(lm), q, chi2_pvalue(lm, q)),
        TestResult("bpg_scaled_ess", float(scaled), q, chi2_pvalue(scaled, q)),
    )


def qq_points(res: ResidualSet | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Normal quantiles ``Phi^-1((i - 0.5) / n)`` paired with the sorted residuals."""
    x = np.sort(res.values if isinstance(res, ResidualSet) else np.asarray(res, dtype=float))
    n = x.size
    if n < 2:
        raise ValueError("Q-Q data need at least two residuals")
    theo = np.array([std_normal_quantile((i - 0.5) / n) for i in range(1, n + 1)])
    return theo, x


def _fmt(v: float, digits: int | None) -> str:
    return f"{v:.{digits}g}" if digits else repr(float(v))


def residuals_csv(sets: Iterable[ResidualSet], digits: int | None = None) -> str:
    """Rows ``spell_start,kind,value``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["spell_start", "kind", "value"])
    for rs in sets:
        starts = rs.start if rs.start is not None else np.arange(len(rs))
        for s, v in zip(starts, rs.values):
            label = format_month(int(s)) if rs.start is not None else str(int(s))
            w.writerow([label, rs.kind, _fmt(v, digits)])
    return buf.getvalue()


def qq_csv(res: ResidualSet | np.ndarray, digits: int | None = None) -> str:
    """Rows ``theoretical,empirical``."""
    theo, emp = qq_points(res)
    lines = ["theoretical,empirical"]
    lines += [f"{_fmt(a, digits)},{_fmt(b, digits)}" for a, b in zip(theo, emp)]
    return "\n".join(lines) + "\n"
