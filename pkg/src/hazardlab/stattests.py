"""Small hypothesis-testing helpers shared across modules."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy import stats

__all__ = ["TestResult", "welch_t_test", "chi2_pvalue", "ols", "OLSResult"]


@dataclass(frozen=True)
class TestResult:
    name: str
    statistic: float
    df: int
    p_value: float

    __test__ = False  # keep pytest from collecting this as a test class

    def to_dict(self) -> dict:
        return asdict(self)


def chi2_pvalue(statistic: float, df: int) -> float:
    return float(stats.chi2.sf(statistic, df))


def welch_t_test(a: Sequence[float], b: Sequence[float]) -> TestResult:
    """Two-sample t-test with unequal variances.

    The Welch-Satterthwaite degrees of freedom are rounded to the nearest
    integer and the two-tailed p-value uses that integer df, which is how
    spreadsheet t-test tables report it.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise ValueError("welch_t_test needs at least two observations per sample")
    va = a.var(ddof=1) / a.size
    vb = b.var(ddof=1) / b.size
    if va == 0.0 and vb == 0.0:
        if a.mean() == b.mean():
            return TestResult("welch_t", 0.0, a.size + b.size - 2, 1.0)
        raise ValueError("both samples have zero variance; the t statistic is undefined")
    t = (a.mean() - b.mean()) / math.sqrt(va + vb)
    df_exact = (va + vb) ** 2 / (va * va / (a.size - 1) + vb * vb / (b.size - 1))
    df = int(math.floor(df_exact + 0.5))
    p = float(2.0 * stats.t.sf(abs(t), df))
    return TestResult("welch_t", float(t), df, min(1.0, p))


@dataclass(frozen=True)
class OLSResult:
    coef: np.ndarray
    fitted: np.ndarray
    resid: np.ndarray
    r2: float
    ess: float
    ssr: float


def ols(y: np.ndarray, X: np.ndarray) -> OLSResult:
    """Least squares with a rank check; ``X`` must already contain any constant."""
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise np.linalg.LinAlgError(f"design matrix is rank deficient ({X.shape[1]} columns)")
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    fitted = X @ coef
    resid = y - fitted
    ssr = float(resid @ resid)
    centered = y - y.mean()
    tss = float(centered @ centered)
    ess = float(((fitted - y.mean()) ** 2).sum())
    r2 = 1.0 - ssr / tss if tss > 0 else 1.0
    return OLSResult(coef, fitted, resid, r2, ess, ssr)
