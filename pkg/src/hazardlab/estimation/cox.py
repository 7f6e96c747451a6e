"""Cox partial likelihood with Efron or Breslow handling of tied durations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["CoxTerms", "cox_terms"]


@dataclass(frozen=True)
class CoxTerms:
    """Partial-likelihood quantities at one coefficient vector.

    ``X`` is centered internally; ``baseline_cumhaz`` is therefore the
    cumulative hazard at the covariate means, and ``cox_snell`` uses the
    centered linear predictor consistently.
    """

    loglik: float
    score: np.ndarray
    info: np.ndarray
    score_resid: np.ndarray
    event_times: np.ndarray
    schoenfeld: np.ndarray
    death_index: np.ndarray
    baseline_cumhaz: np.ndarray
    cox_snell: np.ndarray


def cox_terms(t, d, X, beta, ties: str = "efron") -> CoxTerms:
    """Evaluate the partial log-likelihood, score, information and residuals.

    Parameters
    ----------
    t, d : durations and event indicators.
    X : covariates, shape ``(n, p)``; no constant column.
    beta : coefficients, length ``p``.
    ties : ``"efron"`` or ``"breslow"``.
    """
    if ties not in ("efron", "breslow"):
        raise ValueError(f"ties must be 'efron' or 'breslow', got {ties!r}")
    t = np.asarray(t, dtype=float)
    d = np.asarray(d, dtype=float)
    X = np.asarray(X, dtype=float).reshape(len(t), -1)
    beta = np.asarray(beta, dtype=float)
    n, p = X.shape
    Xc = X - X.mean(axis=0)
    eta = Xc @ beta
    w = np.exp(eta)
    if not np.all(np.isfinite(w)):
        raise ArithmeticError("overflow in exp(x'b) for the partial likelihood")

    order = np.argsort(t, kind="stable")
    ts = t[order]
    ws = w[order]
    Xs = Xc[order]
    # Reverse cumulative sums give risk-set totals at each sorted position.
    S0c = np.cumsum(ws[::-1])[::-1]
    S1c = np.cumsum((ws[:, None] * Xs)[::-1], axis=0)[::-1]
    S2c = np.cumsum((ws[:, None, None] * Xs[:, :, None] * Xs[:, None, :])[::-1], axis=0)[::-1]

    dead = d > 0
    times = np.unique(t[dead])
    G = len(times)
    first = np.searchsorted(ts, times, side="left")
    S0, S1, S2 = S0c[first], S1c[first], S2c[first]
    gid = np.searchsorted(times, t)  # group of each spell's own duration (valid for deaths)
    m = np.bincount(gid[dead], minlength=G).astype(float)
    D0 = np.bincount(gid[dead], weights=w[dead], minlength=G)
    D1 = np.zeros((G, p))
    D2 = np.zeros((G, p, p))
    np.add.at(D1, gid[dead], w[dead, None] * Xc[dead])
    np.add.at(D2, gid[dead], w[dead, None, None] * Xc[dead, :, None] * Xc[dead, None, :])

    # One row per death slot e within its tied group.
    eg = np.repeat(np.arange(G), m.astype(int))
    offs = np.arange(len(eg)) - np.repeat(np.cumsum(m) - m, m.astype(int)).astype(int)
    frac = offs / m[eg] if ties == "efron" else np.zeros(len(eg))
    den = S0[eg] - frac * D0[eg]
    mean = (S1[eg] - frac[:, None] * D1[eg]) / den[:, None]
    second = (S2[eg] - frac[:, None, None] * D2[eg]) / den[:, None, None]

    loglik = float(eta[dead].sum() - np.log(den).sum())
    score = Xc[dead].sum(axis=0) - mean.sum(axis=0)
    info = (second - mean[:, :, None] * mean[:, None, :]).sum(axis=0)

    # Per-group sums used by the residuals.
    inv = 1.0 / den
    A = np.bincount(eg, weights=inv, minlength=G)
    B = np.zeros((G, p))
    np.add.at(B, eg, mean * inv[:, None])
    fA = np.bincount(eg, weights=frac * inv, minlength=G)
    fB = np.zeros((G, p))
    np.add.at(fB, eg, frac[:, None] * mean * inv[:, None])
    mbar = np.zeros((G, p))
    np.add.at(mbar, eg, mean)
    mbar /= np.maximum(m, 1)[:, None]

    cumA = np.cumsum(A)
    cumB = np.cumsum(B, axis=0)
    upto = np.searchsorted(times, t, side="right") - 1  # last event time <= t_i
    has = upto >= 0
    accA = np.where(has, cumA[np.clip(upto, 0, None)], 0.0)
    accB = np.where(has[:, None], cumB[np.clip(upto, 0, None)], 0.0)
    # Deaths carry weight (1 - f) in their own group's slots.
    own = np.where(dead, gid, 0)
    accA = accA - np.where(dead, fA[own], 0.0)
    accB = accB - np.where(dead[:, None], fB[own], 0.0)
    score_resid = np.where(dead[:, None], Xc - mbar[own], 0.0) - w[:, None] * (Xc * accA[:, None] - accB)

    death_index = np.flatnonzero(dead)
    death_index = death_index[np.argsort(t[death_index], kind="stable")]
    schoenfeld = Xc[death_index] - mbar[gid[death_index]]

    baseline = np.cumsum(A)
    cum_at_t = np.where(has, baseline[np.clip(upto, 0, None)], 0.0)
    return CoxTerms(
        loglik=loglik,
        score=score,
        info=0.5 * (info + info.T),
        score_resid=score_resid,
        event_times=times,
        schoenfeld=schoenfeld,
        death_index=death_index,
        baseline_cumhaz=baseline,
        cox_snell=w * cum_at_t,
    )
