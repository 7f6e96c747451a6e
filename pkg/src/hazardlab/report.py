"""Stratified fits, hazard-curve families and the reproducible study bundle."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .diagnostics import (
    bg_serial_test,
    bpg_hetero_test,
    linear_predictor,
    qq_csv,
    residual_summary,
    residuals,
    residuals_csv,
)
from .distributions import Family
from .estimation import (
    COX,
    FitResult,
    HazardPeakError,
    Metric,
    ModelSpec,
    SingularHessianError,
    fit,
    hazard_peak,
    predict,
)
from .inference import ph_components, ssr_goodness
from .nonparametric import CurveSample, curves_to_csv, kaplan_meier, smoothed_hazard
from .pipeline import (
    DEFAULT_COVARIATES,
    SpellSet,
    compute_returns,
    describe_spells,
    duration_histogram,
    cubic_trend_fit,
    extract_spells,
    group_t_tests,
    load_recessions,
    load_series,
    quartile_labels,
    spell_statistics,
)

__all__ = [
    "StratificationPlan",
    "FitFailure",
    "HazardCurve",
    "stratified_fits",
    "hazard_curve_family",
    "default_grid",
    "StudyConfig",
    "StudyError",
    "STUDY_MODELS",
    "run_study",
    "json_ready",
]


@dataclass(frozen=True)
class StratificationPlan:
    """How to split spells for separate fits.

    Parameters
    ----------
    covariate : spell covariate the scheme applies to.
    scheme : ``"quartiles"``, ``"breakpoints"`` or ``"all"`` (one stratum).
    breakpoints : strictly increasing cut values for ``"breakpoints"``; a
        value equal to a cut goes to the lower group.
    factor : optional binary covariate. Hazard curves are drawn at factor 0
        and 1 within each stratum fit, or, with ``cross=True``, the factor
        splits every stratum in two.
    """

    covariate: str = "price_decline"
    scheme: str = "quartiles"
    breakpoints: tuple[float, ...] = ()
    factor: str | None = None
    cross: bool = False

    def __post_init__(self):
        if self.scheme not in ("quartiles", "breakpoints", "all"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        bp = tuple(float(b) for b in self.breakpoints)
        object.__setattr__(self, "breakpoints", bp)
        if self.scheme == "breakpoints":
            if not bp:
                raise ValueError("breakpoint scheme needs at least one breakpoint")
            if any(b >= c for b, c in zip(bp, bp[1:])):
                raise ValueError("breakpoints must be strictly increasing")
        if self.cross and self.factor is None:
            raise ValueError("cross=True needs a factor")

    def strata(self, spells: SpellSet) -> dict[str, np.ndarray]:
        """Ordered mapping from stratum label to boolean spell mask."""
        n = len(spells)
        if self.scheme == "all":
            base = {"all": np.ones(n, dtype=bool)}
        else:
            vals = spells.column(self.covariate)
            if self.scheme == "quartiles":
                groups = quartile_labels(vals)
                labels = [1, 2, 3, 4]
            else:
                groups = 1 + np.searchsorted(np.array(self.breakpoints), vals, side="left")
                labels = list(range(1, len(self.breakpoints) + 2))
            base = {f"{self.covariate}:Q{g}" if self.scheme == "quartiles" else f"{self.covariate}:G{g}": groups == g
                    for g in labels}
        if not self.cross:
            return base
        fac = spells.column(self.factor)
        out = {}
        for lab, mask in base.items():
            out[f"{lab}|{self.factor}=1"] = mask & (fac == 1)
            out[f"{lab}|{self.factor}=0"] = mask & (fac == 0)
        return out


@dataclass(frozen=True)
class FitFailure:
    """A stratum whose fit could not be completed."""

    label: str
    reason: str
    converged: bool = False


def _varying(spells: SpellSet, names: Sequence[str]) -> tuple[str, ...]:
    return tuple(c for c in names if np.ptp(spells.column(c)) > 0)


def stratified_fits(spec: ModelSpec, spells: SpellSet, plan: StratificationPlan) -> dict[str, FitResult | FitFailure]:
    """Independent fits per stratum.

    Covariates that are constant inside a stratum are dropped from that
    stratum's model. Strata whose fit fails or does not converge are
    reported, not fatal.
    """
    out: dict[str, FitResult | FitFailure] = {}
    for label, mask in plan.strata(spells).items():
        if not mask.any():
            raise ValueError(f"stratum {label!r} is empty")
        sub = spells.subset(mask)
        sub_spec = spec.with_(covariates=_varying(sub, spec.covariates))
        try:
            res = fit(sub_spec, sub)
        except (SingularHessianError, ValueError, ArithmeticError) as exc:
            out[label] = FitFailure(label, str(exc))
            continue
        out[label] = res
    return out


def default_grid() -> np.ndarray:
    """0.1-month steps over [0.5, 12]."""
    return np.round(np.arange(5, 121) * 0.1, 10)


@dataclass(frozen=True)
class HazardCurve:
    curve: CurveSample
    covariates: Mapping[str, float]
    peak: tuple[float, float] | None


def _curve_points(spec: ModelSpec, sub: SpellSet, plan: StratificationPlan | None) -> list[tuple[str, dict]]:
    means = {c: float(sub.column(c).mean()) for c in spec.all_covariates()}
    if plan is None or plan.factor is None or plan.cross:
        return [("", means)]
    pts = []
    for level in (1, 0):
        pt = dict(means)
        if plan.factor in pt:
            pt[plan.factor] = float(level)
        pts.append((f"|{plan.factor}={level}", pt))
    return pts


def hazard_curve_family(
    fits: Mapping[str, FitResult | FitFailure],
    spells: SpellSet,
    plan: StratificationPlan | None = None,
    grid: Sequence[float] | None = None,
) -> dict[str, HazardCurve]:
    """Predicted hazard per stratum at stratum-mean covariates, with its peak.

    With a non-crossed factor the curve is drawn at factor 1 and factor 0.
    A peak inside the grid is added to that curve's time points. Failed or non-converged fits are skipped. ``peak`` is ``None`` for
    hazards without an interior maximum.
    """
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    masks = plan.strata(spells) if plan is not None else {k: np.ones(len(spells), bool) for k in fits}
    out = {}
    for label, res in fits.items():
        if isinstance(res, FitFailure) or not res.converged:
            continue
        sub = spells.subset(masks[label])
        for suffix, point in _curve_points(res.spec, sub, plan):
            try:
                peak = hazard_peak(res, point)
            except HazardPeakError:
                peak = None
            g = grid
            if peak is not None and grid[0] <= peak[0] <= grid[-1]:
                g = np.union1d(grid, [peak[0]])
            h = predict(res, point, g, "hazard")
            name = label + suffix
            out[name] = HazardCurve(CurveSample(g, h, np.zeros_like(h), name), point, peak)
    return out


# --------------------------------------------------------------------------- study

STUDY_MODELS: tuple[tuple[str, str, str], ...] = (
    ("lognormal", "lognormal", "none"),
    ("weibull", "weibull", "none"),
    ("exponential", "exponential", "none"),
    ("lognormal_gamma", "lognormal", "gamma"),
    ("weibull_gamma", "weibull", "gamma"),
    ("exponential_gamma", "exponential", "gamma"),
)


class StudyError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class StudyConfig:
    prices: Path
    out: Path
    recessions: Path | None = None
    recession_rule: str = "any"
    bandwidth: float = 1.5
    ties: str = "efron"
    tol: float = 1e-8
    max_iter: int = 100
    era_split: str = "1938-01"
    covariates: tuple[str, ...] = DEFAULT_COVARIATES
    digits: int = 6


def _fmt(v, digits: int) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, str):
        return v
    v = float(v)
    if not math.isfinite(v):
        return "nan"
    return f"{v:.{digits}g}"


def _table(header: Sequence[str], rows: Sequence[Sequence], digits: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v, digits) for v in r])
    return buf.getvalue()


def json_ready(obj):
    """JSON-ready copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_ready(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.ndarray):
        return json_ready(obj.tolist())
    return obj


def _stage(name: str, fn: Callable, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StudyError:
        raise
    except Exception as exc:  # noqa: BLE001 - every failure is reported with its stage
        raise StudyError(name, exc) from exc


def _mean_point(spells: SpellSet, names: Sequence[str]) -> dict[str, float]:
    return {c: float(spells.column(c).mean()) for c in names}


def _fit_models(cfg: StudyConfig, spells: SpellSet) -> dict[str, FitResult | FitFailure]:
    specs = {
        key: ModelSpec(family=fam, metric=Metric.AFT, frailty=frailty, covariates=cfg.covariates,
                       tol=cfg.tol, max_iter=cfg.max_iter, robust=True)
        for key, fam, frailty in STUDY_MODELS
    }
    specs["cox"] = ModelSpec(family=COX, metric=Metric.PL, covariates=cfg.covariates, ties=cfg.ties,
                             tol=cfg.tol, max_iter=cfg.max_iter, robust=True)
    fits: dict[str, FitResult | FitFailure] = {}
    for key, spec in specs.items():
        try:
            fits[key] = fit(spec, spells)
        except (SingularHessianError, ArithmeticError) as exc:
            fits[key] = FitFailure(key, str(exc))
    return fits


def _ok(res) -> bool:
    return isinstance(res, FitResult) and res.converged


def _residual_rows(fits, spells):
    rows = []
    tests = {}
    sets = {}
    for key in ("lognormal", "lognormal_gamma", "cox"):
        f = fits.get(key)
        if not _ok(f):
            continue
        X = spells.covariate_matrix(f.spec.covariates)
        lp = linear_predictor(f, spells)
        for kind in ("cox_snell", "martingale", "deviance"):
            rs = residuals(f, spells, kind)
            sets[(key, kind)] = rs
            s = residual_summary(rs)
            bg = bg_serial_test(rs, 2, X)
            lm, scaled = bpg_hetero_test(rs, lp)
            jb = s.jarque_bera
            rows.append([key, kind, s.n, s.mean, s.median, s.maximum, s.minimum, s.sd, s.skewness, s.kurtosis,
                         s.sum, s.sum_sq_dev, jb.statistic if jb else None, jb.p_value if jb else None,
                         bg.statistic, bg.p_value, lm.statistic, lm.p_value, scaled.statistic, scaled.p_value])
            tests[f"{key}:{kind}"] = {
                "summary": s.to_dict(),
                "breusch_godfrey": bg.to_dict(),
                "bpg_lm": lm.to_dict(),
                "bpg_scaled_ess": scaled.to_dict(),
            }
    return rows, tests, sets


def run_study(cfg: StudyConfig) -> dict:
    """Run the full analysis and write a deterministic bundle to ``cfg.out``.

    Returns the manifest dictionary (also written as ``manifest.json``).
    Any failure raises ``StudyError`` carrying the stage name.
    """
    digits = cfg.digits
    series = _stage("load_series", load_series, cfg.prices)
    calendar = _stage("load_recessions", load_recessions, cfg.recessions)
    returns = _stage("compute_returns", compute_returns, series)
    spells = _stage("extract_spells", extract_spells, returns, calendar, cfg.recession_rule)
    if len(spells) == 0:
        raise StudyError("extract_spells", ValueError("no decline spells in the series"))
    files: dict[str, str] = {}

    def emit(name: str, text: str):
        files[name] = text

    # Descriptive statistics and Table-1-style comparisons.
    def describe():
        stats = spell_statistics(returns, spells, calendar)
        rows, ttests = [], {}
        for grouping in ("recession", "era", "price_quartile", "rate_quartile"):
            for lab, g in describe_spells(spells, grouping, cfg.era_split).items():
                rows.append([grouping, lab, g.n, g.mean, g.variance, g.min, g.max])
            for name, res in group_t_tests(spells, grouping, cfg.era_split).items():
                ttests[f"{grouping}:{name}"] = res
        emit("describe.csv", _table(["grouping", "group", "n", "mean", "variance", "min", "max"], rows, digits))
        emit("ttests.csv", _table(["comparison", "t", "df", "p_value"],
                                  [[k, v.statistic, v.df, v.p_value] for k, v in ttests.items()], digits))
        hist = duration_histogram(spells)
        cubic = cubic_trend_fit(hist) if len(hist) >= 5 else None
        emit("histogram.csv", _table(["duration", "relative_frequency", "cubic_trend"],
                                     [[k, v, cubic(k) if cubic else None] for k, v in hist.items()], digits))
        return stats, ttests, cubic

    stats, ttests, cubic = _stage("describe_spells", describe)
    emit("spells.csv", spells.to_csv())

    def curves():
        km = [kaplan_meier(spells)]
        for lev in (0, 1):
            sel = spells.column("recession") == lev
            if sel.any():
                km.append(kaplan_meier(spells, ("recession", lev)))
        emit("km.csv", curves_to_csv(km, digits))
        sm = []
        for lev in (0, 1):
            sel = (spells.column("recession") == lev) & (spells.events > 0)
            if sel.any():
                sm.append(smoothed_hazard(spells, cfg.bandwidth, ("recession", lev)))
        emit("hazard_smoothed.csv", curves_to_csv(sm, digits))
        return {c.stratum: {"S(1)": float(c.at(1.0)), "se(1)": float(c.se_at(1.0))} for c in km}

    km_summary = _stage("kaplan_meier", curves)

    all_fits = _stage("fit_models", _fit_models, cfg, spells)
    fits = {k: f for k, f in all_fits.items() if _ok(f)}
    fit_status = {
        k: {"converged": _ok(f), "message": f.reason if isinstance(f, FitFailure) else f.message}
        for k, f in all_fits.items()
    }

    def tables():
        rows, summary = [], []
        ssr = {}
        for key, f in fits.items():
            for r in f.table():
                rows.append([key, r["name"], r["estimate"], r["se_model"], r["se_robust"], r["z"], r["p"]])
            ssr[key] = ssr_goodness(f, spells)
            summary.append([key, f.spec.family_name, f.spec.metric.value, f.spec.frailty.value, f.loglik, f.aic,
                            f.bic, f.n_params, ssr[key], f.converged, f.iterations])
        emit("fit_coefficients.csv", _table(["model", "parameter", "estimate", "se_model", "se_robust", "z", "p"],
                                            rows, digits))
        emit("fit_summary.csv", _table(["model", "family", "metric", "frailty", "loglik", "aic", "bic", "n_params",
                                        "ssr", "converged", "iterations"], summary, digits))
        emit("fits.json", json.dumps(json_ready({k: f.to_dict() for k, f in fits.items()}), indent=2,
                                     sort_keys=True) + "\n")
        return ssr

    ssr = _stage("fit_tables", tables)

    def ph():
        if "cox" not in fits:
            return None
        glob, per = ph_components(fits["cox"], spells)
        return {"global": glob.to_dict(), "covariates": [p.to_dict() for p in per]}

    ph_test = _stage("ph_assumption_test", ph)

    def resid():
        rows, tests, sets = _residual_rows(fits, spells)
        emit("residual_summary.csv", _table(
            ["model", "kind", "n", "mean", "median", "max", "min", "sd", "skewness", "kurtosis", "sum",
             "sum_sq_dev", "jarque_bera", "jb_p", "bg_chi2", "bg_p", "bpg_chi2", "bpg_p", "bpg_scaled_ss",
             "bpg_scaled_p"], rows, digits))
        for key in ("lognormal", "lognormal_gamma"):
            if key not in fits:
                continue
            emit(f"residuals_{key}.csv", residuals_csv([sets[(key, k)] for k in ("cox_snell", "martingale", "deviance")],
                                                       digits))
            emit(f"qq_{key}_deviance.csv", qq_csv(sets[(key, "deviance")], digits))
        return tests

    resid_tests = _stage("diagnostics", resid)

    def peaks():
        point = _mean_point(spells, cfg.covariates)
        out = {}
        for key in ("lognormal", "lognormal_gamma"):
            if key not in fits:
                out[key] = None
                continue
            try:
                t, h = hazard_peak(fits[key], point)
                out[key] = {"t_star": t, "h_star": h}
            except HazardPeakError:
                out[key] = None
        return {"covariates": point, "peaks": out}

    main_peaks = _stage("hazard_peaks", peaks)

    def strata():
        result = {}
        rows = []
        curves_out = []
        for cov in ("price_decline", "interest_rate"):
            plan = StratificationPlan(cov, "quartiles", factor="recession")
            for frailty in ("none", "gamma"):
                spec = ModelSpec(family=Family.LOGNORMAL, metric=Metric.AFT, frailty=frailty,
                                 covariates=cfg.covariates, tol=cfg.tol, max_iter=cfg.max_iter)
                sf = stratified_fits(spec, spells, plan)
                fam = hazard_curve_family(sf, spells, plan)
                tag = "" if frailty == "none" else "F"
                for label, res in sf.items():
                    n = int(plan.strata(spells)[label].sum())
                    ok = isinstance(res, FitResult) and res.converged
                    reason = None if ok else (res.reason if isinstance(res, FitFailure) else res.message)
                    result[f"{label}{tag}"] = {"n": n, "converged": ok, "reason": reason}
                for name, hc in fam.items():
                    t, h = hc.peak if hc.peak else (None, None)
                    rows.append([name + tag, t, h])
                    curves_out.append(CurveSample(hc.curve.time, hc.curve.value, hc.curve.std_err, name + tag))
        emit("hazard_curves.csv", curves_to_csv(curves_out, digits))
        emit("hazard_peaks.csv", _table(["stratum", "t_star", "h_star"], rows, digits))
        return result, {r[0]: None if r[1] is None else {"t_star": r[1], "h_star": r[2]} for r in rows}

    strata_info, strata_peaks = _stage("stratified_fits", strata)

    out = Path(cfg.out)
    manifest = {
        "inputs": {
            "prices_sha256": series.digest,
            "recessions": "bundled" if cfg.recessions is None else str(Path(cfg.recessions).name),
            "recession_rule": cfg.recession_rule,
            "bandwidth": cfg.bandwidth,
            "ties": cfg.ties,
            "date_range": list(spells.date_range),
        },
        "spell_statistics": stats,
        "cubic_trend": None if cubic is None else {"coef": list(cubic.coef), "r2": cubic.r2},
        "t_tests": {k: v.to_dict() for k, v in ttests.items()},
        "kaplan_meier": km_summary,
        "aic": {k: f.aic for k, f in fits.items()},
        "bic": {k: f.bic for k, f in fits.items()},
        "loglik": {k: f.loglik for k, f in fits.items()},
        "aic_comparable": {k: not f.spec.is_cox for k, f in fits.items()},
        "fit_status": fit_status,
        "ssr": ssr,
        "ph_test": ph_test,
        "residual_tests": resid_tests,
        "hazard_peaks": main_peaks,
        "stratified": {"fits": strata_info, "peaks": strata_peaks},
    }

    def write():
        out.mkdir(parents=True, exist_ok=True)
        digests = {}
        for name in sorted(files):
            data = files[name].encode("utf-8")
            (out / name).write_bytes(data)
            digests[name] = hashlib.sha256(data).hexdigest()
        manifest["files"] = digests
        text = json.dumps(json_ready(manifest), indent=2, sort_keys=True) + "\n"
        (out / "manifest.json").write_text(text, encoding="utf-8")

    _stage("write_bundle", write)
    return json_ready(manifest)
