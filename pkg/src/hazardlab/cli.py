"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 non-convergence or
estimation failure. Data go to files or standard output; diagnostics go to
standard error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .diagnostics import (
    KINDS,
    bg_serial_test,
    bpg_hetero_test,
    linear_predictor,
    residual_summary,
    residuals,
    residuals_csv,
)
from .distributions import Family
from .estimation import COX, FitResult, Frailty, Metric, ModelSpec, SingularHessianError, fit
from .estimation.model import DEFAULT_COVARIATES
from .inference import information_criteria, is_nested, lr_test, ph_components, ssr_goodness
from .nonparametric import curves_to_csv, kaplan_meier, smoothed_hazard
from .pipeline import (
    DataError,
    SpellSet,
    compute_returns,
    describe_spells,
    duration_histogram,
    extract_spells,
    group_t_tests,
    load_recessions,
    load_series,
    spell_statistics,
)
from .report import StudyConfig, StudyError, json_ready, run_study
from .simulate import default_seed, simulate_price_csv

__all__ = ["main", "build_parser", "UsageError", "EXIT_OK", "EXIT_USAGE", "EXIT_DATA", "EXIT_CONVERGENCE"]

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CONVERGENCE = 0, 1, 2, 3

FAMILIES = tuple(f.value for f in Family) + (COX,)
METRICS = ("aft", "ph", "link")
FRAILTIES = tuple(f.value for f in Frailty)

FORMATS = """\
file formats:
  prices CSV      header `date,real_price,long_rate_pct`, UTF-8, one row per
                  month; date is `YYYY-MM`, months contiguous, real_price > 0,
                  long_rate_pct in percent.
  recessions CSV  header `begin,end`; inclusive `YYYY-MM` months of each
                  recession, sorted and non-overlapping. Defaults to the
                  bundled NBER calendar.
  spells CSV      header `start,duration,event,recession,price_decline_pct,
                  interest_rate_pct`; start is `YYYY-MM`, event 1 = ended,
                  0 = right-censored.
  curve CSV       header `time,estimate,std_err,stratum`.
  residual CSV    header `spell_start,kind,value`.
  JSON            keys sorted, full float precision, NaN/inf as null.
Tables use 6 significant digits.

exit codes: 0 ok, 1 usage error, 2 data error, 3 non-convergence.
"""


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _add_inputs(p: argparse.ArgumentParser, spells_ok: bool = True):
    g = p.add_argument_group("inputs")
    g.add_argument("--prices", type=Path, help="monthly prices CSV")
    if spells_ok:
        g.add_argument("--spells", type=Path, help="spells CSV, used instead of --prices")
    g.add_argument("--recessions", type=Path, help="recession calendar CSV (default: bundled NBER dates)")
    g.add_argument("--recession-rule", choices=("any", "majority", "all"), default="any",
                   help="months of overlap that make a spell a recession spell (default: any)")


def _add_model(p: argparse.ArgumentParser, family: bool = True):
    g = p.add_argument_group("model")
    if family:
        g.add_argument("--family", choices=FAMILIES, default="lognormal", help="baseline family (default: lognormal)")
    g.add_argument("--metric", choices=METRICS, default="aft",
                   help="regression metric; ignored for cox (default: aft)")
    g.add_argument("--frailty", choices=FRAILTIES, default="none", help="unit-mean frailty (default: none)")
    g.add_argument("--robust", action="store_true", help="report sandwich standard errors")
    g.add_argument("--ties", choices=("efron", "breslow"), default="efron", help="Cox tie handling (default: efron)")
    g.add_argument("--covariates", default=",".join(DEFAULT_COVARIATES),
                   help="comma-separated covariates (default: %(default)s)")
    g.add_argument("--tol", type=float, default=1e-8, help="gradient max-norm tolerance (default: 1e-8)")
    g.add_argument("--max-iter", type=int, default=100, help="Newton-Raphson iteration cap (default: 100)")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.RawDescriptionHelpFormatter
    parser = _Parser(prog="hazardlab", description="Duration analysis of stock-market decline spells.",
                     epilog=FORMATS, formatter_class=fmt)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    def cmd(name, help_text):
        return sub.add_parser(name, help=help_text, description=help_text, epilog=FORMATS, formatter_class=fmt)

    p = cmd("spells", "Extract decline spells and write them as CSV.")
    _add_inputs(p, spells_ok=False)
    p.add_argument("--out", type=Path, help="output file (default: standard output)")

    p = cmd("describe", "Headline spell statistics, group summaries and Welch tests as JSON.")
    _add_inputs(p)
    p.add_argument("--era-split", default="1938-01", help="first month of the later era (default: 1938-01)")

    p = cmd("km", "Kaplan-Meier curves (overall and by recession) or smoothed hazards as curve CSV.")
    _add_inputs(p)
    p.add_argument("--bandwidth", type=float, default=None,
                   help="write kernel-smoothed hazards with this bandwidth instead of survivor curves")
    p.add_argument("--out", type=Path, help="output file (default: standard output)")

    p = cmd("fit", "Fit one model and print its result JSON.")
    _add_inputs(p)
    _add_model(p)

    p = cmd("diagnose", "Fit one model and print residual diagnostics as JSON.")
    _add_inputs(p)
    _add_model(p)
    p.add_argument("--kind", choices=KINDS, default="cox_snell", help="residual type (default: cox_snell)")
    p.add_argument("--lags", type=int, default=2, help="Breusch-Godfrey lags (default: 2)")
    p.add_argument("--out", type=Path, help="also write the residual CSV here")

    p = cmd("compare", "Fit several families and print information criteria and LR tests as JSON.")
    _add_inputs(p)
    _add_model(p, family=False)
    p.add_argument("--families", default="lognormal,weibull,exponential",
                   help="comma-separated parametric families (default: %(default)s)")

    p = cmd("study", "Run the complete analysis and write the report bundle.")
    _add_inputs(p, spells_ok=False)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--bandwidth", type=float, default=1.5, help="smoothing bandwidth in months (default: 1.5)")
    p.add_argument("--ties", choices=("efron", "breslow"), default="efron", help="Cox tie handling (default: efron)")
    p.add_argument("--tol", type=float, default=1e-8, help="gradient max-norm tolerance (default: 1e-8)")
    p.add_argument("--max-iter", type=int, default=100, help="Newton-Raphson iteration cap (default: 100)")
    p.add_argument("--era-split", default="1938-01", help="first month of the later era (default: 1938-01)")

    p = cmd("simulate", "Write a synthetic prices CSV (seed from --seed or HAZARDLAB_SEED).")
    p.add_argument("--months", type=int, default=1747, help="number of months (default: 1747)")
    p.add_argument("--start", default="1871-01", help="first month (default: 1871-01)")
    p.add_argument("--seed", type=int, default=None, help="RNG seed (default: HAZARDLAB_SEED or 20160601)")
    p.add_argument("--out", type=Path, help="output file (default: standard output)")
    return parser


def _covariates(text: str) -> tuple[str, ...]:
    return tuple(c.strip() for c in text.split(",") if c.strip())


def _spec(args, family: str | None = None) -> ModelSpec:
    family = family or args.family
    if family == COX:
        if args.frailty != "none":
            raise UsageError("--frailty is not available for the cox model")
        return ModelSpec(family=COX, metric=Metric.PL, covariates=_covariates(args.covariates), ties=args.ties,
                         tol=args.tol, max_iter=args.max_iter, robust=args.robust)
    if family == Family.LOGNORMAL.value and args.metric == "ph":
        raise UsageError("--family lognormal has no proportional-hazards form; use --metric aft")
    try:
        return ModelSpec(family=family, metric=Metric(args.metric), frailty=Frailty(args.frailty),
                         covariates=_covariates(args.covariates), tol=args.tol, max_iter=args.max_iter,
                         robust=args.robust)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _validate(args):
    """Cross-flag checks that argparse cannot express."""
    if getattr(args, "family", None) is not None:
        _spec(args)
    if args.command == "compare":
        for fam in _covariates(args.families):
            if fam not in FAMILIES:
                raise UsageError(f"unknown family {fam!r} in --families")
            _spec(args, fam)
    needs_prices = args.command not in ("simulate",)
    if needs_prices and args.prices is None and getattr(args, "spells", None) is None:
        raise UsageError(f"{args.command} needs --prices" + (" or --spells" if hasattr(args, "spells") else ""))
    if getattr(args, "spells", None) is not None and args.prices is not None:
        raise UsageError("--prices and --spells are mutually exclusive")


def _load(args):
    if getattr(args, "spells", None) is not None:
        return None, None, SpellSet.from_csv(args.spells)
    series = load_series(args.prices)
    calendar = load_recessions(args.recessions)
    returns = compute_returns(series)
    return returns, calendar, extract_spells(returns, calendar, args.recession_rule)


def _write(text: str, out: Path | None):
    if out is None:
        sys.stdout.write(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8")


def _json(obj) -> str:
    return json.dumps(json_ready(obj), indent=2, sort_keys=True) + "\n"


def _fit_checked(spec: ModelSpec, spells) -> FitResult:
    res = fit(spec, spells)
    if not res.converged:
        print(f"warning: {spec.family_name} did not converge: {res.message}", file=sys.stderr)
    return res


def _cmd_spells(args) -> int:
    _, _, spells = _load(args)
    _write(spells.to_csv(), args.out)
    return EXIT_OK


def _cmd_describe(args) -> int:
    returns, calendar, spells = _load(args)
    out = {"statistics": spell_statistics(returns, spells, calendar) if returns is not None else None}
    groups, tests = {}, {}
    for grouping in ("recession", "era", "price_quartile", "rate_quartile"):
        groups[grouping] = {k: vars(v) for k, v in describe_spells(spells, grouping, args.era_split).items()}
        tests[grouping] = {k: v.to_dict() for k, v in group_t_tests(spells, grouping, args.era_split).items()}
    out.update(groups=groups, t_tests=tests, histogram={str(k): v for k, v in duration_histogram(spells).items()})
    _write(_json(out), None)
    return EXIT_OK


def _cmd_km(args) -> int:
    _, _, spells = _load(args)
    rec = spells.column("recession")
    if args.bandwidth is None:
        curves = [kaplan_meier(spells)] + [kaplan_meier(spells, ("recession", v)) for v in (0, 1) if (rec == v).any()]
    else:
        curves = [smoothed_hazard(spells, args.bandwidth)] + [
            smoothed_hazard(spells, args.bandwidth, ("recession", v))
            for v in (0, 1)
            if ((rec == v) & (spells.events > 0)).any()
        ]
    _write(curves_to_csv(curves, 6), args.out)
    return EXIT_OK


def _cmd_fit(args) -> int:
    _, _, spells = _load(args)
    res = _fit_checked(_spec(args), spells)
    _write(_json(res.to_dict()), None)
    return EXIT_OK if res.converged else EXIT_CONVERGENCE


def _cmd_diagnose(args) -> int:
    _, _, spells = _load(args)
    spec = _spec(args)
    res = _fit_checked(spec, spells)
    rs = residuals(res, spells, args.kind)
    X = spells.covariate_matrix(spec.covariates) if spec.covariates else None
    out = {
        "model": spec.to_dict(),
        "converged": res.converged,
        "loglik": res.loglik,
        "ssr": ssr_goodness(res, spells),
        "summary": residual_summary(rs).to_dict(),
        "breusch_godfrey": bg_serial_test(rs, args.lags, X).to_dict(),
    }
    if spec.covariates:
        lm, scaled = bpg_hetero_test(rs, linear_predictor(res, spells))
        out["bpg_lm"], out["bpg_scaled_ess"] = lm.to_dict(), scaled.to_dict()
    if spec.is_cox:
        glob, per = ph_components(res, spells)
        out["ph_test"] = {"global": glob.to_dict(), "covariates": [t.to_dict() for t in per]}
    if args.out is not None:
        _write(residuals_csv([rs], 6), args.out)
    _write(_json(out), None)
    return EXIT_OK if res.converged else EXIT_CONVERGENCE


def _cmd_compare(args) -> int:
    _, _, spells = _load(args)
    fits = {fam: _fit_checked(_spec(args, fam), spells) for fam in _covariates(args.families)}
    models = {}
    for fam, r in fits.items():
        aic, bic = information_criteria(r)
        models[fam] = {"loglik": r.loglik, "n_params": r.n_params, "aic": aic, "bic": bic, "converged": r.converged}
    lr = {}
    for a, ra in fits.items():
        for b, rb in fits.items():
            if a != b and not ra.spec.is_cox and not rb.spec.is_cox and is_nested(ra.spec, rb.spec):
                lr[f"{a}_in_{b}"] = lr_test(ra, rb).to_dict()
    ranking = sorted((m for m in models if not fits[m].spec.is_cox), key=lambda m: models[m]["aic"])
    _write(_json({"models": models, "aic_ranking": ranking, "lr_tests": lr}), None)
    return EXIT_OK if all(r.converged for r in fits.values()) else EXIT_CONVERGENCE


def _cmd_study(args) -> int:
    cfg = StudyConfig(prices=args.prices, out=args.out, recessions=args.recessions,
                      recession_rule=args.recession_rule, bandwidth=args.bandwidth, ties=args.ties,
                      tol=args.tol, max_iter=args.max_iter, era_split=args.era_split)
    manifest = run_study(cfg)
    status = manifest.get("fit_status", {})
    failed = sorted(k for k, v in status.items() if not v["converged"])
    for k in failed:
        print(f"warning: {k}: {status[k]['message']}", file=sys.stderr)
    print(str(args.out / "manifest.json"))
    return EXIT_OK


def _cmd_simulate(args) -> int:
    seed = args.seed if args.seed is not None else default_seed()
    _write(simulate_price_csv(args.months, args.start, seed), args.out)
    return EXIT_OK


_COMMANDS = {
    "spells": _cmd_spells,
    "describe": _cmd_describe,
    "km": _cmd_km,
    "fit": _cmd_fit,
    "diagnose": _cmd_diagnose,
    "compare": _cmd_compare,
    "study": _cmd_study,
    "simulate": _cmd_simulate,
}

_DATA_ERRORS = (DataError, OSError, UnicodeDecodeError)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _validate(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help and --version
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StudyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA if isinstance(exc.cause, _DATA_ERRORS) else EXIT_CONVERGENCE
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (SingularHessianError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"estimation failed: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
