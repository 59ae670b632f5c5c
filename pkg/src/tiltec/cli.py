"""Command-line entry point: ``tiltec <command> [options]``.

Commands
--------
ec-curve       expected EC and its per-dimension terms over a grid of levels
chi2-validate  exact vs tilted vs Gaussian densities of the chi-square field
bubbles-sim    Monte Carlo study of the bubbles field
threshold      level at which the expected EC equals a target p-value
ratio          tilted-to-Gaussian ratio grid over bubbles per resel and p_correct

Exit status is 0 on success, 2 for configuration errors and 3 for numerical
failures (the failing quantity is named on stderr). Options given on the
command line override keys from ``--config``, which override defaults.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys

import numpy as np

from . import bubbles, chi2
from .ec_density import HermiteArg, QuadratureError, Rho0Method
from .geometry import Density, ECMethodSpec, Region, Spectral, ThresholdError, expected_ec_terms, pvalue_ratio
from .geometry import threshold_for_pvalue
from .saddlepoint import CgfDomainError, Chi2Normalized, PureGaussian, SaddlepointError, TruncatedSeries

EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_INTERRUPTED = 130

NUMERIC_ERRORS = (SaddlepointError, ThresholdError, QuadratureError, CgfDomainError, FloatingPointError)

DEFAULT_STUDY_SPECS = (
    ECMethodSpec.gaussian(),
    ECMethodSpec(Density.TILTED, Spectral.UNTILTED, HermiteArg.TILTED),
    ECMethodSpec(Density.TILTED, Spectral.TILTED, HermiteArg.TILTED),
    ECMethodSpec(Density.TILTED, Spectral.TILTED, HermiteArg.GAUSSIAN),
)


class ConfigError(ValueError):
    pass


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser():
    parser = argparse.ArgumentParser(prog="tiltec", description="Expected Euler characteristic p-values for non-Gaussian fields.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="key = value file with model settings")
        p.add_argument("--out", help="output path (default: stdout)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")

    def add_model(p):
        p.add_argument("--model", choices=("gaussian", "chi2", "bubbles"), default=None)
        p.add_argument("--variance", type=float, default=None, help="variance of the gaussian model")
        p.add_argument("--dof", type=int, default=None, help="degrees of freedom of the chi2 model")
        p.add_argument("--region", default=None, help="comma-separated box sides; 'point' for a single point")
        p.add_argument("--lambda", dest="lam", type=float, default=None, help="second spectral moment")
        add_bubbles(p)

    def add_bubbles(p):
        p.add_argument("--p-c", dest="p_correct", type=float)
        p.add_argument("--bubbles-per-image", type=float)
        p.add_argument("--fwhm", type=float)
        p.add_argument("--images", type=int)
        p.add_argument("--pixels", type=int)
        p.add_argument("--pad", type=int)
        p.add_argument("--truncation", type=int)
        p.add_argument("--fixed-counts", action="store_true", default=None)

    def add_spec(p):
        p.add_argument("--density", choices=[d.value for d in Density], default=Density.TILTED.value)
        p.add_argument("--spectral", choices=[s.value for s in Spectral], default=None)
        p.add_argument("--hermite-arg", choices=[h.value for h in HermiteArg], default=None)
        p.add_argument("--rho0", choices=[r.value for r in Rho0Method], default=None)

    def add_grid(p, lo, hi, step):
        p.add_argument("--u-min", type=float, default=lo)
        p.add_argument("--u-max", type=float, default=hi)
        p.add_argument("--u-step", type=float, default=step)

    p = sub.add_parser("ec-curve", help="expected EC over a grid of levels")
    add_common(p)
    add_model(p)
    add_spec(p)
    add_grid(p, -4.0, 6.0, 0.1)

    p = sub.add_parser("chi2-validate", help="chi-square density comparison table")
    add_common(p)
    p.add_argument("--regime", choices=[r.value for r in chi2.Regime], default=chi2.Regime.FIXED_U.value)
    p.add_argument("--k", type=int, default=0, choices=(0, 1, 2, 3))
    p.add_argument("--rho0", choices=[r.value for r in Rho0Method], default=Rho0Method.ROBINSON.value)
    p.add_argument("--ns", type=_float_list, default=None, help="sample sizes (grow-both, fixed-u)")
    p.add_argument("--us", type=_float_list, default=None, help="levels (fixed-n)")
    p.add_argument("--fixed-n", type=int, default=500)
    p.add_argument("--fixed-u", type=float, default=2.0)
    p.add_argument("--growth", type=float, default=1.0, help="c in u = c n^(1/6)")

    p = sub.add_parser("bubbles-sim", help="Monte Carlo study of the bubbles field")
    add_common(p)
    add_bubbles(p)
    p.add_argument("--thresholds", type=_float_list, default=None, help="comma-separated levels")
    add_grid(p, None, None, None)
    p.add_argument("--spec", action="append", default=None, help="density:spectral:hermite-arg[:rho0]; repeatable")
    p.add_argument("--reps", type=int, default=2000)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("threshold", help="level for a target p-value")
    add_common(p)
    add_model(p)
    add_spec(p)
    p.add_argument("--p-target", type=float, default=0.05)

    p = sub.add_parser("ratio", help="tilted-to-Gaussian ratio grid for the bubbles model")
    add_common(p)
    p.add_argument("--u", type=float, default=3.5)
    p.add_argument("--ndim", type=int, default=2)
    p.add_argument("--p-c", dest="p_correct", type=_float_list, default=[0.5, 0.6, 0.75, 0.9])
    p.add_argument("--resels", type=_float_list, default=None, help="bubbles per resel values")
    p.add_argument("--truncation", type=int, default=20)
    return parser


# -- config assembly -------------------------------------------------------------


def _file_settings(args):
    if not getattr(args, "config", None):
        return {}
    try:
        with open(args.config) as fh:
            return bubbles.parse_config_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"--config: cannot read {args.config}: {exc.strerror}") from None


def _pop(settings, key, cast, default=None):
    if key not in settings:
        return default
    raw = settings.pop(key)
    try:
        return cast(raw)
    except ValueError:
        raise ConfigError(f"config key {key}: invalid value {raw!r}") from None


def _bubbles_config(args, settings):
    overrides = {
        name: getattr(args, name, None)
        for name in ("p_correct", "bubbles_per_image", "fwhm", "images", "pixels", "pad", "truncation", "fixed_counts")
    }
    overrides["seed"] = getattr(args, "seed", None)
    if overrides["seed"] is None and "seed" not in settings and "ECRF_SEED" in os.environ:
        overrides["seed"] = os.environ["ECRF_SEED"]
    try:
        return bubbles.BubblesConfig.from_mapping(settings, **overrides)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _spec(args):
    density = Density(args.density)
    if density is Density.GAUSSIAN:
        if args.spectral not in (None, Spectral.UNTILTED.value) or args.hermite_arg not in (None, HermiteArg.GAUSSIAN.value):
            raise ConfigError("--density gaussian requires --spectral untilted and --hermite-arg gaussian")
        return ECMethodSpec(density, Spectral.UNTILTED, HermiteArg.GAUSSIAN, args.rho0)
    return ECMethodSpec(density, args.spectral or Spectral.UNTILTED, args.hermite_arg or HermiteArg.TILTED, args.rho0)


def _parse_region(text):
    if text.strip().lower() in ("point", "", "0"):
        return Region(())
    try:
        return Region(tuple(float(v) for v in text.split(",")))
    except ValueError as exc:
        raise ConfigError(f"--region: {exc}") from None


def _model_setup(args):
    """Return ``(model, region, lambda)`` for the gaussian, chi2 or bubbles model."""
    settings = _file_settings(args)
    kind = args.model or settings.pop("model", "bubbles")
    region_text = args.region if args.region is not None else settings.pop("region", None)
    lam = args.lam if args.lam is not None else _pop(settings, "lambda", float)
    if kind == "bubbles":
        config = _bubbles_config(args, settings)
        region = _parse_region(region_text) if region_text is not None else Region((config.side,) * config.ndim)
        return bubbles.bubbles_model(config), region, lam if lam is not None else bubbles.spectral_moment(config)
    if kind not in ("gaussian", "chi2"):
        raise ConfigError(f"--model: unknown model {kind!r}")
    if region_text is None:
        raise ConfigError(f"--region is required for the {kind} model")
    region = _parse_region(region_text)
    if lam is None:
        lam = 1.0
    if not lam > 0:
        raise ConfigError("--lambda must be positive")
    if kind == "gaussian":
        variance = args.variance if args.variance is not None else _pop(settings, "variance", float, 1.0)
        if not variance > 0:
            raise ConfigError("--variance must be positive")
        model = PureGaussian(variance)
    else:
        dof = args.dof if args.dof is not None else _pop(settings, "dof", int)
        if dof is None or dof < 1:
            raise ConfigError("--dof must be a positive integer for the chi2 model")
        model = Chi2Normalized(dof)
    unused = set(settings) - {"seed"}
    if unused:
        raise ConfigError(f"config keys not used by the {kind} model: {', '.join(sorted(unused))}")
    return model, region, lam


def _u_grid(args):
    lo, hi, step = args.u_min, args.u_max, args.u_step
    if not lo < hi:
        raise ConfigError(f"--u-min ({lo}) must be below --u-max ({hi})")
    if not step > 0:
        raise ConfigError(f"--u-step must be positive, got {step}")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(count)


# -- output ----------------------------------------------------------------------


def _render(records, columns, schema, fmt):
    if fmt == "json":
        return json.dumps(records, indent=2) + "\n"
    buf = io.StringIO()
    buf.write(f"# schema: {schema} columns={','.join(columns)}\n")
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for rec in records:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in rec.items()})
    return buf.getvalue()


def _emit(text, out):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# -- commands ----------------------------------------------------------------------


def cmd_ec_curve(args):
    model, region, lam = _model_setup(args)
    spec = _spec(args)
    us = _u_grid(args)
    if spec.rho0 in (Rho0Method.ROBINSON, Rho0Method.DANIELS) and us[0] <= 0:
        raise ConfigError(f"--rho0 {spec.rho0.value} needs u > 0; raise --u-min or choose lugannani-rice")
    columns = ["u", "rho_0"] + [f"term_{k}" for k in range(1, region.ndim + 1)] + ["expected_ec"]
    records = []
    for u in us:
        terms = expected_ec_terms(region, lam, float(u), model, spec)
        rec = {"u": float(u), "rho_0": float(terms[0])}
        rec.update({f"term_{k}": float(terms[k]) for k in range(1, region.ndim + 1)})
        rec["expected_ec"] = float(np.sum(terms))
        records.append(rec)
    _emit(_render(records, columns, "tiltec.ec_curve/v1", args.format), args.out)
    return 0


def cmd_chi2_validate(args):
    regime = chi2.Regime(args.regime)
    kwargs = {"c": args.growth, "u": args.fixed_u, "n": args.fixed_n}
    if args.ns:
        kwargs["ns"] = tuple(int(v) for v in args.ns)
    if args.us:
        kwargs["us"] = tuple(args.us)
    rows = chi2.chi2_comparison_table(args.k, chi2.regime_grid(regime, **kwargs), Rho0Method(args.rho0))
    records = [dict(zip(chi2.TABLE_COLUMNS, (r.n, r.u, r.rho_exact, r.rho_tilted, r.rho_gaussian, r.ratio_tilted, r.ratio_gaussian))) for r in rows]
    _emit(_render(records, list(chi2.TABLE_COLUMNS), "tiltec.chi2_comparison/v1", args.format), args.out)
    return 0


def _parse_spec(text):
    parts = text.split(":")
    if not 3 <= len(parts) <= 4:
        raise ConfigError(f"--spec: expected density:spectral:hermite-arg[:rho0], got {text!r}")
    try:
        return ECMethodSpec(*parts)
    except ValueError as exc:
        raise ConfigError(f"--spec {text!r}: {exc}") from None


def cmd_bubbles_sim(args):
    settings = _file_settings(args)
    config = _bubbles_config(args, settings)
    if args.reps < 100:
        raise ConfigError(f"--reps must be >= 100, got {args.reps}")
    if args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    if args.thresholds:
        thresholds = args.thresholds
    elif args.u_min is not None or args.u_max is not None:
        if args.u_min is None or args.u_max is None or args.u_step is None:
            raise ConfigError("--u-min, --u-max and --u-step must be given together")
        thresholds = list(_u_grid(args))
    else:
        thresholds = [3.5]
    specs = [_parse_spec(s) for s in args.spec] if args.spec else list(DEFAULT_STUDY_SPECS)
    report = bubbles.monte_carlo_study(config, thresholds, args.reps, specs, jobs=args.jobs)
    if args.format == "json":
        _emit(json.dumps(report.records(), indent=2) + "\n", args.out)
    else:
        _emit(report.to_csv(), args.out)
    if report.degenerate_draws:
        print(f"redrew {report.degenerate_draws} degenerate classification draws", file=sys.stderr)
    if report.interrupted:
        print(f"interrupted after {report.rep_count} replicates; partial results written", file=sys.stderr)
        return EXIT_INTERRUPTED
    return 0


def cmd_threshold(args):
    model, region, lam = _model_setup(args)
    spec = _spec(args)
    if not 0 < args.p_target < 1:
        raise ConfigError(f"--p-target must lie in (0, 1), got {args.p_target}")
    u = threshold_for_pvalue(region, lam, model, spec, args.p_target)
    terms = expected_ec_terms(region, lam, u, model, spec)
    rec = {"u": float(u), "p_target": args.p_target, "spec_id": spec.label}
    rec.update({f"term_{k}": float(t) for k, t in enumerate(terms)})
    rec["expected_ec"] = float(np.sum(terms))
    _emit(_render([rec], list(rec), "tiltec.threshold/v1", args.format), args.out)
    return 0


def cmd_ratio(args):
    resels = args.resels or list(np.geomspace(10, 1e4, 13))
    if not args.u > 0:
        raise ConfigError("--u must be positive")
    records = []
    for pc in args.p_correct:
        for b in resels:
            try:
                cums = tuple(bubbles.bubble_cumulant(j, args.ndim, pc, b) for j in range(2, args.truncation + 1))
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            model = TruncatedSeries(cums)
            records.append(
                {
                    "p_c": float(pc),
                    "bubbles_per_resel": float(b),
                    "u": args.u,
                    "r": pvalue_ratio(model, args.u, "r"),
                    "r_tilted_lambda": pvalue_ratio(model, args.u, "r_tilted_lambda"),
                }
            )
    _emit(_render(records, list(records[0]), "tiltec.ratio/v1", args.format), args.out)
    return 0


COMMANDS = {
    "ec-curve": cmd_ec_curve,
    "chi2-validate": cmd_chi2_validate,
    "bubbles-sim": cmd_bubbles_sim,
    "threshold": cmd_threshold,
    "ratio": cmd_ratio,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except NUMERIC_ERRORS as exc:
        print(f"tiltec {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError) as exc:
        print(f"tiltec {args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
