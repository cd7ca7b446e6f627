"""Console script ``series-inference``, see :ref:`Exit Codes` for its return values.

Every option can also be given inside a flat ``key=value`` file passed via ``--config``,
its keys are the long option names. Options given on the command line win.
"""
from argparse import Action
from argparse import ArgumentDefaultsHelpFormatter
from argparse import ArgumentParser
from argparse import ArgumentTypeError
from argparse import Namespace
from argparse import _StoreTrueAction
from logging.config import dictConfig
from pathlib import Path
from typing import Callable
from typing import Dict
from typing import List
from typing import Optional
from typing import Sequence
from typing import Tuple

import numpy as np

from . import __author__
from . import __license__
from . import __version__
from .basis import BasisSpec
from .basis import Family
from .basis import Functional
from .basis import KnotRule
from .basis import build_basis
from .candidate_set import CandidateRule
from .candidate_set import CandidateSet
from .candidate_set import build_candidate_set
from .candidate_set import fit_candidates
from .candidate_set import fit_selected
from .candidate_set import select_cv
from .exceptions import DataFormatError
from .exceptions import InputError
from .exceptions import MissingConfigError
from .exceptions import SeriesInferenceError
from .log import cli_logger
from .log import logging_config
from .plm import KappaMode
from .plm import plm_fit
from .plm import plm_robust_ci
from .reports import load_dataset
from .reports import load_matrix
from .reports import report_header
from .reports import write_frame
from .reports import write_json
from .series_fit import CrossKCorrelation
from .series_fit import Dataset
from .series_fit import evaluate
from .settings import config
from .settings import read_config_file
from .sim_harness import SimConfig
from .sim_harness import run_coverage_study
from .suptstat import CriticalValueMethod
from .suptstat import correlation_at
from .suptstat import default_grid
from .suptstat import make_band
from .suptstat import nested_homoskedastic_corr
from .suptstat import pointwise_critical_value
from .suptstat import robust_ci
from .suptstat import standard_ci
from .suptstat import uniform_band_critical_value
from .worker_helper import derive_seed

K_RULES = {
    "sim": CandidateRule.SIMULATION_RULE,
    "cv": CandidateRule.CV_ANCHORED,
    "explicit": CandidateRule.EXPLICIT,
}


def float_list(value: str) -> Tuple[float, ...]:
    """Comma separated floats, the format of every list valued option.

    >>> float_list("0.2, 0.5")
    (0.2, 0.5)
    """
    try:
        return tuple(float(item) for item in value.split(",") if item.strip())
    except ValueError:
        raise ArgumentTypeError(f"Expected comma separated numbers, got {value!r}")


def int_list(value: str) -> Tuple[int, ...]:
    """
    >>> int_list("10,30,60")
    (10, 30, 60)
    """
    try:
        return tuple(int(item) for item in value.split(",") if item.strip())
    except ValueError:
        raise ArgumentTypeError(f"Expected comma separated integers, got {value!r}")


def interval(value: str) -> Tuple[float, float]:
    bounds = float_list(value)
    if len(bounds) != 2:
        raise ArgumentTypeError(f"Expected two comma separated numbers, got {value!r}")
    return bounds[0], bounds[1]


def _add_common_arguments(parser: ArgumentParser) -> None:
    parser.add_argument(
        "--config",
        type=Path,
        default=None,
        help="Flat key=value file with option values",
    )
    parser.add_argument(
        "--output-dir",
        type=Path,
        default=None,
        help="Directory of the reports, defaults to $SERIES_INFERENCE_OUTPUT_DIR or .",
    )
    parser.add_argument(
        "--seed", type=int, default=0, help="Seed of all random streams"
    )
    parser.add_argument("--alpha", type=float, default=0.05, help="Level")
    parser.add_argument(
        "--threads", type=int, default=1, help="Worker threads, 0 uses all cores"
    )
    parser.add_argument("--verbose", action="store_true", help="Log debug messages")


def _add_data_arguments(parser: ArgumentParser, with_w: bool = False) -> None:
    parser.add_argument("input", type=Path, help="CSV file with a header row")
    parser.add_argument("--y-col", default="y", help="Name of the outcome column")
    parser.add_argument("--x-col", default="x", help="Name of the regressor column")
    if with_w:
        parser.add_argument("--w-col", default="w", help="Name of the linear regressor")


def _add_basis_arguments(parser: ArgumentParser) -> None:
    parser.add_argument(
        "--family", choices=[f.value for f in Family], default=Family.SPLINE.value
    )
    parser.add_argument(
        "--spline-order", type=int, default=3, help="3 is a quadratic spline"
    )
    parser.add_argument(
        "--knot-rule",
        choices=[r.value for r in KnotRule],
        default=KnotRule.EVENLY_SPACED.value,
    )
    parser.add_argument(
        "--support",
        type=interval,
        default=None,
        help="Support a,b of the basis, defaults to the range of x",
    )


def _add_candidate_arguments(parser: ArgumentParser) -> None:
    parser.add_argument(
        "--k-rule",
        choices=sorted(K_RULES),
        default="sim",
        help="""sim: all K between ceil(2n^(1/5)) and ceil(2n^(1/3)), explicit: the
        values of --k-list, cv: K_cv to ceil(c1 K_cv) with K_cv selected over --k-list
        or the sim rule""",
    )
    parser.add_argument("--k-list", type=int_list, default=None)
    parser.add_argument("--c1", type=float, default=2.0)


def _add_point_arguments(parser: ArgumentParser) -> None:
    parser.add_argument(
        "--x", type=float_list, default=(), help="Evaluation points, e.g. 0.2,0.5"
    )
    parser.add_argument(
        "--functional",
        choices=[f.value for f in Functional],
        default=Functional.VALUE.value,
    )


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(
        prog="series-inference",
        description="""Series regression with confidence intervals and bands that stay
        valid when the number of series terms is chosen from the data.""",
        epilog=f"{__license__} @ {__author__} - v{__version__}",
        formatter_class=ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=__version__)
    commands = parser.add_subparsers(dest="command", required=True)

    fit_parser = commands.add_parser(
        "fit",
        help="Fit all candidate specifications and select K by cross-validation",
        formatter_class=ArgumentDefaultsHelpFormatter,
    )
    ci_parser = commands.add_parser(
        "ci",
        help="Standard and robust confidence intervals and bands",
        formatter_class=ArgumentDefaultsHelpFormatter,
    )
    for sub in (fit_parser, ci_parser):
        _add_common_arguments(sub)
        _add_data_arguments(sub)
        _add_basis_arguments(sub)
        _add_candidate_arguments(sub)
        _add_point_arguments(sub)
    ci_parser.add_argument(
        "--draws", "-B", type=int, default=None, help="Gaussian draws per point"
    )
    ci_parser.add_argument(
        "--band", action="store_true", help="Compute uniform bands on a grid"
    )
    ci_parser.add_argument("--band-support", type=interval, default=None)
    ci_parser.add_argument("--grid-size", type=int, default=None)
    ci_parser.add_argument("--bootstrap-draws", type=int, default=None)

    critvals_parser = commands.add_parser(
        "critvals",
        help="Critical value from published standard errors or a correlation matrix",
        formatter_class=ArgumentDefaultsHelpFormatter,
    )
    _add_common_arguments(critvals_parser)
    source = critvals_parser.add_mutually_exclusive_group()
    source.add_argument(
        "--ses", type=float_list, default=None, help="Standard errors of nested models"
    )
    source.add_argument(
        "--sigma", type=Path, default=None, help="CSV file holding a correlation matrix"
    )
    critvals_parser.add_argument(
        "--estimates",
        type=float_list,
        default=None,
        help="Estimates belonging to --ses, adds intervals to the report",
    )
    critvals_parser.add_argument("--draws", "-B", type=int, default=None)

    plm_parser = commands.add_parser(
        "plm",
        help="Partially linear model with robust intervals for theta",
        formatter_class=ArgumentDefaultsHelpFormatter,
    )
    _add_common_arguments(plm_parser)
    _add_data_arguments(plm_parser, with_w=True)
    _add_basis_arguments(plm_parser)
    plm_parser.add_argument("--k-list", type=int_list, default=None)
    plm_parser.add_argument(
        "--se-mode", choices=[m.value for m in KappaMode], default=KappaMode.HC0.value
    )
    plm_parser.add_argument(
        "--corr-mode",
        choices=[KappaMode.CROSS_TERM_FULL.value, KappaMode.HC0.value],
        default=KappaMode.CROSS_TERM_FULL.value,
    )
    plm_parser.add_argument("--draws", "-B", type=int, default=None)

    simulate_parser = commands.add_parser(
        "simulate",
        help="Monte Carlo coverage study",
        formatter_class=ArgumentDefaultsHelpFormatter,
    )
    _add_common_arguments(simulate_parser)
    simulate_parser.add_argument("--model", type=int, choices=[1, 2, 3], default=1)
    simulate_parser.add_argument("--n", type=int, default=200)
    simulate_parser.add_argument("--reps", type=int, default=2000)
    simulate_parser.add_argument("--b-critical", type=int, default=1000)
    simulate_parser.add_argument("--b-bootstrap", type=int, default=1000)
    simulate_parser.add_argument(
        "--family", choices=[f.value for f in Family], default=Family.SPLINE.value
    )
    simulate_parser.add_argument("--spline-order", type=int, default=3)
    simulate_parser.add_argument(
        "--k-list", type=int_list, default=None, help="Replaces the sim rule"
    )
    simulate_parser.add_argument(
        "--eval-points", type=float_list, default=(0.2, 0.5, 0.8, 0.9)
    )
    simulate_parser.add_argument("--band-support", type=interval, default=(0.05, 0.95))
    simulate_parser.add_argument("--grid-size", type=int, default=91)
    simulate_parser.add_argument("--homoskedastic", action="store_true")
    simulate_parser.add_argument("--scale", type=float, default=1.0)
    simulate_parser.add_argument("--tolerate-failures", action="store_true")
    simulate_parser.add_argument(
        "--interior-knots",
        action="store_true",
        help="K counts interior knots only instead of all knots including both ends",
    )

    for command, sub in commands.choices.items():
        sub.set_defaults(handler=HANDLERS[command])
    return parser


def _truthy(key: str, value: str) -> bool:
    lowered = value.lower()
    if lowered in {"1", "true", "yes", "on"}:
        return True
    if lowered in {"0", "false", "no", "off", ""}:
        return False
    raise DataFormatError(f"Expected a boolean for {key!r}, got {value!r}")


def apply_config_file(parser: ArgumentParser, values: Dict[str, str]) -> None:
    """Installs the values of a config file as defaults of ``parser``.

    String defaults run through the option's ``type`` when argparse applies them, so
    the raw values are passed on unchanged except for flags.

    :raises MissingConfigError: If a key mirrors no option of the command.
    """
    actions: Dict[str, Action] = {action.dest: action for action in parser._actions}
    defaults: Dict[str, object] = {}
    for key, value in values.items():
        action = actions.get(key)
        if action is None or key in {"help", "config", "handler", "input"}:
            raise MissingConfigError(f"Unknown key {key!r} in config file")
        if isinstance(action, _StoreTrueAction):
            defaults[key] = _truthy(key, value)
        else:
            defaults[key] = value
    parser.set_defaults(**defaults)


def parse_arguments(argv: Optional[Sequence[str]] = None) -> Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config is not None:
        commands = parser._subparsers._group_actions[0]  # type: ignore
        subparser = commands.choices[args.command]  # type: ignore
        apply_config_file(subparser, read_config_file(args.config))
        args = parser.parse_args(argv)
    return args


def _resolved_arguments(args: Namespace) -> Dict[str, object]:
    return {
        key: value
        for key, value in sorted(vars(args).items())
        if key not in {"handler", "verbose"}
    }


def _output_dir(args: Namespace) -> Path:
    return Path(
        args.output_dir if args.output_dir is not None else config["OUTPUT_DIR"]
    )


def _basis_template(args: Namespace, data: Dataset) -> BasisSpec:
    support = args.support
    if support is None:
        support = (float(np.min(data.x)), float(np.max(data.x)))
    return BasisSpec(
        family=args.family,
        k=0,
        support=support,
        spline_order=args.spline_order,
        knot_rule=args.knot_rule,
    )


def _candidates(args: Namespace, data: Dataset, template: BasisSpec) -> CandidateSet:
    if args.k_rule not in K_RULES:
        raise InputError(
            f"Unknown K rule {args.k_rule!r}, expected one of {sorted(K_RULES)}"
        )
    rule = K_RULES[args.k_rule]
    if rule is CandidateRule.CV_ANCHORED:
        search = (
            CandidateSet(args.k_list)
            if args.k_list
            else build_candidate_set(CandidateRule.SIMULATION_RULE, data.n)
        )
        k_cv = select_cv(data, search, template, threads=args.threads).k_cv
        return build_candidate_set(rule, data.n, k_cv=k_cv, c1=args.c1)
    return build_candidate_set(rule, data.n, args.k_list)


def _fit_and_select(args: Namespace):
    data = load_dataset(args.input, args.y_col, args.x_col)
    template = _basis_template(args, data)
    candidates = _candidates(args, data, template)
    fits = fit_candidates(data, candidates, template, args.threads)
    selection = select_cv(data, candidates, template, fits=fits)
    return data, template, candidates, fits, selection


def _fit_summaries(fits, selection) -> List[dict]:
    return [
        {
            "K": k,
            "dimension": fit_k.dimension,
            "cv_score": selection.cv_scores[k],
            "beta_hat": fit_k.beta_hat,
            "knots": fit_k.basis_spec.knots,
        }
        for k, fit_k in sorted(fits.items())
    ]


def cmd_fit(args: Namespace) -> int:
    """Fits every candidate, reports the cross-validation scores and the estimates with
    their standard errors at the requested points."""
    data, _, candidates, fits, selection = _fit_and_select(args)
    points = []
    for x in args.x:
        estimates = {}
        for k, fit_k in sorted(fits.items()):
            estimate, se = evaluate(fit_k, [x], args.functional)
            estimates[str(k)] = {"estimate": estimate[0], "se": se[0]}
        points.append({"x": x, "estimates": estimates})
    write_json(
        _output_dir(args) / "report.json",
        {
            "n": data.n,
            "k_values": candidates.k_values,
            "fits": _fit_summaries(fits, selection),
            "selection": selection.to_dict(),
            "points": points,
        },
        report_header(args.command, _resolved_arguments(args), args.seed),
    )
    return 0


def cmd_ci(args: Namespace) -> int:
    """Standard intervals with the normal critical value and robust ones with the
    critical value simulated from the cross-K correlation, at every point and every
    candidate K. Optionally uniform bands for ``K_cv`` and ``K_cv+``."""
    data, template, candidates, fits, selection = _fit_and_select(args)
    k_labels = {"cv": selection.k_cv, **selection.bumped}
    points = []
    for position, x in enumerate(args.x):
        sigma = correlation_at(fits, x, args.functional)
        critical_value = pointwise_critical_value(
            sigma,
            args.alpha,
            args.draws,
            derive_seed(args.seed, 1, position),
            args.threads,
        )
        intervals = {}
        for k, fit_k in sorted(fits.items()):
            estimate, se = evaluate(fit_k, [x], args.functional)
            intervals[str(k)] = {
                "estimate": estimate[0],
                "se": se[0],
                "ci_standard": standard_ci(estimate[0], se[0], args.alpha).to_list(),
                "ci_robust": robust_ci(
                    estimate[0], se[0], critical_value.c_hat
                ).to_list(),
            }
        points.append(
            {
                "x": x,
                "sigma": sigma.to_dict(),
                "critical_value": critical_value.to_dict(),
                "intervals": intervals,
            }
        )
    payload = {
        "n": data.n,
        "k_values": candidates.k_values,
        "fits": _fit_summaries(fits, selection),
        "selection": selection.to_dict(),
        "selected": k_labels,
        "points": points,
    }
    if args.band:
        support = args.band_support or fits[selection.k_cv].basis_spec.support
        grid = default_grid(support, args.grid_size)
        band_value = uniform_band_critical_value(
            data,
            fits,
            grid,
            args.alpha,
            args.bootstrap_draws,
            derive_seed(args.seed, 2),
            args.threads,
            args.functional,
        )
        output_dir = _output_dir(args)
        header = report_header(args.command, _resolved_arguments(args), args.seed)
        bands = {}
        for label, filename in (("cv", "band.csv"), ("cv+", "band_cv_plus.csv")):
            fit_k = fit_selected(data, fits, template, k_labels[label])
            band = make_band(fit_k, grid, band_value.c_hat, args.functional)
            write_frame(output_dir / filename, band.to_frame(), header)
            bands[label] = {
                "k_used": band.k_used,
                "average_width": band.average_width,
                "file": filename,
            }
        payload["band"] = {"critical_value": band_value.to_dict(), "bands": bands}
    write_json(
        _output_dir(args) / "report.json",
        payload,
        report_header(args.command, _resolved_arguments(args), args.seed),
    )
    return 0


def cmd_critvals(args: Namespace) -> int:
    """Critical value for published estimates: the correlation comes from the standard
    errors of nested homoskedastic models or from a file."""
    if args.ses is not None:
        sigma = nested_homoskedastic_corr(args.ses)
        method = CriticalValueMethod.NESTED_SE_RATIO
    elif args.sigma is not None:
        matrix = load_matrix(args.sigma)
        sigma = CrossKCorrelation(
            sigma_hat=matrix,
            k_values=tuple(range(1, matrix.shape[0] + 1)),
            point_variances=np.ones(matrix.shape[0]),
            evaluation=str(args.sigma),
        )
        method = CriticalValueMethod.GAUSSIAN_SIM
    else:
        raise InputError("Either --ses or --sigma is required")
    critical_value = pointwise_critical_value(
        sigma, args.alpha, args.draws, args.seed, args.threads, method
    )
    payload: Dict[str, object] = {
        "critical_value": critical_value.to_dict(),
        "sigma": sigma.to_dict(),
    }
    if args.estimates is not None:
        if args.ses is None or len(args.estimates) != len(args.ses):
            raise InputError("--estimates requires --ses of the same length")
        payload["intervals"] = [
            {
                "estimate": estimate,
                "se": se,
                "ci_standard": standard_ci(estimate, se, args.alpha).to_list(),
                "ci_robust": robust_ci(estimate, se, critical_value.c_hat).to_list(),
            }
            for estimate, se in zip(args.estimates, args.ses)
        ]
    cli_logger.info("Critical value %.4f", critical_value.c_hat)
    write_json(
        _output_dir(args) / "critvals.json",
        payload,
        report_header(args.command, _resolved_arguments(args), args.seed),
    )
    return 0


def cmd_plm(args: Namespace) -> int:
    data = load_dataset(args.input, args.y_col, args.x_col, args.w_col)
    template = _basis_template(args, data)
    k_values = (
        CandidateSet(args.k_list).k_values
        if args.k_list
        else build_candidate_set(CandidateRule.SIMULATION_RULE, data.n).k_values
    )
    fits = []
    for k in k_values:
        spec = template.with_k(k).resolve(data.x)
        fits.append(plm_fit(data, build_basis(spec, data.x)))
    inference = plm_robust_ci(
        fits,
        args.alpha,
        args.draws,
        args.seed,
        se_mode=args.se_mode,
        corr_mode=args.corr_mode,
        threads=args.threads,
    )
    write_json(
        _output_dir(args) / "plm_report.json",
        {"n": data.n, **inference.to_dict()},
        report_header(args.command, _resolved_arguments(args), args.seed),
    )
    return 0


def cmd_simulate(args: Namespace) -> int:
    sim_config = SimConfig(
        model_id=args.model,
        n=args.n,
        n_reps=args.reps,
        b_critical=args.b_critical,
        b_bootstrap=args.b_bootstrap,
        alpha=args.alpha,
        candidate_rule=(
            CandidateRule.EXPLICIT if args.k_list else CandidateRule.SIMULATION_RULE
        ),
        k_values=args.k_list,
        family=Family(args.family),
        spline_order=args.spline_order,
        eval_points=tuple(args.eval_points),
        band_support=args.band_support,
        band_grid_size=args.grid_size,
        heteroskedastic=not args.homoskedastic,
        master_seed=args.seed,
        scale=args.scale,
        threads=args.threads,
        tolerate_failures=args.tolerate_failures,
        count_boundary_knots=not args.interior_knots,
    )
    report = run_coverage_study(sim_config)
    output_dir = _output_dir(args)
    header = report_header(args.command, _resolved_arguments(args), args.seed)
    write_json(output_dir / "simulation.json", report.to_dict(), header)
    write_frame(output_dir / "coverage.csv", report.to_frame(), header)
    return 0


HANDLERS: Dict[str, Callable[[Namespace], int]] = {
    "fit": cmd_fit,
    "ci": cmd_ci,
    "critvals": cmd_critvals,
    "plm": cmd_plm,
    "simulate": cmd_simulate,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = parse_arguments(argv)
    except SeriesInferenceError as e:
        dictConfig(logging_config())
        cli_logger.error("%s", e)
        return InputError.exit_code
    except OSError as e:
        dictConfig(logging_config())
        cli_logger.error("Could not read config file: %s", e)
        return InputError.exit_code
    dictConfig(logging_config(args.verbose))
    try:
        return args.handler(args)
    except SeriesInferenceError as e:
        cli_logger.error("%s", e)
        return getattr(e, "exit_code", 1)
    except OSError as e:
        cli_logger.error("%s", e)
        return InputError.exit_code
    except Exception:
        cli_logger.exception("Unhandled exception.")
        return 1


if __name__ == "__main__":
    exit(main())
