"""Command line front end: ``gatematch {estimate,ci,simulate,report}``.

Options may also come from a plain ``key=value`` file given with
``--config``. Keys are option names with dashes or underscores. Explicit
flags win over file values. Every output file starts with ``# key=value``
lines recording the fully resolved options. Such a file can itself be
passed back through ``--config`` to reproduce the run.

Exit codes: 0 success, 1 data error, 2 usage error, 3 numerical failure.
Failures print one line ``error: code=<n> type=<name> message=<text>`` to
standard error.
"""

from __future__ import annotations

import argparse
import re
import sys
from pathlib import Path

import pandas as pd

from . import __version__
from .data import (
    DEFAULT_GRID,
    EvaluationGrid,
    Schema,
    curves_to_csv,
    format_header,
    load_dataset,
)
from .estimators import TAGS, EstimatorConfig, estimate_many, normalize_tag
from .exceptions import GateError
from .inference import SubsampleConfig, attach_interval, subsample_ci_many
from .matching import METRICS, MatchConfig
from .nuisance import DesignSpec
from .simulation import CASES, compare_metrics, frame_to_csv, run_monte_carlo

EXIT_OK, EXIT_DATA, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3

# options that never enter the recorded header
_NOT_RECORDED = {"config", "output", "output_dir", "threads", "func", "command"}

_NEGATIVE_VALUE = re.compile(r"^-\d|^-\.\d")


class UsageError(Exception):
    """Invalid command line: bad flag, value or option combination."""


class _Parser(argparse.ArgumentParser):
    """Reports parse errors through :class:`UsageError` so they get the one-line format."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _estimator_list(text):
    try:
        return [normalize_tag(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _grid(text):
    try:
        return EvaluationGrid.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _bool(text):
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off", ""):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _optional_float(text):
    return None if str(text).strip() in ("", "None") else float(text)


def _optional_int(text):
    return None if str(text).strip() in ("", "None") else int(text)


def _add_data_options(p):
    g = p.add_argument_group("data")
    g.add_argument("--data", required=True, help="input CSV with a header row")
    g.add_argument("--y-col", default="y", help="outcome column (default: y)")
    g.add_argument("--a-col", default="a", help="treatment column, coded 0/1 (default: a)")
    g.add_argument("--z-col", default="z", help="subgroup variable column (default: z)")
    g.add_argument("--x-cols", default="",
                   help="comma-separated covariate columns (default: all but y and a)")
    g.add_argument("--z-kind", choices=("continuous", "discrete"), default="continuous")


def _add_estimator_options(p, default_estimators="MATCH"):
    g = p.add_argument_group("estimation")
    g.add_argument("--estimator", type=_estimator_list, default=default_estimators,
                   help=f"comma-separated subset of {', '.join(TAGS)} "
                        f"(case-insensitive, match.bc accepted; default: {default_estimators})")
    g.add_argument("--grid", type=_grid, default=None,
                   help="start:end:step (inclusive) or comma list; "
                        "default -0.4,-0.2,0,0.2,0.4")
    g.add_argument("--m", type=int, default=5, help="matches per unit (default: 5)")
    g.add_argument("--metric", choices=METRICS, default="euclidean")
    g.add_argument("--standardize", type=_bool, nargs="?", const=True, default=False,
                   help="scale covariates to unit sd before matching")
    g.add_argument("--kernel", choices=("epanechnikov", "gaussian"), default="epanechnikov")
    g.add_argument("--bandwidth", type=_optional_float, default=None,
                   help="fixed bandwidth (default: rule of thumb)")
    g.add_argument("--pi-bandwidth", type=_optional_float, default=None,
                   help="fixed propensity bandwidth for PSR (default: rule of thumb)")
    g.add_argument("--propensity-terms", default="",
                   help='propensity design, e.g. "x1,x2,x3" or "x1^2,x2^2" (default: main effects)')
    g.add_argument("--outcome-terms", default="",
                   help="outcome design in the same syntax (default: main effects)")
    g.add_argument("--k-folds", type=int, default=5, help="cross-fitting folds for MATCH_BC")
    g.add_argument("--clip-eps", type=float, default=1e-12, help="propensity clipping threshold")


def _add_subsample_options(p, reps_flag):
    g = p.add_argument_group("subsampling")
    g.add_argument("--r", type=float, default=2.0 / 3.0,
                   help="subsample size exponent (default: 2/3)")
    g.add_argument(reps_flag, dest="b_reps", type=int, default=200,
                   help="number of subsamples (default: 200)")
    g.add_argument("--level", type=float, default=0.95, help="coverage level (default: 0.95)")
    g.add_argument("--rescale", type=_bool, nargs="?", const=True, default=True,
                   help="rate-rescaled interval centred on the full-sample estimate; "
                        "false gives raw replicate quantiles (default: true)")


def _add_common(p):
    p.add_argument("--config", help="key=value file; explicit flags override it")
    p.add_argument("--seed", type=_optional_int, default=None, help="master random seed")
    p.add_argument("--threads", type=int, default=1,
                   help="worker processes (results do not depend on it)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="gatematch",
        description="Group average treatment effects by matching and competing estimators.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="estimate GATE curves from a CSV file")
    _add_data_options(p)
    _add_estimator_options(p)
    _add_common(p)
    p.add_argument("--output", "-o", help="output CSV (default: standard output)")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("ci", help="GATE curves with subsampling confidence intervals")
    _add_data_options(p)
    _add_estimator_options(p)
    _add_subsample_options(p, "--reps")
    _add_common(p)
    p.add_argument("--output", "-o", help="output CSV (default: standard output)")
    p.set_defaults(func=cmd_ci)

    p = sub.add_parser("simulate", help="Monte Carlo study of cases C1-C12")
    p.add_argument("--case", default="C1",
                   help="case id C1..C12, a comma list, or 'all' (default: C1)")
    p.add_argument("--n", type=int, default=2000, help="sample size (default: 2000)")
    p.add_argument("--reps", type=int, default=1000, help="Monte Carlo replicates")
    p.add_argument("--drop-x2", type=_bool, nargs="?", const=True, default=False,
                   help="hide x2 from the estimators (missing-confounder variant)")
    p.add_argument("--with-ci", type=_bool, nargs="?", const=True, default=False,
                   help="run subsampling per replicate and report coverage")
    _add_estimator_options(p, default_estimators=",".join(TAGS))
    _add_subsample_options(p, "--b-reps")
    _add_common(p)
    p.add_argument("--output-dir", default=".", help="directory for the report CSVs")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="comparison tables from tidy simulation reports")
    p.add_argument("--input", nargs="+", required=True, help="tidy report CSV files")
    p.add_argument("--config", help="key=value file; explicit flags override it")
    p.add_argument("--output-dir", default=".", help="directory for the tables")
    p.set_defaults(func=cmd_report)
    return parser


def _normalize_argv(argv):
    """Attach negative numbers to the preceding option (``--grid -0.4:0.4:0.2``)."""
    out = []
    for tok in argv:
        if out and out[-1].startswith("--") and "=" not in out[-1] and _NEGATIVE_VALUE.match(tok):
            out[-1] = f"{out[-1]}={tok}"
        else:
            out.append(tok)
    return out


def read_config(path) -> dict:
    """Parse a ``key=value`` file.

    Lines may carry a ``# `` prefix, so an output header doubles as a
    config. ``diagnostic.*`` keys and plain comments are skipped. Reading
    stops at the first line that is not a setting.
    """
    values = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if line.startswith("#"):
                line = line[1:].strip()
                if "=" not in line:
                    continue
            if not line:
                continue
            if "=" not in line:
                break
            key, _, value = line.partition("=")
            key = key.strip().replace("-", "_")
            if key.startswith("diagnostic."):
                continue
            values[key] = value.strip()
    return values


def _subparser(parser, command):
    for action in parser._subparsers._group_actions:
        return action.choices[command]
    raise KeyError(command)


def _config_path(argv):
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.partition("=")[2]
    return None


def _apply_config(parser, argv):
    """Parse ``argv`` with config-file values installed as defaults."""
    path = _config_path(argv)
    command = next((t for t in argv if t in ("estimate", "ci", "simulate", "report")), None)
    if path is None or command is None:
        return parser.parse_args(argv)
    try:
        values = read_config(path)
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from None
    values.pop("command", None)
    values.pop("version", None)
    sub = _subparser(parser, command)
    known = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value in values.items():
        if key not in known or key in ("help", "config"):
            raise UsageError(f"unknown config key {key!r}")
        action = known[key]
        if action.nargs == "+":
            value = value.split(",")
        elif action.type is not None:
            try:
                value = action.type(value)
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise UsageError(f"config key {key!r}: {exc}") from None
        defaults[key] = value
    for action in sub._actions:
        if action.dest in defaults:
            action.required = False
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _format_option(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, EvaluationGrid):
        return ",".join(repr(p) for p in value.points)
    if isinstance(value, (list, tuple)):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def resolved_config(args) -> dict:
    """Options in parser order, formatted for the output header."""
    out = {"command": args.command, "version": __version__}
    for key, value in vars(args).items():
        if key in _NOT_RECORDED:
            continue
        if key == "grid" and value is None:
            value = DEFAULT_GRID
        out[key] = _format_option(value)
    return out


def _schema(args):
    x = tuple(c.strip() for c in args.x_cols.split(",") if c.strip()) or None
    return Schema(y=args.y_col, a=args.a_col, z=args.z_col, x=x, z_kind=args.z_kind)


def _configs(args, names):
    def spec(text):
        if not text.strip():
            return None
        try:
            return DesignSpec.parse(text, names)
        except ValueError as exc:
            raise UsageError(str(exc)) from None

    match = MatchConfig(args.m, args.metric, args.standardize)
    common = dict(
        match=match,
        propensity_spec=spec(args.propensity_terms),
        outcome_spec=spec(args.outcome_terms),
        bandwidth=args.bandwidth,
        pi_bandwidth=args.pi_bandwidth,
        kernel=args.kernel,
        k_folds=args.k_folds,
        clip_eps=args.clip_eps,
        seed=args.seed,
    )
    tags = args.estimator
    if len(set(tags)) != len(tags):
        raise UsageError("an estimator is listed twice")
    return [EstimatorConfig(t, **common) for t in tags]


def _needs_seed(args, cfgs):
    if args.seed is None and any(not c.deterministic for c in cfgs):
        raise UsageError("--seed is required for MATCH_BC (cross-fitting is randomized)")


def _write(text, path):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _raise_first_failure(curves):
    for res in curves.values():
        if isinstance(res, Exception):
            raise res


def _diagnostics(curves):
    diag = {}
    for tag, curve in curves.items():
        for k, v in curve.diagnostics.items():
            diag[f"{tag}.{k}"] = v
    return diag


def cmd_estimate(args) -> int:
    d = load_dataset(args.data, _schema(args))
    cfgs = _configs(args, d.x_names)
    _needs_seed(args, cfgs)
    grid = args.grid or DEFAULT_GRID
    curves = estimate_many(d, grid, cfgs)
    _raise_first_failure(curves)
    header = format_header(resolved_config(args), _diagnostics(curves))
    _write(curves_to_csv(list(curves.values()), header), args.output)
    return EXIT_OK


def cmd_ci(args) -> int:
    if args.seed is None:
        raise UsageError("--seed is required for ci")
    d = load_dataset(args.data, _schema(args))
    cfgs = _configs(args, d.x_names)
    grid = args.grid or DEFAULT_GRID
    sub = SubsampleConfig(args.r, args.b_reps, args.level, args.seed, args.rescale)
    curves = estimate_many(d, grid, cfgs)
    _raise_first_failure(curves)
    intervals = subsample_ci_many(d, cfgs, grid, sub)
    with_ci = {tag: attach_interval(curves[tag], intervals[tag]) for tag in curves}
    header = format_header(resolved_config(args), _diagnostics(with_ci))
    _write(curves_to_csv(list(with_ci.values()), header), args.output)
    return EXIT_OK


def _cases(text):
    if text.strip().lower() == "all":
        return list(CASES)
    ids = [c.strip().upper() for c in text.split(",") if c.strip()]
    for cid in ids:
        if cid not in CASES:
            raise UsageError(f"unknown case {cid!r}; choose C1..C12 or all")
    return ids


def cmd_simulate(args) -> int:
    if args.seed is None:
        raise UsageError("--seed is required for simulate")
    if args.reps < 2:
        raise UsageError("--reps must be at least 2")
    if args.threads < 1:
        raise UsageError("--threads must be at least 1")
    grid = args.grid or DEFAULT_GRID
    sub = SubsampleConfig(args.r, args.b_reps, args.level, None, args.rescale)
    reports = []
    for cid in _cases(args.case):
        spec = CASES[cid].without_x2() if args.drop_x2 else CASES[cid]
        # working models not given on the command line default to the case's own
        names = ("x1", "x3") if args.drop_x2 else ("x1", "x2", "x3")
        cfgs = _configs(args, names)
        reports.append(run_monte_carlo(
            spec, args.n, args.reps, cfgs, grid, args.seed,
            with_ci=args.with_ci, sub=sub, workers=args.threads,
        ))
    header = format_header(resolved_config(args))
    _write_tables(compare_metrics(reports), header, args.output_dir)
    return EXIT_OK


def _write_tables(tables, header, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report_tidy.csv").write_text(frame_to_csv(tables["tidy"], header))
    (out / "report_bias_sd.csv").write_text(frame_to_csv(tables["bias_sd"], header))
    (out / "report_mse.csv").write_text(frame_to_csv(tables["mse"], header))
    (out / "report_ranking.csv").write_text(frame_to_csv(tables["ranking"], header))


def cmd_report(args) -> int:
    frames = []
    for path in args.input:
        try:
            frames.append(pd.read_csv(path, comment="#", float_precision="round_trip"))
        except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
            raise FileNotFoundError(f"cannot read report {path}: {exc}") from None
    tables = compare_metrics(frames)
    header = format_header({"command": "report", "version": __version__,
                            "input": ",".join(args.input)})
    _write_tables(tables, header, args.output_dir)
    return EXIT_OK


def _fail(code, exc):
    msg = str(exc).replace("\n", " ")
    print(f"error: code={code} type={type(exc).__name__} message={msg}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, _normalize_argv(argv))
    except SystemExit as exc:
        return int(exc.code or 0)
    except UsageError as exc:
        return _fail(EXIT_USAGE, exc)
    try:
        return args.func(args)
    except UsageError as exc:
        return _fail(EXIT_USAGE, exc)
    except GateError as exc:
        return _fail(exc.exit_code, exc)
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        return _fail(EXIT_DATA, exc)
    except (ValueError, ArithmeticError) as exc:
        return _fail(EXIT_NUMERIC if isinstance(exc, ArithmeticError) else EXIT_USAGE, exc)


if __name__ == "__main__":
    sys.exit(main())
