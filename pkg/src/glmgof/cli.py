"""Command-line interface.

Subcommands: ``gof`` and ``group`` run the tests on a CSV dataset,
``simulate`` runs a named Monte Carlo scenario from the catalog, and
``fit`` estimates a single penalized GLM.  Results go to stdout (or
``--out``) as JSON or CSV; logs and timing go to stderr and are silenced
by ``--quiet``.

Exit codes: 0 success, 1 any error (including usage), 2 a completed run
whose test direction was degenerate (no decision; result still emitted).

Index specifications on the command line are 1-based: ``"7"``,
``"1,4,9"``, ``"5..100"``, comma-combinations of these, ``"all"``, and
``"all-but <spec>"`` for complements.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time

import numpy as np

from .families import get_family
from .forest import predictor_names
from .gof import GofConfig, gof_test
from .group import GroupTestConfig, group_test
from .simulate import emit_report, get_scenario, run_mc, scenario_names
from .solvers import glm_lasso, glm_lasso_cv


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the exit-code contract
    reserves 2 for degenerate results, so remap usage errors to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, "%s: error: %s\n" % (self.prog, message))


def parse_index_spec(text: str, p: int) -> np.ndarray:
    """Parse a 1-based index specification into sorted 0-based indices."""
    spec = text.strip()
    if not spec:
        raise ValueError("empty index specification")
    if spec == "all":
        return np.arange(p, dtype=np.int64)
    if spec.startswith("all-but"):
        rest = spec[len("all-but"):].strip()
        drop = set(parse_index_spec(rest, p).tolist())
        keep = [j for j in range(p) if j not in drop]
        if not keep:
            raise ValueError("'all-but' removes every index")
        return np.asarray(keep, dtype=np.int64)
    out: set = set()
    for token in spec.split(","):
        token = token.strip()
        if not token:
            raise ValueError("empty token in index specification %r" % text)
        if ".." in token:
            lo_s, _, hi_s = token.partition("..")
            lo, hi = _parse_index(lo_s, p), _parse_index(hi_s, p)
            if lo > hi:
                raise ValueError("descending range %r" % token)
            out.update(range(lo - 1, hi))
        else:
            out.add(_parse_index(token, p) - 1)
    return np.asarray(sorted(out), dtype=np.int64)


def _parse_index(token: str, p: int) -> int:
    try:
        k = int(token.strip())
    except ValueError:
        raise ValueError("invalid index %r" % token.strip()) from None
    if not (1 <= k <= p):
        raise ValueError("index %d out of range 1..%d" % (k, p))
    return k


def _read_dataset(path: str, response: str):
    """Read a headered CSV; return (X, y, feature_names).

    All cells must parse as decimal floats.  Errors name the offending
    file line and column.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ValueError("cannot open %r: %s" % (path, exc)) from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError("%s: empty file, expected a header row"
                             % path) from None
        header = [h.strip() for h in header]
        if response not in header:
            raise ValueError(
                "%s: no column named %r; columns are: %s"
                % (path, response, ", ".join(header)))
        ycol = header.index(response)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(
                    "%s line %d: expected %d fields, got %d"
                    % (path, lineno, len(header), len(row)))
            vals = []
            for col, cell in zip(header, row):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise ValueError(
                        "%s line %d, column %r: cannot parse %r as a "
                        "number" % (path, lineno, col, cell)) from None
            rows.append(vals)
    if not rows:
        raise ValueError("%s: no data rows" % path)
    data = np.asarray(rows, dtype=np.float64)
    y = data[:, ycol]
    X = np.delete(data, ycol, axis=1)
    names = [h for i, h in enumerate(header) if i != ycol]
    return X, y, names


def _resolve_threads(value) -> int:
    if value is not None:
        if value < 1:
            raise ValueError("--threads must be at least 1")
        return int(value)
    env = os.environ.get("GRP_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValueError("GRP_THREADS=%r is not an integer" % env) \
                from None
        if n < 1:
            raise ValueError("GRP_THREADS must be at least 1")
        return n
    return os.cpu_count() or 1


def _jsonable(obj):
    """Convert numpy containers/scalars and non-finite floats for JSON."""
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _write_output(text: str, out_path) -> None:
    if out_path is None:
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        with open(out_path, "w", newline="") as fh:
            fh.write(text)


def _log(args, msg: str) -> None:
    if not getattr(args, "quiet", False):
        print(msg, file=sys.stderr)


def _lambda_arg(text: str):
    if text == "cv":
        return "cv"
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            "expected 'cv' or a number, got %r" % text) from None
    if v < 0:
        raise argparse.ArgumentTypeError("penalty must be non-negative")
    return v


def _lambda_sq_arg(text: str):
    if text == "default-rate":
        return "default-rate"
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            "expected 'default-rate' or a number, got %r" % text) from None
    if v < 0:
        raise argparse.ArgumentTypeError("penalty must be non-negative")
    return v


def _add_data_args(sp) -> None:
    sp.add_argument("csv", help="input CSV file (first row is the header)")
    sp.add_argument("--response", required=True,
                    help="name of the response column")
    sp.add_argument("--family", required=True,
                    choices=("logistic", "poisson", "gaussian"))


def _add_common_args(sp, *, seed_default=0) -> None:
    sp.add_argument("--seed", type=int, default=seed_default,
                    help="RNG seed (default 0)" if seed_default is not None
                    else "RNG seed (required)")
    sp.add_argument("--threads", type=int, default=None,
                    help="worker threads (default: GRP_THREADS env var, "
                         "then all cores)")
    sp.add_argument("--out", default=None,
                    help="write the result here instead of stdout")
    sp.add_argument("--quiet", action="store_true",
                    help="suppress log output on stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="glmgof",
                     description="Residual-prediction tests for "
                                 "high-dimensional GLMs")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    g = sub.add_parser("gof", help="goodness-of-fit test on CSV data")
    _add_data_args(g)
    _add_common_args(g)
    g.add_argument("--split-fraction", type=float, default=0.5,
                   help="auxiliary-half fraction (default 0.5)")
    g.add_argument("--lambda-main", type=_lambda_arg, default="cv",
                   metavar="VALUE|cv", help="main-fit penalty")
    g.add_argument("--lambda-aux", type=_lambda_arg, default="cv",
                   metavar="VALUE|cv", help="auxiliary-fit penalty")
    g.add_argument("--lambda-sq", type=_lambda_sq_arg,
                   default="default-rate", metavar="VALUE|default-rate",
                   help="direction-fit penalty")
    g.add_argument("--predictor", default="forest",
                   choices=predictor_names())
    g.add_argument("--trees", type=int, default=None,
                   help="forest size (predictor-specific)")
    g.add_argument("--min-leaf", type=int, default=None)
    g.add_argument("--mtry", type=int, default=None)
    g.add_argument("--folds", type=int, default=10,
                   help="cross-validation folds (default 10)")
    g.add_argument("--rule", default="min_deviance",
                   choices=("min_deviance", "one_se"))
    g.add_argument("--no-exact-orth", action="store_true",
                   help="penalize the main-fit support in the direction "
                        "fit instead of exempting it")
    g.add_argument("--two-sided", action="store_true",
                   help="report a two-sided p-value")
    g.set_defaults(func=_cmd_gof)

    q = sub.add_parser("group", help="group-significance test on CSV data")
    _add_data_args(q)
    _add_common_args(q)
    q.add_argument("--group", required=True,
                   help="1-based indices of the tested features, counted "
                        "among non-response columns (e.g. '5..100')")
    q.add_argument("--B", type=int, default=1000, dest="bootstrap_draws",
                   help="multiplier bootstrap draws (default 1000)")
    q.add_argument("--lambda", type=_lambda_arg, default="cv",
                   dest="lambda_main", metavar="VALUE|cv",
                   help="penalty for the fit on the kept columns")
    q.add_argument("--lambda-nw", type=_lambda_sq_arg,
                   default="default-rate", metavar="VALUE|default-rate",
                   help="nodewise direction penalty")
    q.add_argument("--folds", type=int, default=10)
    q.add_argument("--rule", default="min_deviance",
                   choices=("min_deviance", "one_se"))
    q.set_defaults(func=_cmd_group)

    s = sub.add_parser("simulate", help="run a catalog Monte Carlo study")
    s.add_argument("--scenario", default=None,
                   help="catalog name (see --list-scenarios)")
    s.add_argument("--reps", type=int, default=None,
                   help="number of replications")
    s.add_argument("--level", type=float, default=0.05,
                   help="rejection level (default 0.05)")
    s.add_argument("--sigma", type=float, default=None,
                   help="override the misspecification scale")
    s.add_argument("--theta", type=float, default=None,
                   help="override the tested-group signal (group "
                        "scenarios only)")
    s.add_argument("--rule", default="min_deviance",
                   choices=("min_deviance", "one_se"),
                   help="CV selection rule for the tests' penalized fits")
    s.add_argument("--B", type=int, default=None, dest="bootstrap_draws",
                   help="override bootstrap draws (group scenarios)")
    s.add_argument("--format", default="json", choices=("csv", "json"),
                   help="report format (default json)")
    s.add_argument("--list-scenarios", action="store_true",
                   help="print catalog names and exit")
    _add_common_args(s, seed_default=None)
    s.set_defaults(func=_cmd_simulate)

    f = sub.add_parser("fit", help="fit one penalized GLM on CSV data")
    _add_data_args(f)
    _add_common_args(f)
    f.add_argument("--lambda", type=_lambda_arg, default="cv",
                   dest="lam", metavar="VALUE|cv",
                   help="penalty level, or 'cv' to cross-validate")
    f.add_argument("--folds", type=int, default=10)
    f.add_argument("--rule", default="min_deviance",
                   choices=("min_deviance", "one_se"))
    f.set_defaults(func=_cmd_fit)
    return parser


def _cmd_gof(args) -> int:
    X, y, names = _read_dataset(args.csv, args.response)
    threads = _resolve_threads(args.threads)
    params = {}
    if args.trees is not None:
        params["num_trees"] = args.trees
    if args.min_leaf is not None:
        params["min_leaf"] = args.min_leaf
    if args.mtry is not None:
        params["mtry"] = args.mtry
    cfg = GofConfig(
        split_fraction=args.split_fraction, lambda_main=args.lambda_main,
        lambda_aux=args.lambda_aux, lambda_sq=args.lambda_sq,
        predictor=args.predictor, predictor_params=params,
        exact_orthogonalization=not args.no_exact_orth,
        two_sided=args.two_sided, num_folds=args.folds,
        selection_rule=args.rule, seed=args.seed, threads=threads)
    _log(args, "gof: n=%d p=%d family=%s threads=%d"
         % (X.shape[0], X.shape[1], args.family, threads))
    t0 = time.perf_counter()
    res = gof_test(X, y, args.family, cfg)
    _log(args, "gof: finished in %.2fs" % (time.perf_counter() - t0))
    doc = _jsonable({
        "test": "gof",
        "family": res.family,
        "statistic": res.statistic,
        "p_value": res.p_value,
        "degenerate": res.degenerate,
        "two_sided": args.two_sided,
        "direction_sup_norm": res.direction_sup_norm,
        "kkt_near_ortho": res.kkt_near_ortho,
        "exempt_orthogonality": res.exempt_orthogonality,
        "support_main": [names[j] for j in res.support_main],
        "lambda_main": res.lambda_main,
        "lambda_aux": res.lambda_aux,
        "lambda_sq": res.lambda_sq,
        "n_main": res.n_main,
        "n_aux": res.n_aux,
        "seed": args.seed,
        "message": res.message,
    })
    _write_output(json.dumps(doc, indent=2) + "\n", args.out)
    return 2 if res.degenerate else 0


def _cmd_group(args) -> int:
    X, y, names = _read_dataset(args.csv, args.response)
    threads = _resolve_threads(args.threads)
    group = parse_index_spec(args.group, X.shape[1])
    if group.size >= X.shape[1]:
        raise ValueError("--group must leave at least one column out")
    cfg = GroupTestConfig(
        bootstrap_draws=args.bootstrap_draws, lambda_main=args.lambda_main,
        lambda_nw=args.lambda_nw, num_folds=args.folds,
        selection_rule=args.rule, seed=args.seed, threads=threads)
    _log(args, "group: n=%d p=%d |G|=%d B=%d threads=%d"
         % (X.shape[0], X.shape[1], group.size, args.bootstrap_draws,
            threads))
    t0 = time.perf_counter()
    res = group_test(X, y, group, args.family, cfg)
    _log(args, "group: finished in %.2fs" % (time.perf_counter() - t0))
    boot = res.bootstrap_stats
    doc = _jsonable({
        "test": "group",
        "family": res.family,
        "statistic": res.statistic,
        "p_value": res.p_value,
        "group": [int(j) + 1 for j in res.group],
        "group_names": [names[j] for j in res.group],
        "per_feature_stats": {names[j]: v
                              for j, v in res.per_feature_stats.items()},
        "bootstrap": {
            "draws": int(boot.size),
            "min": float(np.min(boot)),
            "median": float(np.median(boot)),
            "max": float(np.max(boot)),
        },
        "degenerate_features": [names[j] for j in res.degenerate_features],
        "lambda_main": res.lambda_main,
        "lambda_nw": res.lambda_nw,
        "n": res.n,
        "p": res.p,
        "seed": args.seed,
    })
    _write_output(json.dumps(doc, indent=2) + "\n", args.out)
    return 0


def _cmd_simulate(args) -> int:
    if args.list_scenarios:
        sys.stdout.write("\n".join(scenario_names()) + "\n")
        return 0
    if args.scenario is None:
        raise ValueError("--scenario is required (or --list-scenarios)")
    if args.seed is None:
        raise ValueError("--seed is required for simulate")
    if args.reps is None or args.reps < 1:
        raise ValueError("--reps must be a positive integer")
    scenario = get_scenario(args.scenario)
    overrides = {}
    if args.sigma is not None:
        overrides["sigma"] = args.sigma
    if args.theta is not None:
        if scenario.theta_index is None:
            raise ValueError("scenario %r has no theta slot"
                             % scenario.name)
        overrides["theta"] = args.theta
    if args.bootstrap_draws is not None:
        overrides["bootstrap_draws"] = args.bootstrap_draws
    if overrides:
        scenario = scenario.with_overrides(**overrides)
    threads = _resolve_threads(args.threads)
    _log(args, "simulate: scenario=%s reps=%d level=%g seed=%d threads=%d"
         % (scenario.name, args.reps, args.level, args.seed, threads))

    done_marks = max(1, args.reps // 10)

    def progress(done, total):
        if not args.quiet and done % done_marks == 0:
            print("simulate: %d/%d replications" % (done, total),
                  file=sys.stderr)

    # mirrors run_mc's own defaults apart from the selection rule
    gof_config = GofConfig(split_fraction=scenario.split_fraction,
                           selection_rule=args.rule)
    group_config = GroupTestConfig(bootstrap_draws=scenario.bootstrap_draws,
                                   selection_rule=args.rule)
    report = run_mc(scenario, args.reps, level=args.level, seed=args.seed,
                    threads=threads, gof_config=gof_config,
                    group_config=group_config, log=progress)
    text = emit_report(report, fmt=args.format, include_timing=False)
    _write_output(text, args.out)
    _log(args, "simulate: rejection_rate=%.4f over %d reps "
         "(degenerate=%d, failures=%d) in %.1fs"
         % (report.rejection_rate, report.reps, report.degenerate_count,
            report.failures, report.wall_time))
    return 0


def _cmd_fit(args) -> int:
    X, y, names = _read_dataset(args.csv, args.response)
    threads = _resolve_threads(args.threads)
    t0 = time.perf_counter()
    cv_block = None
    if args.lam == "cv":
        cv = glm_lasso_cv(X, y, args.family, num_folds=args.folds,
                          selection_rule=args.rule, seed=args.seed,
                          threads=threads)
        fit = cv.fit
        cv_block = {
            "lambda_chosen": cv.lambda_chosen,
            "selected_index": cv.selected_index,
            "rule": args.rule,
            "folds": args.folds,
        }
    else:
        fit = glm_lasso(X, y, args.family, args.lam)
    _log(args, "fit: finished in %.2fs" % (time.perf_counter() - t0))
    support = fit.support
    doc = _jsonable({
        "test": "fit",
        "family": args.family,
        "n": X.shape[0],
        "p": X.shape[1],
        "lambda": fit.lam,
        "intercept": fit.intercept,
        "coefficients": {names[j]: float(fit.beta[j]) for j in support},
        "support": [names[j] for j in support],
        "support_size": int(support.size),
        "kkt_violation": fit.kkt_violation,
        "converged": fit.converged,
        "iterations": fit.iterations,
        "objective": fit.objective,
        "cv": cv_block,
        "seed": args.seed,
    })
    _write_output(json.dumps(doc, indent=2) + "\n", args.out)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits directly on usage errors and --help; surface the
        # code as a return value so callers can invoke main() in-process
        return int(exc.code or 0)
    try:
        return args.func(args)
    except BrokenPipeError:
        return 1
    except Exception as exc:
        print("glmgof: error: %s" % exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
