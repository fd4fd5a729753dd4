"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 runtime or IO error, 3 failed
verification.
"""
import argparse
import csv
import sys

from . import __version__
from .config import ExperimentConfig, load_config
from .corruption import MODELS, CorruptionSpec, corrupt, generate_gaussian_system, load_system, save_system
from .errors import ConfigError, QRKError
from .harness import compare_methods, run_experiment, verify
from .linalg import check_row_normalized, read_matrix
from .solvers import STRATEGIES, SolverConfig, run_solver
from .spectral import condition_lhs, convergence_rate, corollary_threshold, heuristic, heuristic_ratio, spectral_summary

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_VERIFY = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return "none"
    return str(v)


def _print_items(items, out):
    for key, value in items:
        print(f"{key} = {_fmt(value)}", file=out)


def _load_matrix_or_system(path):
    """Accept either a system file or a bare matrix file."""
    try:
        return load_system(path).A
    except QRKError:
        return check_row_normalized(read_matrix(path))


def cmd_generate(args, out):
    system = generate_gaussian_system(args.m, args.n, args.seed)
    save_system(system, args.out)
    print(f"wrote {args.out}: m={system.m} n={system.n} seed={args.seed}", file=out)


def cmd_corrupt(args, out):
    system = load_system(args.system)
    spec = CorruptionSpec(beta=args.beta, model=args.model, magnitude=args.magnitude, seed=args.seed)
    result = corrupt(system, spec)
    save_system(result, args.out)
    print(f"wrote {args.out}: corrupted {result.corrupt_set.size} of {result.m} entries ({args.model})", file=out)


def cmd_solve(args, out):
    system = load_system(args.system)
    cfg = SolverConfig(strategy=args.strategy, q=args.q, t=args.t, p=args.p,
                       max_iters=args.max_iters, stop_tol=args.stop_tol, seed=args.seed)
    x_true = None if args.blind else system.x_true
    trace = run_solver(system.A, system.b_observed, cfg, x_true=x_true)
    if not args.blind:
        trace.annotate(system.corrupt_set)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            trace.write_csv(fh)
    _print_items([
        ("strategy", cfg.label()),
        ("status", trace.status),
        ("iterations", trace.n_iters),
        ("final_err_sq", trace.final_err_sq),
    ], out)
    if args.blind:
        print("x = " + " ".join(repr(float(v)) for v in trace.x_final), file=out)


def cmd_spectral(args, out):
    A = _load_matrix_or_system(args.system)
    summary = spectral_summary(A, args.q, args.beta, method=args.method, trials=args.trials,
                               directions=args.directions, seed=args.seed)
    items = summary.as_items()
    _print_items(items, out)
    if summary.sigma_sub_min_method != "exact":
        print("note = sigma_sub_min is an upper bound; a positive rate is not a certificate", file=out)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([k for k, _ in items])
            w.writerow([_fmt(v) for _, v in items])


def cmd_heuristic(args, out):
    beta_star = corollary_threshold(args.q)
    beta = beta_star if args.beta is None else args.beta
    h = heuristic(args.q - beta)
    _print_items([
        ("q", args.q),
        ("beta", beta),
        ("mass", h.mass),
        ("alpha", h.alpha),
        ("ratio", h.ratio),
        ("beta_star", beta_star),
    ], out)


def cmd_check_condition(args, out):
    lhs = condition_lhs(args.q, args.beta)
    items = [("q", args.q), ("beta", args.beta), ("condition_lhs", lhs)]
    if args.system:
        summary = spectral_summary(_load_matrix_or_system(args.system), args.q, args.beta, method=args.method,
                                   trials=args.trials, directions=args.directions, seed=args.seed)
        items += [("condition_rhs", summary.condition_rhs), ("source", summary.sigma_sub_min_method),
                  ("holds", summary.condition_holds), ("rate_c", summary.rate_c), ("certified", summary.certified)]
    elif args.sigma_max is not None and args.sigma_sub_min is not None and args.m is not None:
        rhs = args.sigma_sub_min ** 2 / args.sigma_max ** 2
        rate = convergence_rate(args.sigma_max, args.sigma_sub_min, args.q, args.beta, args.m)
        items += [("condition_rhs", rhs), ("source", "given"), ("holds", rate is not None), ("rate_c", rate)]
    else:
        rhs = heuristic_ratio(args.q - args.beta)
        items += [("condition_rhs", rhs), ("source", "gaussian-heuristic"), ("holds", lhs < rhs)]
    _print_items(items, out)


_OVERRIDES = ("m", "n", "seed", "system", "beta", "model", "magnitude", "q", "t", "p",
              "max_iters", "stop_tol", "trials", "out", "workers")


def _experiment_config(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {k: getattr(args, k) for k in _OVERRIDES}
    if getattr(args, "methods", None):
        overrides["methods"] = tuple(s.strip() for s in args.methods.split(",") if s.strip())
    if getattr(args, "checks", None):
        overrides["verify"] = tuple(s.strip() for s in args.checks.split(",") if s.strip())
    return cfg.with_overrides(**overrides)


def cmd_experiment(args, out):
    cfg = _experiment_config(args)
    rows = run_experiment(cfg)
    print(f"wrote {len(rows)} traces and summary.csv to {cfg.out}", file=out)


def cmd_compare(args, out):
    cfg = _experiment_config(args)
    table = compare_methods(cfg)
    cols = ["method", "trials", "median_err_sq", "q25_err_sq", "q75_err_sq", "median_iterations", "converged"]
    print("\t".join(cols), file=out)
    for row in table:
        print("\t".join(_fmt(row[c]) for c in cols), file=out)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for row in table:
                w.writerow([_fmt(row[c]) for c in cols])


def cmd_verify(args, out):
    cfg = _experiment_config(args)
    report = verify(cfg)
    for line in report.lines():
        print(line, file=out)
    return EXIT_OK if report.passed else EXIT_VERIFY


def _add_spectral_opts(p):
    p.add_argument("--method", choices=("exact", "sampled", "greedy"), default="exact")
    p.add_argument("--trials", type=int, default=200, help="random subsets for --method sampled")
    p.add_argument("--directions", type=int, default=200, help="random directions for --method greedy")
    p.add_argument("--seed", type=int, default=0)


def _add_experiment_opts(p, checks=False):
    p.add_argument("--config", help="key = value config file; flags override it")
    p.add_argument("--m", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--system")
    p.add_argument("--beta", type=float)
    p.add_argument("--model", choices=MODELS)
    p.add_argument("--magnitude", type=float)
    p.add_argument("--methods", help="comma separated: " + ", ".join(STRATEGIES))
    p.add_argument("--q", type=float)
    p.add_argument("--t", type=int)
    p.add_argument("--p", type=float)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--stop-tol", type=float)
    p.add_argument("--trials", type=int)
    p.add_argument("--out")
    p.add_argument("--workers", type=int)
    if checks:
        p.add_argument("--checks", help="comma separated: lemma1, lemma2, lemma3, assembled, theorem_step, sv_rate")


def build_parser():
    parser = _Parser(prog="qrk", description="Quantile-based randomized Kaczmarz toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write a Gaussian system file")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("corrupt", help="corrupt the right-hand side of a system file")
    p.add_argument("--system", required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--model", choices=MODELS, required=True)
    p.add_argument("--magnitude", type=float)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_corrupt)

    p = sub.add_parser("solve", help="run one solver on a system file")
    p.add_argument("--system", required=True)
    p.add_argument("--strategy", choices=sorted(STRATEGIES), required=True)
    p.add_argument("--q", type=float)
    p.add_argument("--t", type=int)
    p.add_argument("--p", type=float)
    p.add_argument("--max-iters", type=int, required=True)
    p.add_argument("--stop-tol", type=float, default=0.0)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--blind", action="store_true", help="ignore the stored ground truth entirely")
    p.add_argument("--out", help="trace CSV path")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("spectral", help="spectral summary of a matrix or system file")
    p.add_argument("--system", required=True)
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--csv")
    _add_spectral_opts(p)
    p.set_defaults(func=cmd_spectral)

    p = sub.add_parser("heuristic", help="Gaussian heuristic threshold for q")
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--beta", type=float, help="evaluate the heuristic at q - beta (default: beta_star)")
    p.set_defaults(func=cmd_heuristic)

    p = sub.add_parser("check-condition", help="evaluate the convergence condition")
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--system")
    p.add_argument("--sigma-max", type=float)
    p.add_argument("--sigma-sub-min", type=float)
    p.add_argument("--m", type=int)
    _add_spectral_opts(p)
    p.set_defaults(func=cmd_check_condition)

    for name, func, helptext in (
        ("experiment", cmd_experiment, "seeded batch run writing trace CSVs"),
        ("compare", cmd_compare, "median final error per method"),
        ("verify", cmd_verify, "check every proof step along solver runs"),
    ):
        p = sub.add_parser(name, help=helptext)
        _add_experiment_opts(p, checks=name == "verify")
        if name == "compare":
            p.add_argument("--csv")
        p.set_defaults(func=func)
    return parser


def main(argv=None, out=None):
    out = sys.stdout if out is None else out
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        code = args.func(args, out)
    except ConfigError as exc:
        print(f"qrk: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (QRKError, OSError) as exc:
        print(f"qrk: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
