"""Command-line entry point: solve, curve, simulate, evaluate, oracle.

Every CSV output starts with ``#`` comment lines carrying the format
version and the flags (minus output paths and ``--threads``) needed to
regenerate it; the policy JSON carries the same information as keys.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dist import Empirical, RiskDistribution, parse_distribution, read_score_file
from .errors import BracketError, ConvergenceError, DomainError, ScreeningError
from .oracle import OracleInstance, oracle_solve, verify_structure
from .policy import Budgets
from .sim import PolicyKind, Population, run_experiment, run_policy, derive_seed, aggregate_rows, ExperimentRow, ExperimentReport
from .solver import DEFAULT_MAX_ITER, DEFAULT_TOL, fixed_point_solve, solve
from .value import CURVE_COLUMNS, ValueCurve, value_curve

FORMAT_VERSION = "1"
DEFAULT_SEED = 20240917

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NONCONVERGENCE = 3

ROW_COLUMNS = ("dist", "kind", "alpha", "rep", "precision", "allocated", "screened", "tp")
AGG_COLUMNS = ("dist", "kind", "alpha", "mean", "std")

# flags that do not affect content
_NON_CONTENT = {"out", "agg_out", "curve_out", "trace", "threads", "func", "command"}


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _flags(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in _NON_CONTENT}


def _header_lines(args) -> list[str]:
    flags = _flags(args)
    return [
        f"# format_version: {FORMAT_VERSION}",
        f"# command: {args.command}",
        f"# flags: {json.dumps(flags, sort_keys=True, default=str)}",
        f"# seed: {flags.get('seed', 'n/a')}",
    ]


def write_csv(path, args, columns, rows):
    buf = io.StringIO()
    for line in _header_lines(args):
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    Path(path).write_text(buf.getvalue())


def read_csv_table(path):
    """Read a CSV written by this tool, skipping ``#`` header lines."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


# ---------------------------------------------------------------------------
# argument parsing helpers


def parse_grid(text: str) -> list[float]:
    """``start:stop:steps`` (inclusive linspace) or a comma list."""
    text = text.strip()
    try:
        if ":" in text:
            start, stop, steps = text.split(":")
            steps = int(steps)
            if steps < 1:
                raise ValueError
            return [float(x) for x in np.linspace(float(start), float(stop), steps)]
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise DomainError(f"bad grid {text!r}; use start:stop:steps or a comma list") from None


def _unit_float(text):
    x = float(text)
    if not 0.0 <= x <= 1.0:
        raise argparse.ArgumentTypeError(f"{text} is not in [0, 1]")
    return x


def _positive_int(text):
    x = int(text)
    if x < 1:
        raise argparse.ArgumentTypeError(f"{text} must be a positive integer")
    return x


def _positive_float(text):
    x = float(text)
    if not x > 0:
        raise argparse.ArgumentTypeError(f"{text} must be positive")
    return x


def _check_grid(grid, beta):
    if not grid:
        raise DomainError("empty alpha grid")
    for a in grid:
        Budgets(a, beta)


# ---------------------------------------------------------------------------
# subcommands


def cmd_solve(args):
    d = parse_distribution(args.dist)
    b = Budgets(args.alpha, args.beta)
    trace = None
    if args.solver == "fixed-point":
        policy, trace = fixed_point_solve(d, b, args.tol, args.max_iter)
    else:
        policy = solve(d, b, args.solver, args.tol)
    doc = policy.to_dict()
    doc["format_version"] = FORMAT_VERSION
    doc["command"] = args.command
    doc["flags"] = json.dumps(_flags(args), sort_keys=True, default=str)
    Path(args.out).write_text(json.dumps(doc, indent=2) + "\n")
    if args.trace:
        if trace is None:
            raise DomainError("--trace needs --solver fixed-point")
        write_csv(args.trace, args, ("iter", "rho", "gap"),
                  ((k, r, "" if g is None else g) for k, r, g in trace.rows()))
    print(f"q_alpha={policy.q_alpha:.10g} q_beta={policy.q_beta:.10g} "
          f"rho*={policy.rho_star:.10g} iterations={policy.iterations}")


def curve_rows(curve: ValueCurve):
    for r in curve.rows:
        yield r.as_tuple() + (r.method, r.status)


def cmd_curve(args):
    d = parse_distribution(args.dist)
    grid = parse_grid(args.alpha_grid)
    _check_grid(grid, args.beta)
    curve = value_curve(d, args.beta, grid, args.solver, args.tol, workers=args.threads)
    write_csv(args.out, args, CURVE_COLUMNS + ("method", "status"), curve_rows(curve))


def _simulate_dists(args) -> list[RiskDistribution]:
    dists = [parse_distribution(s) for s in (args.dist or [])]
    if args.t_grid:
        dists += [parse_distribution(f"beta:t={t}") for t in args.t_grid.split(",") if t.strip()]
    if not dists:
        raise DomainError("simulate needs --dist or --t-grid")
    return dists


def _kinds(baselines: str):
    kinds = [PolicyKind.OPTIMAL]
    for name in (s.strip() for s in baselines.split(",")):
        if not name:
            continue
        kind = PolicyKind(name) if name in {k.value for k in PolicyKind} else None
        if kind is None or kind is PolicyKind.OPTIMAL:
            raise DomainError(f"unknown baseline {name!r}; choose from none, random, heuristic")
        if kind not in kinds:
            kinds.append(kind)
    return kinds


def _report_tables(reports):
    rows, aggs = [], []
    for rep in reports:
        rows += [(r.dist, r.kind, r.alpha, r.rep, r.precision, r.allocated, r.screened, r.tp)
                 for r in rep.rows]
        aggs += [(a.dist, a.kind, a.alpha, a.mean, a.std) for a in rep.aggregates]
    return rows, aggs


def _agg_path(args):
    if args.agg_out:
        return args.agg_out
    out = Path(args.out)
    return out.with_name(out.stem + "_aggregate" + (out.suffix or ".csv"))


def cmd_simulate(args):
    dists = _simulate_dists(args)
    grid = parse_grid(args.alpha_grid)
    _check_grid(grid, args.beta)
    kinds = _kinds(args.baselines)
    reports = []
    for d in dists:
        population = None
        if isinstance(d, Empirical):
            population = Population(d.sorted_scores, np.zeros(d.n, dtype=np.int8), source=d.spec)
        reports.append(run_experiment(d, args.beta, grid, kinds, args.n, args.reps, args.seed,
                                      threads=args.threads, population=population))
    rows, aggs = _report_tables(reports)
    write_csv(args.out, args, ROW_COLUMNS, rows)
    write_csv(_agg_path(args), args, AGG_COLUMNS, aggs)
    for a in aggs:
        print(f"{a[0]:>18} {a[1]:>9} alpha={a[2]:.4f} precision={a[3]:.4f} ± {a[4]:.4f}")


def load_external(scores_path, outcomes_path) -> Population:
    """Join a score file and a label file on ``id``."""
    ids, scores = read_score_file(scores_path, "score")
    lab_ids, labels = read_score_file(outcomes_path, "label", allowed={0.0, 1.0})
    if set(ids) != set(lab_ids):
        missing = sorted(set(ids) ^ set(lab_ids))[:5]
        raise DomainError(f"score and label files have different ids (e.g. {missing})")
    pos = {u: i for i, u in enumerate(lab_ids)}
    y = np.array([labels[pos[u]] for u in ids], dtype=np.int8)
    return Population(scores, y, source=f"scores:{scores_path}", ids=tuple(ids))


def evaluate_external(scores_path, outcomes_path, b: Budgets, alpha_grid, seed: int = DEFAULT_SEED,
                      random_reps: int = 10, tol: float = DEFAULT_TOL):
    """Model-implied curve plus realized precision against held-out labels.

    Optimal screening is solved on the empirical score distribution and
    applied to the labelled units (a screened unit reveals its label).
    Random screening is averaged over ``random_reps`` seeded draws.
    ``b.alpha`` is ignored; the grid supplies the screening budgets.
    """
    pop = load_external(scores_path, outcomes_path)
    d = pop.distribution
    grid = [float(a) for a in alpha_grid]
    _check_grid(grid, b.beta)
    curve = value_curve(d, b.beta, grid, "fixed-point", tol)
    rows = []
    spec = f"scores:{scores_path}"
    for j, alpha in enumerate(grid):
        budgets = Budgets(alpha, b.beta)
        for kind, reps in ((PolicyKind.OPTIMAL, 1), (PolicyKind.NO_SCREENING, 1),
                           (PolicyKind.RANDOM, random_reps)):
            for rep in range(reps):
                cell_seed = derive_seed(seed, rep, j)
                try:
                    res = run_policy(pop, budgets, kind, cell_seed)
                except ScreeningError:
                    rows.append(ExperimentRow(spec, kind.value, alpha, rep, float("nan"), 0, 0, 0, "failed"))
                    continue
                rows.append(ExperimentRow(spec, kind.value, alpha, rep, res.precision,
                                          res.allocated, res.screened, res.true_positives))
    order = {k.value: i for i, k in enumerate((PolicyKind.OPTIMAL, PolicyKind.NO_SCREENING, PolicyKind.RANDOM))}
    rows.sort(key=lambda r: (order[r.kind], r.alpha, r.rep))
    return curve, ExperimentReport(tuple(rows), aggregate_rows(rows))


def cmd_evaluate(args):
    grid = parse_grid(args.alpha_grid)
    curve, report = evaluate_external(args.scores, args.outcomes, Budgets(0.0, args.beta), grid,
                                      args.seed, args.reps, args.tol)
    rows, aggs = _report_tables([report])
    write_csv(args.out, args, ROW_COLUMNS, rows)
    write_csv(_agg_path(args), args, AGG_COLUMNS, aggs)
    if args.curve_out:
        write_csv(args.curve_out, args, CURVE_COLUMNS + ("method", "status"), curve_rows(curve))
    for a in aggs:
        print(f"{a[1]:>9} alpha={a[2]:.4f} precision={a[3]:.4f} ± {a[4]:.4f}")


def cmd_oracle(args):
    _, scores = read_score_file(args.scores, "score")
    inst = OracleInstance(tuple(scores), args.k, args.budget)
    res = oracle_solve(inst)
    print(f"best_value: {res.best_value:.12g}")
    print(f"evaluated: {res.evaluated} screening sets")
    for s in res.best_screen_sets:
        print(f"argmax: {list(s)} scores={[round(inst.scores[i], 6) for i in s]}")
    if args.verify:
        report = verify_structure(inst, res)
        print(report.summary())


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="screening", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="optimal thresholds for one budget pair")
    s.add_argument("--dist", required=True)
    s.add_argument("--alpha", type=_unit_float, required=True)
    s.add_argument("--beta", type=_unit_float, required=True)
    s.add_argument("--solver", choices=("fixed-point", "root-find", "closed-form"), default="fixed-point")
    s.add_argument("--tol", type=_positive_float, default=DEFAULT_TOL)
    s.add_argument("--max-iter", type=_positive_int, default=DEFAULT_MAX_ITER)
    s.add_argument("--out", required=True)
    s.add_argument("--trace", metavar="CSV", help="write the rho iterates (fixed-point only)")
    s.set_defaults(func=cmd_solve)

    c = sub.add_parser("curve", help="value of screening along an alpha grid")
    c.add_argument("--dist", required=True)
    c.add_argument("--beta", type=_unit_float, required=True)
    c.add_argument("--alpha-grid", required=True)
    c.add_argument("--solver", choices=("fixed-point", "root-find", "closed-form"), default="fixed-point")
    c.add_argument("--tol", type=_positive_float, default=DEFAULT_TOL)
    c.add_argument("--threads", type=_positive_int, default=1)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_curve)

    m = sub.add_parser("simulate", help="Monte-Carlo precision of optimal screening and baselines")
    m.add_argument("--dist", action="append", help="repeatable")
    m.add_argument("--t-grid", help="comma list of Beta(t,t) parameters")
    m.add_argument("--beta", type=_unit_float, required=True)
    m.add_argument("--alpha-grid", required=True)
    m.add_argument("--n", type=_positive_int, default=100_000)
    m.add_argument("--reps", type=_positive_int, default=10)
    m.add_argument("--seed", type=int, default=DEFAULT_SEED)
    m.add_argument("--baselines", default="none,random,heuristic")
    m.add_argument("--threads", type=_positive_int, default=1)
    m.add_argument("--out", required=True)
    m.add_argument("--agg-out")
    m.set_defaults(func=cmd_simulate)

    e = sub.add_parser("evaluate", help="precision vs alpha on external scores and labels")
    e.add_argument("--scores", required=True)
    e.add_argument("--outcomes", required=True)
    e.add_argument("--beta", type=_unit_float, required=True)
    e.add_argument("--alpha-grid", required=True)
    e.add_argument("--seed", type=int, default=DEFAULT_SEED)
    e.add_argument("--reps", type=_positive_int, default=10, help="random-screening draws")
    e.add_argument("--tol", type=_positive_float, default=DEFAULT_TOL)
    e.add_argument("--threads", type=_positive_int, default=1)
    e.add_argument("--out", required=True)
    e.add_argument("--agg-out")
    e.add_argument("--curve-out")
    e.set_defaults(func=cmd_evaluate)

    o = sub.add_parser("oracle", help="brute-force optimum on a small score file")
    o.add_argument("--scores", required=True)
    o.add_argument("--k", type=int, required=True)
    o.add_argument("--budget", type=float, required=True)
    o.add_argument("--verify", action="store_true")
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (ConvergenceError, BracketError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except ScreeningError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
