"""Command-line driver: ``condgraph {estimate,ggm,pg,simulate}``."""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import io as gio
from .codec import RANK_CONVENTIONS, codec_matrix
from .core import CondGraphError, SelectionConfig
from .precision import (
    NotConvergedError,
    PgConfig,
    default_tn,
    glasso,
    glasso_support,
    npn_skeptic,
    pg_select,
    ridge_precision,
    sample_covariance,
)
from .selection import select_edges, symmetrize_max
from .simulate import METHODS, MODELS, SimModel, StudySettings, run_study

log = logging.getLogger("condgraph")


def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output", "-o", help="output file (default: stdout)")
    common.add_argument("--seed", type=int, default=0, help="seed for all randomness (default 0)")
    common.add_argument("--threads", type=int, default=0,
                        help="worker threads/processes (default: all cores)")
    common.add_argument("--rank-convention", choices=RANK_CONVENTIONS, default="ge",
                        help="ge: rank = #{x_l >= x_k} (default); le: #{x_l <= x_k}")
    common.add_argument("--verbose", "-v", action="store_true")
    return common


def _positive(kind):
    def conv(text):
        v = kind(text)
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
        return v
    return conv


def _nonneg(text):
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(
        prog="condgraph",
        description="Dependence-graph recovery with rank/nearest-neighbour coefficients.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", parents=[common],
                         help="write the matrix of pairwise conditional dependence coefficients")
    est.add_argument("--input", "-i", required=True, help="numeric CSV with a header row")
    est.add_argument("--format", choices=gio.MATRIX_FORMATS, default="csv-matrix")
    est.add_argument("--exclusions", help="file for the excluded-pair list "
                     "(default: <output>.excluded.csv for csv-matrix output)")

    ggm = sub.add_parser("ggm", parents=[common], help="recover the dependence graph")
    ggm.add_argument("--input", "-i", required=True)
    ggm.add_argument("--lambda", dest="lam", type=_nonneg, default=None,
                     help="threshold (default 1/n)")
    ggm.add_argument("--lambda-path", help="comma-separated thresholds; prints edge counts")
    ggm.add_argument("--format", choices=gio.GRAPH_FORMATS, default="edge-list")

    pg = sub.add_parser("pg", parents=[common], help="partial-correlation graph")
    pg.add_argument("--input", "-i", required=True)
    pg.add_argument("--estimator", choices=("glasso", "ridge", "skeptic+glasso"), default="glasso")
    pg.add_argument("--lambda", dest="lam", type=_nonneg, default=None,
                    help="glasso penalty, or ridge epsilon (default 1/n)")
    pg.add_argument("--t-n", dest="t_n", type=_positive(float), default=None,
                    help="selection threshold (default 2*sqrt(log p / n))")
    pg.add_argument("--selection", choices=("threshold", "support"), default="threshold",
                    help="threshold |K_ij| >= t_n, or take the glasso support")
    pg.add_argument("--tol", type=_positive(float), default=1e-7)
    pg.add_argument("--max-iter", type=_positive(int), default=500)
    pg.add_argument("--format", choices=gio.GRAPH_FORMATS, default="edge-list")

    sim = sub.add_parser("simulate", parents=[common], help="replication study on M1-M6")
    sim.add_argument("--model", choices=MODELS, required=True)
    sim.add_argument("--n", type=_positive(int), required=True)
    sim.add_argument("--reps", type=_positive(int), default=100)
    sim.add_argument("--methods", default="GGM",
                     help=f"comma-separated subset of {','.join(METHODS)}")
    sim.add_argument("--p", type=int, default=100)
    sim.add_argument("--lambda", dest="lam", type=_nonneg, default=None,
                     help="GGM threshold (default 1/n)")
    sim.add_argument("--exp-param", choices=("rate", "mean"), default="rate",
                     help="how Ex(r) is read (default: rate)")
    sim.add_argument("--replications", help="per-replication table "
                     "(default: <output>.reps.csv when --output is given)")
    return parser


def _emit(text: str, path: str | None) -> None:
    if path:
        gio.atomic_write(path, text)
    else:
        sys.stdout.write(text)


def cmd_estimate(args) -> int:
    data = gio.read_csv(args.input)
    dep = codec_matrix(data, args.seed, rank_convention=args.rank_convention,
                       threads=args.threads)
    _emit(gio.dep_matrix_text(dep, args.format), args.output)
    side = args.exclusions
    if side is None and args.format == "csv-matrix" and args.output:
        side = args.output + ".excluded.csv"
    if side:
        gio.atomic_write(side, gio.exclusions_text(dep))
    print(f"pairs: {dep.p * (dep.p - 1)}, excluded: {len(dep.excluded)}", file=sys.stderr)
    return 0


def cmd_ggm(args) -> int:
    data = gio.read_csv(args.input)
    lam = 1.0 / data.n if args.lam is None else args.lam
    dep = codec_matrix(data, args.seed, rank_convention=args.rank_convention,
                       threads=args.threads)
    sym = symmetrize_max(dep)
    graph = select_edges(sym, SelectionConfig(lam=lam, seed=args.seed), names=data.names)
    _emit(gio.graph_text(graph, args.format), args.output)
    print(f"lambda: {lam:.6g}, edges: {len(graph)}, excluded pairs: {len(dep.excluded)}",
          file=sys.stderr)
    if args.lambda_path:
        for text in args.lambda_path.split(","):
            v = _nonneg(text)
            print(f"lambda {v:.6g}: {len(select_edges(sym, v))} edges", file=sys.stderr)
    return 0


def cmd_pg(args) -> int:
    data = gio.read_csv(args.input)
    lam = 1.0 / data.n if args.lam is None else args.lam
    t_n = default_tn(data.n, data.p) if args.t_n is None else args.t_n
    if args.estimator == "ridge":
        if lam <= 0:
            raise CondGraphError("ridge needs --lambda > 0")
        est = ridge_precision(sample_covariance(data), lam)
        residual = None
    else:
        S = npn_skeptic(data) if args.estimator == "skeptic+glasso" else sample_covariance(data)
        est = glasso(S, PgConfig(lam=lam, tol=args.tol, max_iter=args.max_iter))
        residual = est.kkt_residual
    if args.selection == "support":
        graph = glasso_support(est, names=data.names)
    else:
        graph = pg_select(est, t_n, names=data.names)
    _emit(gio.graph_text(graph, args.format), args.output)
    msg = f"lambda: {lam:.6g}, t_n: {t_n:.6g}, edges: {len(graph)}"
    if residual is not None:
        msg += f", KKT residual: {residual:.3g}, iterations: {est.iterations}"
    print(msg, file=sys.stderr)
    return 0


def cmd_simulate(args) -> int:
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise CondGraphError(f"unknown method(s) {bad}; expected {','.join(METHODS)}")
    model = SimModel(args.model, args.n, args.p, args.seed, args.exp_param)
    settings = StudySettings(lam=args.lam, rank_convention=args.rank_convention)
    result = run_study(model, methods, args.reps, settings, workers=args.threads)
    _emit(gio.study_table_text(result.summary), args.output)
    reps_path = args.replications or (args.output + ".reps.csv" if args.output else None)
    if reps_path:
        gio.atomic_write(reps_path, gio.replications_text(result.replications, result.failures,
                                                          model.id))
    for rec in result.summary:
        print(f"{rec.model} {rec.method} n={rec.n}: TPR {rec.tpr:.3f}, FPR {rec.fpr:.3f} "
              f"over {rec.reps} replication(s), {rec.failures} failure(s)", file=sys.stderr)
    return 0


COMMANDS = {"estimate": cmd_estimate, "ggm": cmd_ggm, "pg": cmd_pg, "simulate": cmd_simulate}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with np.errstate(over="ignore"):
            return COMMANDS[args.command](args)
    except NotConvergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (CondGraphError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
