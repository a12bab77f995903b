"""Command-line front end: ``pdlab {sample,density,rate,verify,select}``.

Every run echoes its resolved configuration under ``config``.  Exit status
is 0 on success, 2 on usage errors (including out-of-range parameters) and
1 when a computation refuses to give an answer (normalization failure, ESS
gate, a verification that does not pass).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from fractions import Fraction

import numpy as np

from . import __version__
from . import ldplab, ratefn
from .core import OrderedFrequencies, SimplexPointM
from .density import (DensityTable, NormalizationError, check_functional_eq, normalization,
                      solve_g1)
from .sampler import (RngStream, sample_dirichlet_process, sample_gamma_batch, sample_pd_batch)

SEED_ENV = "PDLAB_SEED"


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# serialization


def _clean(obj):
    """JSON-ready copy: infinities become "inf"/"-inf", numpy scalars become Python ones."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        items = sorted(obj) if isinstance(obj, (set, frozenset)) else obj
        return [_clean(v) for v in items]
    if isinstance(obj, Fraction):
        obj = float(obj)
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float):
        if math.isnan(obj):
            return "nan"
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, allow_nan=False) + "\n"


def _num(x) -> str:
    """Shortest round-trip decimal."""
    if isinstance(x, float) and math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def _write(text: str, path: str | None):
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# argument types


def _positive(text):
    v = float(text)
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text!r}")
    return v


def _unit_open(text):
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"expected a number in (0, 1), got {text!r}")
    return v


def _count(text):
    v = int(float(text))
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return v


def _order(text):
    v = int(text)
    if v < 2:
        raise argparse.ArgumentTypeError(f"r must be an integer >= 2, got {text!r}")
    return v


def _floats(text):
    try:
        return [float(Fraction(v)) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _number(text):
    """A real, kept exact when written as a fraction like 1/3."""
    if "/" in text:
        return Fraction(text)
    return float(text)


def _default_seed():
    env = os.environ.get(SEED_ENV)
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer") from None


# ---------------------------------------------------------------------------
# subcommands


def cmd_sample(args, config):
    rng = RngStream(args.seed)
    if args.method == "gem":
        batch = sample_pd_batch(args.theta, args.n, args.trunc_eps, rng)
        draws = list(batch)
        labels = None
    elif args.method == "gamma":
        batch, _ = sample_gamma_batch(args.theta, args.cutoff, args.n, rng)
        draws = list(batch)
        labels = None
    else:
        out = [sample_dirichlet_process(args.theta, args.trunc_eps, RngStream(args.seed, i))
               for i in range(args.n)]
        draws = [d.weights for d in out]
        labels = [d.labels for d in out]
    if args.format == "json":
        rows = []
        for i, p in enumerate(draws):
            row = {"draw_id": i, "freqs": list(p.freqs), "residual": p.residual}
            if labels is not None:
                row["labels"] = list(labels[i])
            rows.append(row)
        return dumps({"config": config, "draws": rows})
    buf = io.StringIO()
    buf.write("# " + json.dumps(_clean(config)) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["draw_id", "k", "p_k"])
    for i, p in enumerate(draws):
        for k, f in enumerate(p.freqs, start=1):
            w.writerow([i, k, _num(f)])
        w.writerow([i, "residual", _num(p.residual)])
    return buf.getvalue()


def cmd_density(args, config):
    if args.load:
        table = DensityTable.load(args.load)
    else:
        table = solve_g1(args.theta, K=args.K, grid_points_per_interval=args.points)
    if args.dump:
        table.dump(args.dump, config=_clean(config))
    queries = args.query or []
    if args.format == "csv" and not args.dump_stdout_json:
        buf = io.StringIO()
        table.dump(buf, config=_clean(config))
        return buf.getvalue()
    cdf = table.cdf(np.array(queries, dtype=float)) if queries else []
    return dumps({"config": config, "table": table.header(),
                  "normalization": normalization(table),
                  "fe_residual": check_functional_eq(table),
                  "tail_mass": table.tail_mass,
                  "queries": [{"x": x, "cdf": float(c)} for x, c in zip(queries, cdf)]})


def _freqs_arg(args) -> OrderedFrequencies:
    if args.point is None:
        raise UsageError("--point is required for this kind")
    vals = [float(v) for v in args.point]
    return OrderedFrequencies(tuple(v for v in sorted(vals, reverse=True) if v > 0),
                              args.residual)


def cmd_rate(args, config):
    kind = args.kind
    minimizers = None
    if kind in ("I", "S1", "In", "J"):
        if args.p is None:
            raise UsageError("--p is required for this kind")
        p = args.p
        if kind == "I":
            value = ratefn.rate_I(p)
        elif kind == "S1":
            value = ratefn.rate_S1(p)
        elif kind == "In":
            value = ratefn.rate_In(args.n, p)
        else:
            value = ratefn.rate_J(args.r, p)
        inp = {"p": p}
    elif kind == "Sm":
        if args.point is None:
            raise UsageError("--point is required for this kind")
        point = SimplexPointM(tuple(args.point))
        value = ratefn.rate_Sm(point)
        inp = {"point": list(point.coords)}
    elif kind == "S":
        p = _freqs_arg(args)
        value = ratefn.rate_S(p, args.tol)
        inp = {"point": list(p.freqs), "residual": p.residual, "tol": args.tol}
    elif kind == "Hr":
        p = _freqs_arg(args)
        lo, hi = ratefn.h_r_bounds(p, args.r)
        value = lo
        inp = {"point": list(p.freqs), "residual": p.residual, "r": args.r, "bounds": [lo, hi]}
    elif kind == "min-hr":
        value, point = ratefn.min_hr_on_Ln(args.n, args.r)
        minimizers = [list(point.coords)]
        inp = {"n": args.n, "r": args.r}
    elif kind == "tilted-sup":
        if args.s is None:
            raise UsageError("--s is required for this kind")
        sup = ratefn.tilted_sup(args.s, args.r, args.n_max)
        value = sup.sup_value
        minimizers = sup.minimizers
        inp = {"s": args.s, "r": args.r, "n_star": sup.n_star}
    else:  # Sprime
        if args.s is None:
            raise UsageError("--s is required for this kind")
        p = _freqs_arg(args)
        value = ratefn.rate_Sprime(args.s, args.r, args.regime, p, args.tol)
        inp = {"s": args.s, "r": args.r, "regime": args.regime, "point": list(p.freqs),
               "residual": p.residual, "tol": args.tol}
    out = {"config": config, "kind": kind, "input": inp, "value": value}
    if minimizers is not None:
        out["minimizers"] = minimizers
    return dumps(out)


def _scaling_csv(rep, config) -> str:
    buf = io.StringIO()
    buf.write("# " + json.dumps(_clean(config)) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["theta", "lambda", "log_p", "scaled"])
    for row in rep.rows():
        w.writerow([_num(v) for v in row])
    return buf.getvalue()


def cmd_verify(args, config):
    exp = args.experiment
    seed, threads = args.seed, args.threads
    rep = None
    if exp == "beta-tail":
        out = ldplab.experiment_beta_tail(args.thetas or [args.theta or 1e-8], args.a, args.b,
                                          args.tol if args.tol is not None else 0.05)
    elif exp == "density-check":
        out = ldplab.experiment_density_check(args.thetas or [0.1, 0.5, 1.0, 2.0], args.K,
                                              args.points)
    elif exp == "known-value":
        out = ldplab.experiment_known_value(args.theta or 1.0, args.n or 10**6, seed,
                                            threads=threads)
    elif exp == "slope":
        x = args.x if args.x is not None else 0.5
        out, rep = ldplab.experiment_slope(
            x, args.thetas or [1e-2, 1e-3, 1e-4, 1e-5], args.estimator, args.n or 10**6, seed,
            args.tol if args.tol is not None else 0.1, threads=threads)
    elif exp == "joint-box":
        out, rep = ldplab.experiment_joint_box(
            thetas=args.thetas or [0.3, 0.1, 0.03, 0.01], n_samples=args.n or 10**7, seed=seed,
            tol=args.tol if args.tol is not None else 0.3, threads=threads)
    elif exp == "exp-approx":
        out = ldplab.experiment_exp_approx(args.thetas or [0.2, 0.5], n_samples=args.n or 10**6,
                                           seed=seed, threads=threads)
    elif exp == "homozygosity-min":
        out = ldplab.experiment_homozygosity_min(seed=seed)
    elif exp == "selection-ties":
        out = ldplab.experiment_selection_ties()
    elif exp == "coexistence":
        out = ldplab.experiment_coexistence(args.theta or 0.01, n_samples=args.n or 10**6,
                                            seed=seed, threads=threads)
    else:  # sampler-xval
        out = ldplab.experiment_sampler_xval(args.thetas or [0.5, 1.0], n_samples=args.n or 10**5,
                                             seed=seed)
    if args.format == "csv":
        if rep is None:
            raise UsageError("csv output is only available for scaling experiments")
        text = _scaling_csv(rep, config)
    else:
        text = dumps({"config": config, **out})
    return text, bool(out["pass"])


def cmd_select(args, config):
    alpha = args.alpha if args.alpha == "critical" else float(args.alpha)
    tilted = ldplab.sample_tilted(args.theta, args.s, args.r, alpha, args.n, RngStream(args.seed),
                                  threads=args.threads)
    rep = ldplab.coexistence_report(tilted, args.tol)
    inv_h = 1.0 / np.maximum(tilted.batch.homozygosity(args.r), 1e-300)
    return dumps({"config": config, "alpha": tilted.alpha, "ess": tilted.ess,
                  "weight_error_bound": tilted.weight_error_bound,
                  "tilted_mean_inv_h": tilted.mean(inv_h),
                  "neutral_mean_inv_h": float(np.mean(inv_h)),
                  "coexistence": rep.to_dict()})


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pdlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"pdlab {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help=f"64-bit seed (default: ${SEED_ENV} or 0)")
    common.add_argument("--threads", type=_count, default=1)
    common.add_argument("--output", "-o", default=None, help="write to a file instead of stdout")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", parents=[common], help="draw PD(theta) samples")
    p.add_argument("--theta", type=_positive, required=True)
    p.add_argument("--n", type=_count, default=1)
    p.add_argument("--trunc-eps", type=_unit_open, default=1e-10)
    p.add_argument("--method", choices=["gem", "gamma", "dp"], default="gem")
    p.add_argument("--cutoff", type=_positive, default=None,
                   help="atom cutoff for the gamma method (default 1e-3/theta)")
    p.add_argument("--format", choices=["csv", "json"], default="csv")

    p = sub.add_parser("density", parents=[common], help="solve or load the largest-atom law")
    p.add_argument("--theta", type=_positive, default=None)
    p.add_argument("--K", type=int, default=8)
    p.add_argument("--points", type=_count, default=2048)
    p.add_argument("--dump", default=None, help="write the table as CSV")
    p.add_argument("--load", default=None, help="read a table written by --dump")
    p.add_argument("--query", type=_floats, default=None, help="comma-separated x values")
    p.add_argument("--format", choices=["csv", "json"], default="json")
    p.set_defaults(dump_stdout_json=False)

    p = sub.add_parser("rate", parents=[common], help="evaluate a rate function")
    p.add_argument("--kind", required=True,
                   choices=["I", "In", "S1", "Sm", "S", "J", "Hr", "min-hr", "tilted-sup", "Sprime"])
    p.add_argument("--p", type=_number, default=None)
    p.add_argument("--n", type=_count, default=1)
    p.add_argument("--r", type=_order, default=2)
    p.add_argument("--s", type=float, default=None)
    p.add_argument("--n-max", type=_count, default=None)
    p.add_argument("--regime", choices=["vanishing", "critical"], default="critical")
    p.add_argument("--point", type=_floats, default=None)
    p.add_argument("--residual", type=float, default=0.0)
    p.add_argument("--tol", type=_positive, default=1e-9)

    p = sub.add_parser("verify", parents=[common], help="run a verification experiment")
    p.add_argument("--experiment", required=True,
                   choices=["beta-tail", "density-check", "known-value", "slope", "joint-box",
                            "exp-approx", "homozygosity-min", "selection-ties", "coexistence",
                            "sampler-xval"])
    p.add_argument("--theta", type=_positive, default=None)
    p.add_argument("--thetas", type=_floats, default=None)
    p.add_argument("--a", type=float, default=0.0)
    p.add_argument("--b", type=float, default=0.5)
    p.add_argument("--x", type=float, default=None)
    p.add_argument("--n", type=_count, default=None)
    p.add_argument("--K", type=int, default=8)
    p.add_argument("--points", type=_count, default=2048)
    p.add_argument("--estimator", choices=["density", "mc"], default="density")
    p.add_argument("--tol", type=_positive, default=None)
    p.add_argument("--format", choices=["csv", "json"], default="json")

    p = sub.add_parser("select", parents=[common], help="importance-sample the selection-tilted law")
    p.add_argument("--theta", type=_positive, required=True)
    p.add_argument("--s", type=float, required=True)
    p.add_argument("--r", type=_order, default=2)
    p.add_argument("--alpha", default="critical", help='"critical" or a nonnegative number')
    p.add_argument("--n", type=_count, default=10**5)
    p.add_argument("--tol", type=_positive, default=0.01)
    return parser


def _validate(args):
    if args.command == "sample":
        if args.method == "gamma" and args.cutoff is None:
            args.cutoff = min(1.0, 1e-3 / args.theta)
    elif args.command == "density":
        if args.load is None and args.theta is None:
            raise UsageError("density needs --theta or --load")
        if args.load is None and args.K < 2:
            raise UsageError("K must be at least 2")
    elif args.command == "verify":
        if args.experiment == "beta-tail" and not 0 <= args.a < args.b <= 1:
            raise UsageError("need 0 <= a < b <= 1")
        if args.x is not None and not 0 < args.x <= 1:
            raise UsageError("x must lie in (0, 1]")
    elif args.command == "select":
        if args.alpha != "critical":
            try:
                if float(args.alpha) < 0:
                    raise ValueError
            except ValueError:
                raise UsageError('--alpha must be "critical" or a nonnegative number') from None
        if args.alpha == "critical" and not args.theta < 1:
            raise UsageError("critical selection intensity needs theta < 1")


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.seed is None:
            args.seed = _default_seed()
        if not 0 <= args.seed < 2**64:
            raise UsageError("seed must fit in 64 unsigned bits")
        _validate(args)
    except UsageError as exc:
        print(f"pdlab: error: {exc}", file=sys.stderr)
        return 2
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("dump_stdout_json",)}
    config["version"] = __version__
    try:
        if args.command == "sample":
            text, ok = cmd_sample(args, config), True
        elif args.command == "density":
            text, ok = cmd_density(args, config), True
        elif args.command == "rate":
            text, ok = cmd_rate(args, config), True
        elif args.command == "verify":
            text, ok = cmd_verify(args, config)
        else:
            text, ok = cmd_select(args, config), True
    except UsageError as exc:
        print(f"pdlab: error: {exc}", file=sys.stderr)
        return 2
    except (NormalizationError, ldplab.ReliabilityError, RuntimeError) as exc:
        print(f"pdlab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"pdlab: error: {exc}", file=sys.stderr)
        return 2
    _write(text, args.output)
    return 0 if ok else 1


def main():  # pragma: no cover
    sys.exit(run())
