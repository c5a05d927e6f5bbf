"""Command-line front end.

Subcommands: ``minimize``, ``linf``, ``curve``, ``verify`` and
``bench-synth``.  Exit status is 0 on success, 1 when a solver fails or a
check does not pass, and 2 for usage or configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from .driver import TerminationCriteria, hinf_minimize, verify_interpolation
from .errors import ConfigError, HinfminError
from .norms import LevelSetOptions, linf_norm_dense, linf_norm_large
from .optimize import OptimizerOptions
from .problems import (SYNTHETIC_REFERENCE, SyntheticSpec, load_problem_config, load_result,
                       save_result, synthetic_build)
from .projection import SubspacePair, project

log = logging.getLogger("hinfmin")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
DEFAULT_SEED = 0


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument helpers


def _floats(text):
    try:
        return [float(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text):
    try:
        return [int(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _grid(text):
    parts = text.split(":")
    try:
        if len(parts) == 3:
            lo, hi, num = float(parts[0]), float(parts[1]), int(parts[2])
            if num < 1:
                raise ValueError
            return np.linspace(lo, hi, num)
        return np.asarray(_floats(text))
    except (ValueError, argparse.ArgumentTypeError):
        raise argparse.ArgumentTypeError(f"expected start:stop:num or a list, got {text!r}")


def _add_problem(p):
    src = p.add_argument_group("problem")
    g = src.add_mutually_exclusive_group(required=True)
    g.add_argument("--config", help="problem config file (TOML, JSON or YAML)")
    g.add_argument("--synthetic", type=int, metavar="N", help="synthetic family of order N")
    src.add_argument("--omega-max", type=float, help="maximum frequency of the initialization")


def _add_solver(p):
    s = p.add_argument_group("solver")
    s.add_argument("--algorithm", choices=("basic", "extended"))
    s.add_argument("--optimizer", choices=("auto", "support1d", "qn"))
    s.add_argument("--eps1", type=float)
    s.add_argument("--eps2", type=float)
    s.add_argument("--k-max", type=int)
    s.add_argument("--num-init", type=int, help="initialization points (default 10)")
    s.add_argument("--gamma", type=float, help="curvature lower bound for support1d")
    s.add_argument("--abs-tol", type=float)
    s.add_argument("--stationarity-tol", type=float)
    s.add_argument("--num-starts", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--complex-bases", action="store_true", default=None,
                   help="keep complex projection bases for real systems")


def _threads(args):
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("HINFMIN_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"HINFMIN_THREADS must be an integer, got {env!r}")
    return 1


def _load_problem(args):
    """``(name, system, omega_max, options)`` with CLI > config > default precedence."""
    if args.synthetic is not None:
        try:
            spec = SyntheticSpec(args.synthetic)
        except ValueError as exc:
            raise UsageError(str(exc))
        system = synthetic_build(spec)
        options = {}
        omega_max = args.omega_max or spec.omega_max
        return system.name, system, omega_max, options
    ps, system = load_problem_config(args.config)
    omega_max = args.omega_max or ps.omega_max
    return ps.name, system, omega_max, dict(ps.options)


def _pick(args, options, name, default):
    v = getattr(args, name, None)
    if v is not None:
        return v
    return options.get(name, default)


def _solver_settings(args, options, system):
    threads = _threads(args)
    try:
        criteria = TerminationCriteria(
            float(_pick(args, options, "eps1", 1e-6)),
            float(_pick(args, options, "eps2", 1e-6)),
            int(_pick(args, options, "k_max", 20)))
        opt = OptimizerOptions(
            method=_pick(args, options, "optimizer", "auto"),
            gamma_hessian_lower=float(_pick(args, options, "gamma", -10000.0)),
            abs_tol=float(_pick(args, options, "abs_tol", 1e-8)),
            stationarity_tol=float(_pick(args, options, "stationarity_tol", 1e-12)),
            num_starts=int(_pick(args, options, "num_starts", 5)),
            seed=int(_pick(args, options, "seed", DEFAULT_SEED)),
            threads=threads)
        opt.resolve(system.d)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc))
    complex_bases = _pick(args, options, "complex_bases", False)
    return {
        "algorithm": _pick(args, options, "algorithm", "basic"),
        "criteria": criteria,
        "optimizer_opts": opt,
        "num_init": int(_pick(args, options, "num_init", 10)),
        "threads": threads,
        "real": False if complex_bases else None,
    }


def _run_minimize(args):
    name, system, omega_max, options = _load_problem(args)
    settings = _solver_settings(args, options, system)
    algorithm = settings.pop("algorithm")
    result = hinf_minimize(system, algorithm=algorithm, omega_max=omega_max, problem=name,
                           **settings)
    return system, result


def _fmt_mu(mu):
    return "(" + ", ".join(f"{v:.6f}" for v in np.atleast_1d(mu)) + ")"


# ---------------------------------------------------------------------------
# subcommands


def cmd_minimize(args):
    system, result = _run_minimize(args)
    if args.output:
        save_result(result, args.output, args.format)
    if args.save_subspace and result.pair is not None:
        result.pair.save(args.save_subspace)
    if args.history:
        print(f"{'k':>3} {'mu':>24} {'omega':>12} {'full norm':>14} {'reduced norm':>14} "
              f"{'dim':>5}")
        for r in result.history:
            print(f"{r.k:>3} {_fmt_mu(r.mu):>24} {r.omega:>12.6g} {r.full_norm:>14.8g} "
                  f"{r.reduced_norm:>14.8g} {r.subspace_dim:>5}")
    if result.mu_star is None:
        print(f"error: {result.message or 'no iterate computed'}", file=sys.stderr)
        return EXIT_FAIL
    print(f"mu*        = {_fmt_mu(result.mu_star)}")
    print(f"omega*     = {result.omega_star:.8g}")
    print(f"norm       = {result.norm_star:.8g}")
    print(f"iterations = {result.iterations}")
    print(f"subspace   = {result.pair.k if result.pair is not None else 0}")
    print(f"reason     = {result.termination_reason}")
    print(f"wall time  = {result.wall_time:.2f} s")
    if result.termination_reason == "inner_failure":
        print(f"error: {result.message}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def _norm_at(system, mu, omega_max, method, pair=None):
    opts = LevelSetOptions(omega_max=omega_max)
    if method == "auto":
        method = "dense" if system.n <= system.dense_crossover else "large"
    if method == "dense":
        return linf_norm_dense(system.at(mu), opts)
    return linf_norm_large(system, mu, opts=opts, pair=pair)


def _mu_vector(values, system):
    mu = np.asarray(values if values is not None else system.box.center, dtype=float)
    if mu.size != system.d:
        raise UsageError(f"--mu needs {system.d} components, got {mu.size}")
    return mu


def cmd_linf(args):
    _, system, omega_max, _ = _load_problem(args)
    mu = _mu_vector(args.mu, system)
    nr = _norm_at(system, mu, omega_max, args.method)
    print(f"gamma  = {nr.gamma:.10g}")
    print(f"omega* = {nr.omega_star:.10g}")
    if nr.attained_at_infinity:
        print("note: supremum attained at omega = infinity")
    if not nr.converged:
        print("error: norm computation did not converge", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_curve(args):
    _, system, omega_max, _ = _load_problem(args)
    base = _mu_vector(args.mu, system)
    axes = [args.axis - 1]
    grids = [args.grid]
    if args.axis2 is not None:
        if args.grid2 is None:
            raise UsageError("--axis2 needs --grid2")
        axes.append(args.axis2 - 1)
        grids.append(args.grid2)
    for a in axes:
        if not 0 <= a < system.d:
            raise UsageError(f"axis {a + 1} outside 1..{system.d}")
    pair = SubspacePair.load(args.subspace) if args.subspace else None
    reduced = project(system, pair) if pair is not None else None
    points = []
    if len(axes) == 1:
        for v in grids[0]:
            mu = base.copy()
            mu[axes[0]] = v
            points.append(mu)
    else:
        for v in grids[0]:
            for w in grids[1]:
                mu = base.copy()
                mu[axes[0]], mu[axes[1]] = v, w
                points.append(mu)
    header = [f"mu_{j + 1}" for j in range(system.d)] + ["norm", "omega"]
    if reduced is not None:
        header += ["reduced_norm", "reduced_omega"]
    failures = 0
    out = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        w = csv.writer(out)
        w.writerow(header)
        for mu in points:
            row = [repr(float(v)) for v in mu]
            try:
                nr = _norm_at(system, mu, omega_max, args.method)
                row += [repr(nr.gamma), repr(nr.omega_star)]
            except (HinfminError, np.linalg.LinAlgError) as exc:
                log.warning("norm failed at mu=%s: %s", mu.tolist(), exc)
                failures += 1
                row += ["nan", "nan"]
            if reduced is not None:
                try:
                    rr = linf_norm_dense(reduced.at(mu), LevelSetOptions(omega_max=omega_max))
                    row += [repr(rr.gamma), repr(rr.omega_star)]
                except (HinfminError, np.linalg.LinAlgError) as exc:
                    log.warning("reduced norm failed at mu=%s: %s", mu.tolist(), exc)
                    failures += 1
                    row += ["nan", "nan"]
            w.writerow(row)
    finally:
        if out is not sys.stdout:
            out.close()
    if failures:
        print(f"warning: {failures} grid point(s) failed (NaN rows)", file=sys.stderr)
    return EXIT_OK


def cmd_verify(args):
    if args.result:
        if not args.subspace:
            raise UsageError("--result needs --subspace")
        _, system, _, _ = _load_problem(args)
        result = load_result(args.result)
        pair = SubspacePair.load(args.subspace)
    else:
        system, result = _run_minimize(args)
        pair = result.pair
    if pair is None or pair.n != system.n:
        raise UsageError("subspace does not match the problem")
    failed = 0
    print(f"{'kind':>6} {'k':>3} {'mu':>24} {'omega':>12} {'sigma':>9} {'sigma2':>9} "
          f"{'grad':>9} {'d_omega':>9}  ok")
    for pt in result.expansion_points:
        rep = verify_interpolation(system, pair, pt.mu, pt.omega, args.tol,
                                   check_stationarity=pt.kind != "init")
        d_om = abs(rep.omega_derivative_full - rep.omega_derivative_reduced)
        if pt.kind != "init":
            d_om = max(abs(rep.omega_derivative_full), abs(rep.omega_derivative_reduced))
        d_om /= rep.scale
        print(f"{pt.kind:>6} {pt.iteration:>3} {_fmt_mu(pt.mu):>24} {pt.omega:>12.6g} "
              f"{rep.sigma_residual:>9.2e} {rep.sigma2_residual:>9.2e} "
              f"{rep.gradient_residual:>9.2e} {d_om:>9.2e}  {'yes' if rep.passed else 'NO'}")
        failed += not rep.passed
    n = len(result.expansion_points)
    print(f"{n - failed}/{n} expansion points pass at tol {args.tol:g}")
    return EXIT_OK if failed == 0 and n > 0 else EXIT_FAIL


def cmd_bench_synth(args):
    if not args.n:
        raise UsageError("bench-synth needs at least one n")
    threads = _threads(args)
    rows = []
    all_ok = True
    print(f"{'n':>7} {'iter':>4} {'mu*':>10} {'ref mu*':>10} {'norm':>12} {'ref norm':>12} "
          f"{'time s':>8}  status")
    for n in args.n:
        try:
            spec = SyntheticSpec(n)
        except ValueError as exc:
            raise UsageError(str(exc))
        system = synthetic_build(spec)
        opt = OptimizerOptions(method=args.optimizer, gamma_hessian_lower=args.gamma,
                               seed=args.seed, threads=threads)
        t0 = time.perf_counter()
        try:
            res = hinf_minimize(system, algorithm=args.algorithm, omega_max=spec.omega_max,
                                optimizer_opts=opt,
                                criteria=TerminationCriteria(k_max=args.k_max), threads=threads)
        except HinfminError as exc:
            print(f"{n:>7} failed: {exc}")
            all_ok = False
            continue
        dt = time.perf_counter() - t0
        mu = float(res.mu_star[0]) if res.mu_star is not None else float("nan")
        ref = SYNTHETIC_REFERENCE.get(n)
        if ref is None:
            status = "no reference"
        else:
            ok = (abs(mu - ref[0]) <= args.mu_tol
                  and abs(res.norm_star - ref[1]) <= args.norm_rtol * ref[1])
            status = "pass" if ok else "FAIL"
            all_ok &= ok
        rmu = f"{ref[0]:.6f}" if ref else "-"
        rnorm = f"{ref[1]:.6g}" if ref else "-"
        print(f"{n:>7} {res.iterations:>4} {mu:>10.6f} {rmu:>10} {res.norm_star:>12.6g} "
              f"{rnorm:>12} {dt:>8.2f}  {status}")
        rows.append({"n": n, "iterations": res.iterations, "mu_star": mu,
                     "norm_star": res.norm_star, "omega_star": res.omega_star,
                     "reference_mu": ref[0] if ref else None,
                     "reference_norm": ref[1] if ref else None,
                     "wall_time": dt, "status": status,
                     "termination_reason": res.termination_reason})
    if args.output:
        with open(args.output, "w") as fh:
            json.dump(rows, fh, indent=2)
            fh.write("\n")
    return EXIT_OK if all_ok else EXIT_FAIL


# ---------------------------------------------------------------------------
# parser


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hinfmin",
        description="H-infinity norm minimization of parametric descriptor systems")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--threads", type=int, help="worker cap (env HINFMIN_THREADS)")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("minimize", help="minimize the H-infinity norm over the parameter box")
    _add_problem(p)
    _add_solver(p)
    p.add_argument("--output", "-o", help="result file (.json or .csv)")
    p.add_argument("--format", choices=("json", "csv"))
    p.add_argument("--save-subspace", metavar="NPZ", help="store the final bases")
    p.add_argument("--history", action="store_true", help="print the iteration table")
    p.set_defaults(func=cmd_minimize)

    p = sub.add_parser("linf", help="L-infinity norm at a fixed parameter")
    _add_problem(p)
    p.add_argument("--mu", type=_floats, help="parameter value (default: box center)")
    p.add_argument("--method", choices=("auto", "dense", "large"), default="auto")
    p.set_defaults(func=cmd_linf)

    p = sub.add_parser("curve", help="norm along a 1-D or 2-D parameter slice (CSV)")
    _add_problem(p)
    p.add_argument("--mu", type=_floats, help="base parameter (default: box center)")
    p.add_argument("--axis", type=int, default=1, help="1-based parameter index")
    p.add_argument("--grid", type=_grid, required=True, help="start:stop:num or list")
    p.add_argument("--axis2", type=int)
    p.add_argument("--grid2", type=_grid)
    p.add_argument("--subspace", metavar="NPZ", help="also sample the reduced norm")
    p.add_argument("--method", choices=("auto", "dense", "large"), default="auto")
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("verify", help="check Hermite interpolation at the expansion points")
    _add_problem(p)
    _add_solver(p)
    p.add_argument("--result", help="saved JSON result instead of a fresh run")
    p.add_argument("--subspace", metavar="NPZ", help="saved bases matching --result")
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench-synth", help="synthetic benchmark against reference optima")
    p.add_argument("--n", type=_ints, default=[100, 200, 400, 600, 800])
    p.add_argument("--algorithm", choices=("basic", "extended"), default="basic")
    p.add_argument("--optimizer", choices=("auto", "support1d", "qn"), default="auto")
    p.add_argument("--gamma", type=float, default=-10000.0)
    p.add_argument("--k-max", type=int, default=20)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--mu-tol", type=float, default=1e-3)
    p.add_argument("--norm-rtol", type=float, default=1e-4)
    p.add_argument("--output", "-o", help="JSON report")
    p.set_defaults(func=cmd_bench_synth)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"hinfmin: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_USAGE
    except HinfminError as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
