"""Command-line interface.

Subcommands:
  spectrum     kernel file -> lambda, tau, mu
  sample       kernel file -> one stationary trajectory
  bounds       closed-form bound evaluation -> BoundReport JSON
  estimate-l   Gaussian complexity of a functions file
  gamma        gamma_1 / gamma_2 upper bounds for a witness file
  experiment   run a config-driven sweep, write CSV + JSON reports

Exit codes: 0 success, 2 validation/usage error, 3 numerical failure.
Output files are written atomically (temp file + rename).
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import bounds as bd
from .chains import (load_kernel_matrix, mixing_time, sample_trajectory,
                     stationary_distribution, TransitionKernel)
from .chaining import (gamma_upper, greedy_admissible_sequence, load_witness_process)
from .errors import NumericalError, ValidationError
from .experiments import parse_config, resolve_output_dir, run_experiment
from .montecarlo import estimate_L
from .spaces import center_and_normalize, load_functions


def _kernel_from_file(path: str) -> TransitionKernel:
    A = load_kernel_matrix(path)
    mu = stationary_distribution(A)
    return TransitionKernel(rows=A, mu=mu)


def _cmd_spectrum(args) -> int:
    kernel = _kernel_from_file(args.kernel)
    print(f"lambda = {kernel.lam!r}")
    if args.skip_tau:
        print("tau = skipped")
    else:
        tau = mixing_time(kernel, args.mix_threshold, args.max_steps)
        print(f"tau = {tau}")
    print("mu = " + " ".join(repr(float(x)) for x in kernel.mu))
    return 0


def _cmd_sample(args) -> int:
    kernel = _kernel_from_file(args.kernel)
    traj = sample_trajectory(kernel, args.length, args.seed)
    print(" ".join(str(int(y)) for y in traj))
    return 0


def _constants_from_args(args) -> bd.UniversalConstants:
    return bd.UniversalConstants(
        c_naor=args.c_naor, C_main=args.C_main, C1_tail=args.C1_tail,
        C2_tail=args.C2_tail, C_gauss=args.C_gauss, C_net=args.C_net)


def _need(args, names: list[str], bound: str) -> None:
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise ValidationError(f"bound {bound!r} needs {flags}")


def _cmd_bounds(args) -> int:
    consts = _constants_from_args(args)
    name = args.name
    if name == "paulin":
        _need(args, ["u", "sigma2", "M", "lam"], name)
        rep = bd.paulin_tail(args.u, args.sigma2, args.M, args.lam, clip=args.clip)
    elif name == "naor":
        _need(args, ["u", "n", "s"], name)
        rep = bd.naor_bounds(args.u, args.n, args.s, consts, clip=args.clip)
    elif name == "main_expectation":
        _need(args, ["k", "lam", "L"], name)
        rep = bd.main_expectation(args.k, args.lam, args.L, consts)
    elif name == "main_tail":
        _need(args, ["u", "k", "lam", "L"], name)
        rep = bd.main_tail(args.u, args.k, args.lam, args.L, consts, clip=args.clip)
    elif name == "sharp_expectation":
        _need(args, ["kind", "size", "lam", "L"], name)
        rep = bd.sharp_expectation(args.kind, args.size, args.lam, args.L, consts)
    elif name == "gaussian_matrix_expectation":
        _need(args, ["variance_norm", "k"], name)
        rep = bd.gaussian_matrix_expectation(args.variance_norm, args.k, consts)
    elif name == "nsw":
        _need(args, ["u", "sigma2", "lam", "k"], name)
        rep = bd.nsw_tail(args.u, args.sigma2, args.lam, args.k, clip=args.clip)
    elif name == "mcdiarmid":
        _need(args, ["u", "c"], name)
        rep = bd.mcdiarmid_tail(args.u, args.c, tau=args.tau, clip=args.clip)
    elif name == "gamma1":
        _need(args, ["kind", "k"], name)
        value = bd.gamma1_analytic(args.kind, args.k, consts)
        print(json.dumps({"name": "gamma1", "kind": args.kind, "k": args.k,
                          "value": value}))
        return 0
    else:
        raise ValidationError(f"unknown bound name {name!r}")
    print(json.dumps(rep.to_json_dict()))
    return 0


def _cmd_estimate_l(args) -> int:
    f = load_functions(args.functions)
    if args.kernel:
        kernel = _kernel_from_file(args.kernel)
        if kernel.n_states != f.n_states:
            raise ValidationError("kernel and functions disagree on the state count")
        mu = kernel.mu
    else:
        mu = np.full(f.n_states, 1.0 / f.n_states)
    if not args.no_center:
        f = center_and_normalize(f, mu)
    est = estimate_L(f, mu, args.trials, args.seed)
    print(json.dumps(est.to_json_dict()))
    return 0


def _cmd_gamma(args) -> int:
    T = load_witness_process(args.witness)
    if args.kernel:
        kernel = _kernel_from_file(args.kernel)
        if kernel.n_states != T.n_states:
            raise ValidationError("kernel and witness process disagree on the state count")
        mu = kernel.mu
    else:
        mu = np.full(T.n_states, 1.0 / T.n_states)
    if args.scaled:
        m1, m2 = "d1", "d2"
    else:
        m1, m2 = "linf", "l2"
    seq1 = greedy_admissible_sequence(T, which=m1, depth=args.depth, lam=args.lam, mu=mu)
    seq2 = greedy_admissible_sequence(T, which=m2, depth=args.depth, lam=args.lam, mu=mu)
    g1 = gamma_upper(T, seq1, alpha=1, which=m1, lam=args.lam, mu=mu)
    g2 = gamma_upper(T, seq2, alpha=2, which=m2, lam=args.lam, mu=mu)
    print(json.dumps({"points": T.count, "depth": args.depth,
                      "metric_gamma1": m1, "metric_gamma2": m2,
                      "gamma1_upper": g1, "gamma2_upper": g2}))
    return 0


def _cmd_experiment(args) -> int:
    config = parse_config(args.config)
    report = run_experiment(config)
    out_dir = resolve_output_dir(config, args.out)
    csv_path, json_path = report.write(out_dir)
    print(csv_path)
    print(json_path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chainlab",
        description="Markov chain concentration bounds, Gaussian complexities, "
                    "and chaining constructions")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", help="lambda, tau, and mu of a kernel file")
    p.add_argument("kernel")
    p.add_argument("--mix-threshold", type=float, default=0.25)
    p.add_argument("--max-steps", type=int, default=100_000)
    p.add_argument("--skip-tau", action="store_true")
    p.set_defaults(func=_cmd_spectrum)

    p = sub.add_parser("sample", help="sample one stationary trajectory")
    p.add_argument("kernel")
    p.add_argument("--length", "-n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("bounds", help="evaluate one closed-form bound")
    p.add_argument("--name", required=True,
                   choices=["paulin", "naor", "main_expectation", "main_tail",
                            "sharp_expectation", "gaussian_matrix_expectation",
                            "nsw", "mcdiarmid", "gamma1"])
    p.add_argument("--u", type=float)
    p.add_argument("--sigma2", type=float)
    p.add_argument("--M", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--k", type=float)
    p.add_argument("--d", type=float)
    p.add_argument("--L", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--s", type=float)
    p.add_argument("--tau", type=int)
    p.add_argument("--c", type=float, nargs="+")
    p.add_argument("--variance-norm", type=float)
    p.add_argument("--size", type=float)
    p.add_argument("--kind", choices=["matrix", "linf", "dual_ball"])
    p.add_argument("--clip", action="store_true",
                   help="cap tail values at 1 (probability mode)")
    for flag, dest in [("--c-naor", "c_naor"), ("--C-main", "C_main"),
                       ("--C1-tail", "C1_tail"), ("--C2-tail", "C2_tail"),
                       ("--C-gauss", "C_gauss"), ("--C-net", "C_net")]:
        p.add_argument(flag, dest=dest, type=float, default=1.0)
    p.set_defaults(func=_cmd_bounds)

    p = sub.add_parser("estimate-l", help="Gaussian complexity of a functions file")
    p.add_argument("--functions", required=True)
    p.add_argument("--kernel", help="kernel file supplying mu (uniform otherwise)")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-center", action="store_true",
                   help="family is already centered/normalized")
    p.set_defaults(func=_cmd_estimate_l)

    p = sub.add_parser("gamma", help="greedy gamma_1/gamma_2 upper bounds")
    p.add_argument("--witness", required=True)
    p.add_argument("--kernel", help="kernel file supplying mu (uniform otherwise)")
    p.add_argument("--depth", type=int, default=5)
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    p.add_argument("--scaled", action="store_true",
                   help="use the d1/d2 metrics instead of the raw ones")
    p.set_defaults(func=_cmd_gamma)

    p = sub.add_parser("experiment", help="run a config-driven sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="output directory (overrides env and config)")
    p.set_defaults(func=_cmd_experiment)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
