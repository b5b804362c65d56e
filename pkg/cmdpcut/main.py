#!/usr/bin/env python3

import argparse
import json
import logging
import sys

import numpy as np

from .bench import run_benchmark, to_jsonable
from .checks import SUITES, format_table, run_checks
from .cmdp_solver import DualConfig, solve
from .cutting_plane import VaidyaParams, vaidya_bound, vaidya_run
from .errors import CmdpError, InvalidParameterError
from .instance_io import dumps_instance, load_instance
from .instances import InstanceSpec, generate_instance
from .npg import run_npg
from .objectives import OBJECTIVES, TiltedOracle, box_polytope, box_value_range, make_objective
from .oracles import exact_dual, grid_dual_min, lp_solve_cmdp, slater_point
from .trace import ConvergenceTrace

logger = logging.getLogger('cmdpcut.main')

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def _emit(document):
    print(json.dumps(to_jsonable(document), indent=2, sort_keys=True))


def _dual_vector(text):
    try:
        return np.array([float(x) for x in text.split(",")]) if text else np.zeros(0)
    except ValueError as e:
        raise InvalidParameterError(f"--lambda must be comma-separated numbers, got {text!r}") from e


def _load_cmdp(args):
    """--instance file, or a default generated instance for --seed."""
    if args.instance:
        return load_instance(args.instance)
    return generate_instance(InstanceSpec(seed=args.seed))


def _vaidya_params(args, t_max):
    if args.unsafe_params and args.eta is None and args.zeta is None:
        return VaidyaParams.practical(t_max=t_max)
    defaults = VaidyaParams.practical() if args.unsafe_params else VaidyaParams()
    return VaidyaParams(eta=defaults.eta if args.eta is None else args.eta,
                        zeta=defaults.zeta if args.zeta is None else args.zeta,
                        t_max=t_max, unsafe=args.unsafe_params)


def cmd_gen(args):
    spec = InstanceSpec(seed=args.seed, n_states=args.states, n_actions=args.actions, m=args.m,
                        gamma=args.gamma, constraint_tightness=args.tightness, iid_kernel=args.iid_kernel)
    text = dumps_instance(generate_instance(spec), meta=spec.to_dict())
    if args.output:
        with open(args.output, "w", encoding="utf-8") as handle:
            handle.write(text)
        logger.info(f"wrote {spec.label} to {args.output}")
    else:
        print(text, end="")
    return 0


def cmd_solve(args):
    cmdp = _load_cmdp(args)
    cfg = DualConfig(tau=args.tau, delta=args.delta, mu=args.mu, b_lambda=args.b_lambda,
                     slater_xi=args.xi, vaidya=_vaidya_params(args, args.t_outer), t_outer=args.t_outer,
                     mixing=tuple(args.mixing) if args.mixing else None,
                     epsilon_target=args.epsilon_target)
    solution = solve(cmdp, cfg, oracle_check=args.oracle_check)
    if args.trace:
        solution.trace.save_csv(args.trace)
    _emit({
        "lambda": solution.lam,
        "policy": solution.policy.probs,
        "stop_reason": None if solution.run is None else solution.run.stop_reason,
        "summary": solution.trace.get_summary(),
        "config": solution.config.to_dict(),
        "diagnostics": solution.diagnostics.to_dict(),
    })
    return 0


def cmd_oracle(args):
    cmdp = _load_cmdp(args)
    if args.mode == "lp":
        result = lp_solve_cmdp(cmdp)
        document = {"status": result.status, "optimal_value": result.optimal_value,
                    "occupancy": result.occupancy, "policy": None if result.policy is None else result.policy.probs}
    elif args.mode == "slater":
        result = slater_point(cmdp)
        document = {"status": result.status, "slater_xi": result.optimal_value,
                    "policy": None if result.policy is None else result.policy.probs}
    elif args.mode == "softvi":
        lam = _dual_vector(args.lam) if args.lam else np.zeros(cmdp.m)
        dual = exact_dual(cmdp, lam, args.tau)
        document = {"lambda": lam, "dual_value": dual.value, "dual_gradient": dual.gradient,
                    "values": dual.values, "policy": dual.policy.probs}
    else:
        if args.b_lambda is None:
            cfg = DualConfig(tau=args.tau).resolve(cmdp)
            b_lambda = cfg.b_lambda
        else:
            b_lambda = args.b_lambda
        point, value = grid_dual_min(cmdp, args.tau, b_lambda, args.resolution or b_lambda / 100.0,
                                     mu=args.mu, refine=True)
        document = {"lambda": point, "dual_value": value, "b_lambda": b_lambda, "mu": args.mu}
    _emit(document)
    return 0


def cmd_npg(args):
    cmdp = _load_cmdp(args)
    if args.lam is not None:
        reward = cmdp.combined_reward(_dual_vector(args.lam))
    else:
        if not 0 <= args.reward_index <= cmdp.m:
            raise InvalidParameterError(f"--reward-index must lie in [0, {cmdp.m}]")
        reward = cmdp.rewards[args.reward_index]
    result = run_npg(cmdp, reward, args.tau, args.delta)
    _emit({
        "iterations_used": result.iterations_used,
        "policy_gap_bound": result.policy_gap_bound,
        "value_gap_bound": result.value_gap_bound,
        "soft_value": result.report.scalar_value,
        "entropy": result.report.entropy,
        "policy": result.policy.probs,
    })
    return 0


def cmd_cutplane(args):
    lower, upper = -np.ones(args.m), np.ones(args.m)
    objective = make_objective(args.objective, args.m, seed=args.seed)
    oracle = TiltedOracle(objective, args.tilt_delta) if args.tilt_delta else objective
    polytope = box_polytope(lower, upper)
    trace = ConvergenceTrace(args.m, label=f"{args.objective}_m{args.m}")

    def record(event):
        trace.record(event.t, event.action, event.k, event.sigma_min, event.point, event.value_estimate)

    params = _vaidya_params(args, args.t_max)
    run = vaidya_run(oracle, polytope, params, callback=record)
    if args.trace:
        trace.save_csv(args.trace)
    minimum = objective.minimum_value(polytope)
    bound = vaidya_bound(box_value_range(objective, lower, upper), args.m, float(np.sqrt(args.m)), 1.0,
                         params.zeta, params.t_max, args.tilt_delta)
    _emit({
        "objective": args.objective,
        "best_point": run.best_point,
        "best_value": run.best_value,
        "minimum_value": minimum,
        "error": None if minimum is None or run.best_value is None else run.best_value - minimum,
        "envelope": bound,
        "stop_reason": run.stop_reason,
        "summary": trace.get_summary(),
    })
    return 0


def cmd_bench(args):
    with open(args.config, "r", encoding="utf-8") as handle:
        try:
            document = json.load(handle)
        except json.JSONDecodeError as e:
            raise InvalidParameterError(f"{args.config}: invalid JSON at line {e.lineno}: {e.msg}") from e
    if args.workers is not None:
        document["workers"] = args.workers
    summary = run_benchmark(document, args.output)
    failures = sum(entry["status"] != "ok" for entry in summary["pairs"])
    print(f"{len(summary['pairs'])} pair(s) written to {args.output}, {failures} failure(s)")
    return 0


def cmd_check(args):
    if args.list:
        for name in SUITES:
            print(name)
        return 0
    results = run_checks(args.suite, seed=args.seed)
    print(format_table(results))
    return 0 if all(result.passed for result in results) else 1


def _add_instance_args(parser):
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--instance", help="instance JSON file")
    group.add_argument("--seed", type=int, default=0, help="generate the default instance for this seed")


def _add_vaidya_args(parser):
    parser.add_argument("--eta", type=float, default=None)
    parser.add_argument("--zeta", type=float, default=None)
    parser.add_argument("--unsafe-params", action="store_true",
                        help="allow eta/zeta outside the theoretical regime (defaults 1000 / 0.1)")


def build_parser():
    parser = argparse.ArgumentParser(prog="cmdpcut", description="Cutting-plane dual solver for tabular CMDPs")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true")
    verbosity.add_argument("--quiet", action="store_true")
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("gen", help="write a seeded random instance")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--states", type=int, default=10)
    gen.add_argument("--actions", type=int, default=3)
    gen.add_argument("--m", type=int, default=2)
    gen.add_argument("--gamma", type=float, default=0.9)
    gen.add_argument("--tightness", type=float, default=0.5)
    gen.add_argument("--iid-kernel", action="store_true")
    gen.add_argument("--output", "-o")
    gen.set_defaults(handler=cmd_gen)

    solve_cmd = commands.add_parser("solve", help="run the cutting-plane dual solver")
    _add_instance_args(solve_cmd)
    solve_cmd.add_argument("--tau", type=float, default=None)
    solve_cmd.add_argument("--delta", type=float, default=1e-6)
    solve_cmd.add_argument("--mu", type=float, default=0.0)
    solve_cmd.add_argument("--xi", type=float, default=None, help="Slater margin; solved by LP when omitted")
    solve_cmd.add_argument("--b-lambda", type=float, default=None)
    solve_cmd.add_argument("--t-outer", type=int, default=150)
    solve_cmd.add_argument("--mixing", type=float, nargs=2, metavar=("C_M", "BETA"))
    solve_cmd.add_argument("--epsilon-target", type=float, default=None,
                           help="report the outer iterations needed for this accuracy")
    solve_cmd.add_argument("--oracle-check", action="store_true", help="compare against the LP optimum")
    solve_cmd.add_argument("--trace", help="write the convergence trace CSV here")
    _add_vaidya_args(solve_cmd)
    solve_cmd.set_defaults(handler=cmd_solve)

    oracle = commands.add_parser("oracle", help="exact reference solutions")
    _add_instance_args(oracle)
    oracle.add_argument("--mode", choices=("lp", "slater", "softvi", "griddual"), default="lp")
    oracle.add_argument("--tau", type=float, default=0.1)
    oracle.add_argument("--lambda", dest="lam")
    oracle.add_argument("--mu", type=float, default=0.0)
    oracle.add_argument("--b-lambda", type=float, default=None)
    oracle.add_argument("--resolution", type=float, default=None)
    oracle.set_defaults(handler=cmd_oracle)

    npg = commands.add_parser("npg", help="entropy-regularized NPG on one reward")
    _add_instance_args(npg)
    npg.add_argument("--tau", type=float, default=0.1)
    npg.add_argument("--delta", type=float, default=1e-6)
    target = npg.add_mutually_exclusive_group()
    target.add_argument("--reward-index", type=int, default=0)
    target.add_argument("--lambda", dest="lam", help="comma-separated multipliers for r_0 + <lam, r>")
    npg.set_defaults(handler=cmd_npg)

    cutplane = commands.add_parser("cutplane", help="Vaidya's method on a convex test function over [-1, 1]^m")
    cutplane.add_argument("objective", choices=sorted(OBJECTIVES))
    cutplane.add_argument("m", type=int)
    cutplane.add_argument("--seed", type=int, default=0)
    cutplane.add_argument("--tilt-delta", type=float, default=0.0)
    cutplane.add_argument("--t-max", type=int, default=150)
    cutplane.add_argument("--trace")
    _add_vaidya_args(cutplane)
    cutplane.set_defaults(handler=cmd_cutplane)

    bench = commands.add_parser("bench", help="config-driven batch run")
    bench.add_argument("config")
    bench.add_argument("--output", "-o", default="bench-out")
    bench.add_argument("--workers", type=int, default=None)
    bench.set_defaults(handler=cmd_bench)

    check = commands.add_parser("check", help="run the verification suites")
    check.add_argument("--suite", action="append", choices=sorted(SUITES))
    check.add_argument("--seed", type=int, default=0)
    check.add_argument("--list", action="store_true")
    check.set_defaults(handler=cmd_check)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT)
    try:
        return args.handler(args)
    except (CmdpError, OSError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
