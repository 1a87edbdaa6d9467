"""Command-line interface: single runs, campaigns, condition checks,
conductance, drift sweeps, lower-bound experiments and calibration."""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import experiments, graphs, potentials, processes
from .batch_sim import BatchRunConfig, run
from .core import RngSeedPlan, WeightDistribution
from .processes import ProcessSpec


def parse_process(text: str, tie_breaking: str = "deterministic") -> ProcessSpec:
    """Parse 'TwoChoice', 'DChoice:4', 'OnePlusBeta:0.5', 'Quantile:0.5', ..."""
    name, _, arg = text.partition(":")
    name = name.strip()
    if name == "OneChoice":
        return ProcessSpec.one_choice(tie_breaking)
    if name == "TwoChoice":
        return ProcessSpec.two_choice(tie_breaking)
    if name == "ThreeChoice":
        return ProcessSpec.three_choice(tie_breaking)
    if name == "DChoice":
        return ProcessSpec.d_choice(int(arg), tie_breaking)
    if name == "OnePlusBeta":
        return ProcessSpec.one_plus_beta(float(arg), tie_breaking)
    if name == "Quantile":
        return ProcessSpec.quantile(float(arg), tie_breaking)
    raise SystemExit(f"unknown process {text!r}")


def parse_weights(kind: str, lambda_: float | None, q: float | None) -> WeightDistribution:
    if kind == "Unit":
        return WeightDistribution.unit(lambda_) if lambda_ else WeightDistribution.unit()
    if kind == "Exponential":
        return (WeightDistribution.exponential(lambda_) if lambda_
                else WeightDistribution.exponential())
    if kind == "ScaledGeometric":
        return WeightDistribution.scaled_geometric(q if q is not None else 0.5, lambda_)
    if kind == "UniformBounded":
        return (WeightDistribution.uniform_bounded(lambda_) if lambda_
                else WeightDistribution.uniform_bounded())
    raise SystemExit(f"unknown weight distribution {kind!r}")


def _cmd_simulate(args) -> int:
    spec = parse_process(args.process, args.tie)
    weights = parse_weights(args.weights, args.weight_lambda, args.q)
    config = BatchRunConfig(n=args.n, b=args.b, m=args.m, process=spec,
                            weights=weights, seed_plan=RngSeedPlan(args.seed),
                            midbatch_samples=args.midbatch)
    trace = run(config)
    print("step,gap,min_y")
    for e in trace.boundaries:
        print(f"{e.step},{e.gap!r},{e.min_y!r}")
    for step, g in trace.midbatch:
        print(f"# midbatch {step},{g!r}")
    print(f"# final_state_digest {trace.final_state_digest}")
    return 0


def _cmd_campaign(args) -> int:
    if args.preset:
        campaign = experiments.PRESETS[args.preset](paper_scale=args.paper_scale)
    else:
        if not args.config:
            raise SystemExit("campaign needs a config file or --preset")
        campaign = experiments.parse_config(args.config)
    out = args.out or campaign.output_path
    result = experiments.run_campaign(campaign, master_seed=args.seed,
                                      threads=args.threads, timing=args.timing)
    experiments.write_csv(result, out)
    print(f"wrote {len(result.rows)} rows to {out}")
    return 0


def _cmd_check_conditions(args) -> int:
    spec = parse_process(args.process)
    p = processes.probability_vector(spec, args.n)
    delta, epsilon = args.delta, args.epsilon
    if epsilon is None:
        # Canonical parameters: beta/2 for OnePlusBeta (1/2 for d-choice
        # processes), 1 - delta for Quantile.
        if spec.kind == "OnePlusBeta":
            delta, epsilon = 0.25, spec.beta / 2
        elif spec.kind == "Quantile":
            delta, epsilon = spec.delta, 1 - spec.delta
        else:
            delta, epsilon = 0.25, 0.5
    C = args.big_c if args.big_c is not None else max(2.0, float(spec.d or 2))
    report = {
        "process": spec.label(),
        "n": args.n,
        "D0": processes.check_D0(p).to_dict(),
        "D1": processes.check_D1(p, delta, epsilon).to_dict(),
        "D2": processes.check_D2(p, C).to_dict(),
        "C1": processes.check_C1(p, delta, epsilon).to_dict(),
        "C2": processes.check_C2(p, C).to_dict(),
    }
    print(json.dumps(report, indent=2))
    return 0


def _cmd_conductance(args) -> int:
    g = graphs.read_edge_list(args.graph_file)
    result = graphs.conductance_exact(g)
    print(json.dumps({"n": g.n, "d": g.d, "phi": result.phi,
                      "crossing_edges": result.crossing_edges,
                      "witness_set": sorted(result.witness_set)}, indent=2))
    return 0


def _cmd_drift_check(args) -> int:
    rng = RngSeedPlan(args.seed).generator()
    n = args.n
    cases = [
        (processes.probability_vector(ProcessSpec.two_choice(), n), 0.25, 0.5),
        (processes.probability_vector(ProcessSpec.one_plus_beta(0.5), n), 0.25, 0.25),
        (processes.probability_vector(ProcessSpec.quantile(0.5), n), 0.5, 0.5),
        (processes.worst_case_vector(n, 0.25, 0.5), 0.25, 0.5),
    ]
    violations = 0
    for p, delta, epsilon in cases:
        alpha = epsilon * delta / 16.0
        for _ in range(args.vectors):
            y = rng.normal(0.0, args.sigma, n)
            y = np.sort(y - y.mean())[::-1]
            holds, lhs, rhs = potentials.verify_main_theorem(
                p, y, alpha, epsilon, delta, K=1.0)
            if not holds:
                violations += 1
                print(f"VIOLATION lhs={lhs!r} rhs={rhs!r}")
    print(f"checked {len(cases) * args.vectors} vectors, {violations} violations")
    return 0 if violations == 0 else 1


def _cmd_lower_bound(args) -> int:
    if args.experiment == "first-batch":
        spec = parse_process(args.process)
        b = args.b if args.b else 2 * math.ceil(args.n * math.log(args.n))
        res = experiments.first_batch_lower_bound(args.n, b, spec, args.runs, args.seed)
        print(json.dumps({"experiment": "first-batch", "n": args.n, "b": b,
                          "process": spec.label(), "gamma": res.gamma,
                          "threshold": res.threshold, "fraction": res.fraction,
                          "wilson": [res.wilson_low, res.wilson_high],
                          "mean_y": res.mean_y}, indent=2))
    elif args.experiment == "log":
        spec = parse_process(args.process if args.process != "TwoChoice"
                             else "OnePlusBeta:0.5")
        res = experiments.log_lower_experiment(spec, args.n, args.runs, args.seed,
                                               b=args.b or None)
        print(json.dumps({"experiment": "log", "n": args.n, "m": res.m,
                          "process": spec.label(), "khat": res.khat,
                          "threshold": res.threshold,
                          "min_gap": float(res.gaps.min()),
                          "all_above_threshold": res.all_above_threshold()}, indent=2))
    else:
        lam = args.poisson_lambda or 16 * math.log(args.n)
        res = experiments.poisson_min_gap(args.n, lam, args.runs, args.seed)
        print(json.dumps({"experiment": "poisson", "n": args.n, "lambda": lam,
                          "results": {str(k): v for k, v in res.items()}}, indent=2))
    return 0


def _cmd_calibrate(args) -> int:
    constants = experiments.calibrate(master_seed=args.seed)
    with open(args.out, "w", newline="\n") as f:
        json.dump(constants, f, indent=2)
        f.write("\n")
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=1, help="master seed (u64)")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--paper-scale", action="store_true",
                        help="restore the n=1000 / 100-run figure parameters")

    parser = argparse.ArgumentParser(prog="batchbins",
                                     description="Batched balanced-allocation lab")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="single run, prints gap trace")
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--b", type=int, default=300)
    p.add_argument("--m", type=int, default=90000)
    p.add_argument("--process", default="TwoChoice")
    p.add_argument("--tie", choices=["deterministic", "random"], default="deterministic")
    p.add_argument("--weights", default="Unit")
    p.add_argument("--weight-lambda", type=float, default=None)
    p.add_argument("--q", type=float, default=None)
    p.add_argument("--midbatch", type=int, default=0)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("campaign", parents=[common], help="run a sweep, write CSV")
    p.add_argument("config", nargs="?", help="JSON campaign config")
    p.add_argument("--preset", choices=sorted(experiments.PRESETS))
    p.add_argument("--out", help="override the configured output path")
    p.add_argument("--timing", action="store_true",
                   help="record wall times (breaks byte-identical reruns)")
    p.set_defaults(func=_cmd_campaign)

    p = sub.add_parser("check-conditions", parents=[common],
                       help="condition reports for a process, as JSON")
    p.add_argument("process")
    p.add_argument("n", type=int)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--big-c", type=float, default=None)
    p.set_defaults(func=_cmd_check_conditions)

    p = sub.add_parser("conductance", parents=[common],
                       help="exact conductance of an edge-list graph file")
    p.add_argument("graph_file")
    p.set_defaults(func=_cmd_conductance)

    p = sub.add_parser("drift-check", parents=[common],
                       help="randomized sweep of the deterministic drift bound")
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--vectors", type=int, default=1000)
    p.add_argument("--sigma", type=float, default=5.0)
    p.set_defaults(func=_cmd_drift_check)

    p = sub.add_parser("lower-bound", parents=[common], help="lower-bound experiments")
    p.add_argument("experiment", choices=["first-batch", "log", "poisson"])
    p.add_argument("--n", type=int, default=128)
    p.add_argument("--b", type=int, default=0)
    p.add_argument("--process", default="TwoChoice")
    p.add_argument("--runs", type=int, default=200)
    p.add_argument("--poisson-lambda", type=float, default=None)
    p.set_defaults(func=_cmd_lower_bound)

    p = sub.add_parser("calibrate", parents=[common],
                       help="run the pilots and write the constants file")
    p.add_argument("--out", default="calibrated_constants.json")
    p.set_defaults(func=_cmd_calibrate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
