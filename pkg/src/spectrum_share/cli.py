"""Command line entry point: ``spectrum-share <subcommand> ...``.

Exit codes: 0 success, 2 invalid input, 3 invariant violation or failed
oracle cross-check.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import oracle
from .association import AssocConfig, run_association, verify_state_based_ne
from .coop import GibbsConfig, optimality_gap_bound, run_cooperative, stationary_distribution
from .harness import (
    ScenarioFile,
    assoc_record,
    br_record,
    generate_population,
    generate_scenario,
    gibbs_record,
    load_reference_scenario,
    load_scenario_file,
    random_churn,
    scenario_hash,
    write_scenario_file,
)
from .model import InvalidInput, InvariantViolation, per_ap_throughput, potential_phi
from .noncoop import price_of_anarchy, run_noncooperative, verify_ne

EXIT_OK, EXIT_INPUT, EXIT_INVARIANT = 0, 2, 3

log = logging.getLogger("spectrum_share")


class CheckFailed(InvariantViolation):
    pass


def _load(args) -> ScenarioFile:
    if args.scenario in (None, "reference"):
        return load_reference_scenario()
    return load_scenario_file(args.scenario)


def _meta(args, sf: ScenarioFile, **extra) -> dict:
    return dict(seed=args.seed, scenario=args.scenario or "reference", scenario_hash=scenario_hash(sf), **extra)


def _emit(args, name: str, summary: dict) -> None:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{name}_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(json.dumps(summary, indent=2, sort_keys=True))


def _mbps(v) -> float:
    return round(float(v) / 1e6, 6)


def _check(ok: bool, what: str) -> None:
    if not ok:
        raise CheckFailed(f"verification failed: {what}")


def cmd_gen_scenario(args) -> int:
    sf = generate_scenario(args.aps, args.channels, args.vacant, args.side, args.seed,
                           (args.power_min, args.power_max), args.noise_dbm)
    if args.users:
        pop = generate_population(sf.scenario, args.users, seed=args.seed, mobility_cost=args.delta)
        sf = ScenarioFile(sf.scenario, pop, (), pop.lambda_max, sf.description)
    write_scenario_file(sf, args.out)
    print(args.out)
    return EXIT_OK


def cmd_coop(args) -> int:
    sf = _load(args)
    sc = sf.scenario
    run = run_cooperative(sc, GibbsConfig(args.gamma, args.iters, args.seed))
    rec = gibbs_record(sc, run, _meta(args, sf, gamma=args.gamma, iterations=args.iters))
    rec.write(Path(args.out_dir) / "coop_trace.csv")
    summary = {
        "algorithm": "coop",
        "gamma": args.gamma,
        "iterations": args.iters,
        "final_profile": list(run.final_profile),
        "final_system_throughput_mbps": _mbps(run.system_throughput[-1]),
        "time_average_system_throughput_mbps": _mbps(run.time_average_system_throughput),
        "time_average_ap_throughput_mbps": [_mbps(v) for v in run.ap_throughputs.mean(axis=0)],
    }
    if args.verify:
        _, s_star = oracle.brute_force_optimum(sc)
        s_bar, _, bound = optimality_gap_bound(sc, args.gamma) if args.gamma > 0 else (None, None, None)
        summary["optimum_mbps"] = _mbps(s_star)
        summary["stationary_expected_mbps"] = s_bar
        summary["gap_bound_mbps"] = bound
        _check(run.system_throughput.max() <= s_star * (1 + 1e-12), "run exceeded the brute-force optimum")
    _emit(args, "coop", summary)
    return EXIT_OK


def cmd_noncoop(args) -> int:
    sf = _load(args)
    sc = sf.scenario
    run = run_noncooperative(sc)
    rec = br_record(run, _meta(args, sf))
    rec.write(Path(args.out_dir) / "noncoop_trace.csv")
    rates = per_ap_throughput(sc, run.final_profile)
    summary = {
        "algorithm": "noncoop",
        "final_profile": list(run.final_profile),
        "sweeps": run.stages_to_converge,
        "updates": run.updates,
        "ap_throughput_mbps": [_mbps(v) for v in rates],
        "system_throughput_mbps": _mbps(rates.sum()),
        "potential": potential_phi(sc, run.final_profile),
    }
    _check(verify_ne(sc, run.final_profile), "terminal profile is not a Nash equilibrium")
    if args.verify:
        ne = oracle.enumerate_ne(sc)
        _check(run.final_profile in ne, "terminal profile missing from the oracle's equilibrium set")
        _, s_star = oracle.brute_force_optimum(sc)
        summary["optimum_mbps"] = _mbps(s_star)
        summary["oracle_ne_count"] = len(ne)
    _emit(args, "noncoop", summary)
    return EXIT_OK


def cmd_poa(args) -> int:
    sf = _load(args)
    rep = price_of_anarchy(sf.scenario)
    summary = {
        "algorithm": "poa",
        "ne_count": rep.ne_count,
        "worst_ne_mbps": _mbps(rep.worst_ne_throughput),
        "best_ne_mbps": _mbps(rep.best_ne_throughput),
        "optimum_mbps": _mbps(rep.optimal_throughput),
        "poa": rep.poa,
        "lower_bound": rep.lower_bound,
    }
    if args.verify:
        ne = oracle.enumerate_ne(sf.scenario)
        _check(sorted(ne) == sorted(rep.equilibria), "equilibrium sets disagree with the oracle")
    _emit(args, "poa", summary)
    return EXIT_OK


def cmd_assoc(args) -> int:
    sf = _load(args)
    sc = sf.scenario
    eq = run_noncooperative(sc).final_profile
    pop = sf.population
    if pop is None or args.users:
        pop = generate_population(sc, args.users or 20, seed=args.seed, mobility_cost=args.delta,
                                  lambda_max=sf.lambda_max)
    churn = ()
    if args.churn:
        churn = sf.churn or random_churn(pop, sc.n_aps, args.seed)
    cfg = AssocConfig(mean_timer=args.mean_timer, horizon=args.iters, seed=args.seed, churn_schedule=churn)
    run = run_association(sc, eq, pop, cfg)
    rec = assoc_record(run, _meta(args, sf, mean_timer=args.mean_timer, churn=bool(churn)))
    rec.write(Path(args.out_dir) / "assoc_trace.csv")
    final = run.final_population
    counts = np.bincount(run.final_strategy, minlength=sc.n_aps)
    summary = {
        "algorithm": "assoc",
        "equilibrium_profile": list(eq),
        "events": len(run.trace),
        "segments": [list(s) for s in run.segments],
        "equilibrium_reached": run.equilibrium_reached,
        "converged_at": run.converged_at,
        "users_per_ap": counts.tolist(),
        "final_potential": run.trace[-1].potential if run.trace else None,
    }
    if args.verify:
        _check(run.converged_at is not None, "association run did not converge")
        _check(verify_state_based_ne(sc, eq, final, run.final_strategy, run.final_strategy),
               "terminal state is not a state-based equilibrium")
    _emit(args, "assoc", summary)
    return EXIT_OK


def cmd_verify(args) -> int:
    """Cross-check every algorithm against the brute-force oracles on an enumerable scenario."""
    sf = _load(args)
    sc = sf.scenario
    report: dict = {"profiles": sc.profile_space_size()}
    _, pi_formula = stationary_distribution(sc, args.gamma)
    _, q, pi_chain = oracle.exact_chain_analysis(sc, args.gamma)
    err = float(np.max(np.abs(pi_formula - pi_chain)))
    report["stationary_max_abs_error"] = err
    _check(err <= 1e-9, "stationary distribution mismatch")
    flow = pi_chain[:, None] * q
    report["detailed_balance_max_abs"] = float(np.max(np.abs(flow - flow.T)))
    if args.gamma > 0:
        s_bar, s_star, bound = optimality_gap_bound(sc, args.gamma)
        report.update(expected_mbps=s_bar, optimum_mbps=s_star, gap_bound_mbps=bound)
    run = run_noncooperative(sc)
    ne = oracle.enumerate_ne(sc)
    _check(run.final_profile in ne, "best-response terminal profile is not an oracle equilibrium")
    rep = price_of_anarchy(sc)
    _check(sorted(ne) == sorted(rep.equilibria), "equilibrium sets disagree with the oracle")
    report.update(ne_count=len(ne), poa=rep.poa, poa_lower_bound=rep.lower_bound)
    _emit(args, "verify", report)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", default=None,
                        help="scenario JSON (default: the bundled 8-AP reference layout)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--iters", type=int, default=None)
    common.add_argument("--gamma", type=float, default=0.85, help="inverse temperature per Mbps")
    common.add_argument("--out-dir", default="out")
    common.add_argument("--verify", action="store_true", help="cross-check against brute-force oracles")

    p = argparse.ArgumentParser(prog="spectrum-share", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-scenario", help="write a random scenario file")
    g.add_argument("--aps", type=int, default=8)
    g.add_argument("--channels", type=int, default=4)
    g.add_argument("--vacant", type=int, default=3)
    g.add_argument("--side", type=float, default=500.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--power-min", type=float, default=100.0)
    g.add_argument("--power-max", type=float, default=400.0)
    g.add_argument("--noise-dbm", type=float, default=-100.0)
    g.add_argument("--users", type=int, default=0)
    g.add_argument("--delta", type=float, default=0.06)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_scenario)

    c = sub.add_parser("coop", parents=[common], help="cooperative Gibbs channel selection")
    c.set_defaults(func=cmd_coop, iters=20000)
    n = sub.add_parser("noncoop", parents=[common], help="non-cooperative best-response channel selection")
    n.set_defaults(func=cmd_noncoop)
    a = sub.add_parser("assoc", parents=[common], help="distributed AP association")
    a.add_argument("--churn", action="store_true", help="apply the file's churn schedule (or a default one)")
    a.add_argument("--users", type=int, default=0, help="generate this many random users")
    a.add_argument("--delta", type=float, default=0.06, help="mobility cost (Mbps/m) for generated users")
    a.add_argument("--mean-timer", type=float, default=1.0)
    a.set_defaults(func=cmd_assoc)
    q = sub.add_parser("poa", parents=[common], help="enumerate equilibria and the price of anarchy")
    q.set_defaults(func=cmd_poa)
    v = sub.add_parser("verify", parents=[common], help="run every oracle cross-check")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InvariantViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except InvalidInput as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
