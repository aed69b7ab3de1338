"""Non-cooperative channel selection: best response, NE checks and price of anarchy."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import (
    REL_TOL,
    InvalidInput,
    InvariantViolation,
    Scenario,
    candidate_throughputs,
    per_ap_throughput,
    potential_phi,
)

MAX_ENUMERATION = 10**6


def _improves(new: float, old: float) -> bool:
    return new - old > REL_TOL * abs(old)


def best_response(scenario: Scenario, profile: Sequence[int], n: int) -> int:
    """Channel maximizing AP ``n``'s own throughput; exact ties go to the smallest label."""
    profile = scenario.check_profile(profile)
    scenario.check_ap(n)
    chans, table = candidate_throughputs(scenario, profile, n)
    return int(chans[int(np.argmax(table[:, n]))])


def verify_ne(scenario: Scenario, profile: Sequence[int]) -> bool:
    profile = scenario.check_profile(profile)
    for n in range(scenario.n_aps):
        chans, table = candidate_throughputs(scenario, profile, n)
        current = table[chans.index(profile[n]), n]
        if _improves(float(table[:, n].max()), float(current)):
            return False
    return True


@dataclass
class BestResponseRun:
    """Trace rows are ``(stage, actor, profile, phi, per-AP throughputs)``.

    Row 0 is the initial profile with actor ``-1``; every later row is one
    AP's turn within a sweep, whether or not it changed channel.
    """

    trace: list[tuple] = field(default_factory=list)
    converged: bool = False
    stages_to_converge: int = 0
    updates: int = 0

    @property
    def final_profile(self) -> tuple[int, ...]:
        return self.trace[-1][2]

    @property
    def phi_values(self) -> list[float]:
        return [row[3] for row in self.trace]


def run_noncooperative(scenario: Scenario, max_sweeps: int | None = None) -> BestResponseRun:
    """Round-robin best response from the smallest-channel start until a sweep changes nothing.

    A sweep counter includes the final, change-free sweep. ``max_sweeps``
    defaults to the profile-space size, which the finite improvement property
    never lets the dynamics exceed.
    """
    if max_sweeps is None:
        max_sweeps = scenario.profile_space_size()
    profile = [ap.feasible_channels[0] for ap in scenario.aps]
    run = BestResponseRun()
    run.trace.append((0, -1, tuple(profile), potential_phi(scenario, profile),
                      per_ap_throughput(scenario, profile)))
    for stage in range(1, max_sweeps + 1):
        changed = False
        for n in range(scenario.n_aps):
            chans, table = candidate_throughputs(scenario, profile, n)
            cur = table[chans.index(profile[n]), n]
            best = int(np.argmax(table[:, n]))
            if _improves(float(table[best, n]), float(cur)):
                profile[n] = chans[best]
                changed = True
                run.updates += 1
            run.trace.append((stage, n, tuple(profile), potential_phi(scenario, profile),
                              per_ap_throughput(scenario, profile)))
        if not changed:
            run.converged = True
            run.stages_to_converge = stage
            return run
    raise InvariantViolation(f"best response did not settle within {max_sweeps} sweeps")


@dataclass(frozen=True)
class PoaReport:
    worst_ne_throughput: float
    best_ne_throughput: float
    optimal_throughput: float
    poa: float
    lower_bound: float
    ne_count: int
    equilibria: tuple = ()


def noise_extremes(scenario: Scenario) -> tuple[np.ndarray, np.ndarray]:
    """Per-AP (max, min) noise over the feasible channels."""
    hi = np.array([max(ap.noise) for ap in scenario.aps])
    lo = np.array([min(ap.noise) for ap in scenario.aps])
    return hi, lo


def ne_throughput_floor(scenario: Scenario) -> np.ndarray:
    """Guaranteed per-AP throughput (bps) at any Nash equilibrium.

    Worst noise plus the total interference from all other APs spread evenly
    over the AP's feasible channels.
    """
    hi, _ = noise_extremes(scenario)
    spread = scenario.cross.sum(axis=0) / np.array([len(ap.feasible_channels) for ap in scenario.aps])
    return scenario.bandwidth * np.log2(1.0 + scenario.signal / (hi + spread))


def poa_lower_bound(scenario: Scenario) -> float:
    _, lo = noise_extremes(scenario)
    ceiling = np.log2(1.0 + scenario.signal / lo)
    return float(ne_throughput_floor(scenario).sum() / scenario.bandwidth / ceiling.sum())


def price_of_anarchy(scenario: Scenario) -> PoaReport:
    size = scenario.profile_space_size()
    if size > MAX_ENUMERATION:
        raise InvalidInput(f"profile space has {size} profiles, above the cap of {MAX_ENUMERATION}")
    totals, equilibria = [], []
    for p in scenario.profiles():
        total = float(per_ap_throughput(scenario, p).sum())
        totals.append(total)
        if verify_ne(scenario, p):
            equilibria.append((p, total))
    if not equilibria:
        raise InvariantViolation("no pure Nash equilibrium found in a potential game")
    optimum = max(totals)
    worst = min(t for _, t in equilibria)
    best = max(t for _, t in equilibria)
    poa = worst / optimum
    bound = poa_lower_bound(scenario)
    if poa < bound or poa > 1 + 1e-12:
        raise InvariantViolation(f"PoA {poa} outside [{bound}, 1]")
    return PoaReport(worst, best, optimum, poa, bound, len(equilibria), tuple(p for p, _ in equilibria))


def sign(value: float, scale: float) -> int:
    """Sign with a relative dead zone of ``REL_TOL * scale``."""
    if value > REL_TOL * scale:
        return 1
    if value < -REL_TOL * scale:
        return -1
    return 0


def potential_sign_violations(scenario: Scenario) -> list[tuple]:
    """Every unilateral deviation whose potential change disagrees in sign with the mover's gain."""
    bad = []
    for p in scenario.profiles():
        phi = potential_phi(scenario, p)
        rates = per_ap_throughput(scenario, p)
        for n, ap in enumerate(scenario.aps):
            for c in ap.feasible_channels:
                if c == p[n]:
                    continue
                q = p[:n] + (c,) + p[n + 1 :]
                phi_q = potential_phi(scenario, q)
                u_q = per_ap_throughput(scenario, q)[n]
                s_phi = sign(phi_q - phi, max(abs(phi), abs(phi_q)))
                s_u = sign(u_q - rates[n], max(abs(u_q), abs(rates[n])))
                if s_phi != s_u:
                    bad.append((p, n, c, phi_q - phi, u_q - rates[n]))
    return bad


def efficiency_gap(noncoop_total: float, coop_total: float) -> float:
    """Relative shortfall of the non-cooperative outcome against the cooperative one."""
    return (coop_total - noncoop_total) / coop_total if coop_total else math.nan
