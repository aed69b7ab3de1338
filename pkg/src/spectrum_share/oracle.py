"""Brute-force reference implementations.

Nothing here calls into the vectorized kernels of :mod:`spectrum_share.model`;
only the scenario data (powers, radii, distances, noise) is shared, so an
agreement between oracle and main path actually means something.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .model import InvalidInput, InvariantViolation, Scenario

REL_TOL = 1e-12


class EnumerationLimitError(InvalidInput):
    pass


@dataclass(frozen=True)
class EnumerationGuard:
    max_profiles: int = 10**6

    def check(self, scenario: Scenario) -> int:
        size = 1
        for ap in scenario.aps:
            size *= len(ap.feasible_channels)
        if size > self.max_profiles:
            raise EnumerationLimitError(
                f"profile space has {size} profiles, above the cap of {self.max_profiles}"
            )
        return size


DEFAULT_GUARD = EnumerationGuard()


def ap_rate(scenario: Scenario, profile, n: int) -> float:
    """Throughput (bps) of AP ``n`` evaluated term by term in plain Python."""
    ap = scenario.aps[n]
    theta = scenario.path_loss_exponent
    received = ap.power / ap.coverage_radius**theta
    denom = ap.noise[ap.feasible_channels.index(profile[n])]
    for i, other in enumerate(scenario.aps):
        if i != n and profile[i] == profile[n]:
            denom += other.power / _distance(scenario, i, n) ** theta
    return scenario.bandwidth * math.log2(1.0 + received / denom)


def _distance(scenario: Scenario, i: int, n: int) -> float:
    if scenario.distances is not None:
        return scenario.distances[i][n]
    (xi, yi), (xn, yn) = scenario.aps[i].position, scenario.aps[n].position
    return math.hypot(xi - xn, yi - yn)


def total_throughput(scenario: Scenario, profile) -> float:
    return sum(ap_rate(scenario, profile, n) for n in range(len(scenario.aps)))


def _profiles(scenario: Scenario):
    return itertools.product(*(ap.feasible_channels for ap in scenario.aps))


def brute_force_optimum(scenario: Scenario, guard: EnumerationGuard = DEFAULT_GUARD):
    """Exact maximizer of system throughput; ties go to the lexicographically smallest profile."""
    guard.check(scenario)
    best, best_val = None, -math.inf
    for profile in _profiles(scenario):
        val = total_throughput(scenario, profile)
        if val > best_val:
            best, best_val = profile, val
    return best, best_val


def is_nash(scenario: Scenario, profile) -> bool:
    for n, ap in enumerate(scenario.aps):
        current = ap_rate(scenario, profile, n)
        for c in ap.feasible_channels:
            if c == profile[n]:
                continue
            trial = profile[:n] + (c,) + profile[n + 1 :]
            if ap_rate(scenario, trial, n) - current > REL_TOL * abs(current):
                return False
    return True


def enumerate_ne(scenario: Scenario, guard: EnumerationGuard = DEFAULT_GUARD) -> list[tuple]:
    guard.check(scenario)
    found = [p for p in _profiles(scenario) if is_nash(scenario, p)]
    if not found:
        raise InvariantViolation("no pure Nash equilibrium found in a potential game")
    return found


def exact_chain_analysis(scenario: Scenario, gamma: float, utility_scale: float = 1e-6,
                         guard: EnumerationGuard = EnumerationGuard(max_profiles=5000)):
    """Transition matrix of the cooperative channel-selection chain and its stationary vector.

    States follow lexicographic profile order. The stationary vector comes
    from GTH state reduction, which avoids subtractions and stays accurate
    for the nearly decomposable chains that large ``gamma`` produces.
    Low-throughput states are eliminated first so the reduction ratios stay
    bounded even when transition weights span the whole float range.
    """
    guard.check(scenario)
    states = list(_profiles(scenario))
    index = {p: i for i, p in enumerate(states)}
    n_states, n_aps = len(states), len(scenario.aps)
    totals = {p: total_throughput(scenario, p) for p in states}
    q = np.zeros((n_states, n_states))
    for p in states:
        row = index[p]
        for n, ap in enumerate(scenario.aps):
            moves = [p[:n] + (c,) + p[n + 1 :] for c in ap.feasible_channels]
            logits = [gamma * utility_scale * totals[m] for m in moves]
            top = max(logits)
            weights = [math.exp(v - top) for v in logits]
            z = sum(weights)
            for m, w in zip(moves, weights):
                if m != p:
                    q[row, index[m]] += w / z / n_aps
        q[row, row] = 1.0 - q[row].sum()
    order = sorted(range(n_states), key=lambda i: -totals[states[i]])
    pi = np.empty(n_states)
    pi[order] = _gth_stationary(q[np.ix_(order, order)])
    if not np.all(np.isfinite(pi)):
        raise InvariantViolation("balance equations have no finite solution")
    return states, q, pi


def _gth_stationary(q: np.ndarray) -> np.ndarray:
    p = np.array(q, dtype=float)
    n = len(p)
    for k in range(n - 1, 0, -1):
        out = p[k, :k].sum()
        if not out > 0:
            raise InvariantViolation(
                f"state {k} cannot leave its class: transition weights underflow or the chain is reducible"
            )
        p[:k, k] /= out
        p[:k, :k] += np.outer(p[:k, k], p[k, :k])
    pi = np.zeros(n)
    pi[0] = 1.0
    for k in range(1, n):
        pi[k] = pi[:k] @ p[:k, k]
    return pi / pi.sum()


def monte_carlo_backoff(lambda_max: int, x: int, trials: int, seed: int, chunk: int = 200_000) -> float:
    """Empirical probability that contender 0 draws a slot strictly below every other contender."""
    if trials < 1:
        raise InvalidInput("trials must be >= 1")
    if x <= 1:
        return 1.0
    rng = np.random.default_rng(seed)
    wins, left = 0, trials
    while left:
        m = min(chunk, left)
        draws = rng.integers(1, lambda_max + 1, size=(m, x))
        wins += int(np.count_nonzero(draws[:, 0] < draws[:, 1:].min(axis=1)))
        left -= m
    return wins / trials


def monte_carlo_win_rates(lambda_max: int, x: int, trials: int, seed: int) -> np.ndarray:
    """Per-contender empirical win rates (exchangeability check)."""
    rng = np.random.default_rng(seed)
    draws = rng.integers(1, lambda_max + 1, size=(trials, x))
    low = draws.min(axis=1, keepdims=True)
    unique = (draws == low).sum(axis=1) == 1
    winners = draws == low
    return (winners & unique[:, None]).mean(axis=0)
