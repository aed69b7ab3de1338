"""Cooperative channel selection as an asynchronous Gibbs sampler.

The chain updates one uniformly chosen AP per iteration, redrawing its
channel with probability proportional to ``exp(gamma * S)`` where ``S`` is
the resulting system throughput. ``gamma`` is expressed per unit of
``utility_scale * bps``; the default scale measures throughput in Mbps, which
is the unit in which gamma values around 0.2-0.85 are meaningful.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from itertools import accumulate
from typing import Iterator, Optional, Sequence

import numpy as np

from .model import (
    InvalidInput,
    InvariantViolation,
    Scenario,
    candidate_throughputs,
    per_ap_throughput,
)

MBPS = 1e-6
DEFAULT_CACHE_SIZE = 200_000
MAX_ENUMERATION = 10**6


@dataclass(frozen=True)
class GibbsConfig:
    gamma: float
    iterations: int
    seed: int = 0
    initial_profile: Optional[tuple[int, ...]] = None
    utility_scale: float = MBPS

    def __post_init__(self):
        if not self.gamma >= 0:
            raise InvalidInput("gamma must be >= 0")
        if self.iterations < 1:
            raise InvalidInput("iterations must be >= 1")
        if not self.utility_scale > 0:
            raise InvalidInput("utility_scale must be positive")


@dataclass
class GibbsRun:
    """Full trace of a cooperative run.

    Row ``t`` of each array describes the chain after iteration ``t + 1``;
    ``initial_profile`` is the state before the first iteration.
    """

    initial_profile: tuple[int, ...]
    updating_ap: np.ndarray  # (T,)
    profiles: np.ndarray  # (T, N) channel labels
    ap_throughputs: np.ndarray  # (T, N) bps
    system_throughput: np.ndarray  # (T,) bps
    running_average: np.ndarray  # (T,) bps, time average up to and including t

    @property
    def time_average_system_throughput(self) -> float:
        return float(self.running_average[-1])

    @property
    def final_profile(self) -> tuple[int, ...]:
        return tuple(int(c) for c in self.profiles[-1])

    def rows(self) -> Iterator[tuple]:
        for t in range(len(self.updating_ap)):
            yield (
                t + 1,
                int(self.updating_ap[t]),
                tuple(int(c) for c in self.profiles[t]),
                self.ap_throughputs[t],
                float(self.system_throughput[t]),
            )

    def occupancy(self, burn_in: int = 0) -> dict[tuple[int, ...], float]:
        """Empirical fraction of iterations spent in each profile."""
        prof = self.profiles[burn_in:]
        uniq, counts = np.unique(prof, axis=0, return_counts=True)
        total = counts.sum()
        return {tuple(int(c) for c in row): cnt / total for row, cnt in zip(uniq, counts)}


def _cumulative_weights(scenario: Scenario, profile, n: int, gamma: float, scale: float):
    chans, table = candidate_throughputs(scenario, profile, n)
    logits = gamma * scale * table.sum(axis=1)
    weights = np.exp(logits - logits.max())
    return chans, list(accumulate(weights.tolist()))


def selection_probabilities(
    scenario: Scenario, profile: Sequence[int], n: int, gamma: float, utility_scale: float = MBPS
) -> dict[int, float]:
    profile = scenario.check_profile(profile)
    scenario.check_ap(n)
    chans, cum = _cumulative_weights(scenario, profile, n, gamma, utility_scale)
    probs = np.diff([0.0] + cum) / cum[-1]
    return dict(zip(chans, probs.tolist()))


def gibbs_step(
    scenario: Scenario,
    profile: Sequence[int],
    n: int,
    gamma: float,
    rng: np.random.Generator,
    utility_scale: float = MBPS,
) -> tuple[int, ...]:
    """Redraw AP ``n``'s channel from the softmax of the resulting system throughput."""
    profile = scenario.check_profile(profile)
    scenario.check_ap(n)
    chans, cum = _cumulative_weights(scenario, profile, n, gamma, utility_scale)
    pick = chans[bisect_right(cum, rng.random() * cum[-1])]
    return profile[:n] + (pick,) + profile[n + 1 :]


def _random_profile(scenario: Scenario, rng: np.random.Generator) -> tuple[int, ...]:
    return tuple(int(ap.feasible_channels[rng.integers(len(ap.feasible_channels))]) for ap in scenario.aps)


def run_cooperative(scenario: Scenario, config: GibbsConfig, cache_size: int = DEFAULT_CACHE_SIZE) -> GibbsRun:
    rng = np.random.default_rng(config.seed)
    if config.initial_profile is not None:
        start = scenario.check_profile(config.initial_profile)
    else:
        start = _random_profile(scenario, rng)
    n_aps, steps = scenario.n_aps, config.iterations
    aps = rng.integers(0, n_aps, size=steps)
    draws = rng.random(steps)

    # conditional distributions depend only on (n, a_-n); memoize them
    cache: dict = {}
    cur = list(start)
    chosen = np.empty(steps, dtype=np.int64)
    for t in range(steps):
        n = int(aps[t])
        key = (n, tuple(cur))
        hit = cache.get(key)
        if hit is None:
            hit = _cumulative_weights(scenario, key[1], n, config.gamma, config.utility_scale)
            if len(cache) < cache_size:
                cache[key] = hit
        chans, cum = hit
        cur[n] = chans[bisect_right(cum, draws[t] * cum[-1])]
        chosen[t] = cur[n]

    profiles = _replay(start, aps, chosen)
    uniq, inverse = np.unique(profiles, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    rates = np.array([per_ap_throughput(scenario, row) for row in uniq])
    ap_rates = rates[inverse]
    total = ap_rates.sum(axis=1)
    running = np.cumsum(total) / np.arange(1, steps + 1)
    return GibbsRun(start, aps, profiles, ap_rates, total, running)


def _replay(start, aps: np.ndarray, chosen: np.ndarray) -> np.ndarray:
    """Rebuild the (T, N) profile matrix from per-step single-AP updates."""
    steps, n_aps = len(aps), len(start)
    profiles = np.empty((steps, n_aps), dtype=np.int64)
    idx = np.arange(steps)
    for n in range(n_aps):
        mine = aps == n
        last = np.where(mine, idx, -1)
        np.maximum.accumulate(last, out=last)
        col = np.where(last >= 0, chosen[np.maximum(last, 0)], start[n])
        profiles[:, n] = col
    return profiles


def _enumerate_totals(scenario: Scenario, limit: int = MAX_ENUMERATION):
    size = scenario.profile_space_size()
    if size > limit:
        raise InvalidInput(f"profile space has {size} profiles, above the cap of {limit}")
    profiles = list(scenario.profiles())
    totals = np.array([per_ap_throughput(scenario, p).sum() for p in profiles])
    return profiles, totals


def _boltzmann(totals: np.ndarray, gamma: float, scale: float) -> np.ndarray:
    logits = gamma * scale * totals
    w = np.exp(logits - logits.max())
    return w / w.sum()


def stationary_distribution(scenario: Scenario, gamma: float, utility_scale: float = MBPS):
    """Closed-form stationary law of the chain over the lexicographically ordered profile space.

    Returns ``(profiles, probabilities)``.
    """
    if not gamma >= 0:
        raise InvalidInput("gamma must be >= 0")
    profiles, totals = _enumerate_totals(scenario)
    return profiles, _boltzmann(totals, gamma, utility_scale)


def optimality_gap_bound(scenario: Scenario, gamma: float, utility_scale: float = MBPS):
    """Expected throughput under the stationary law versus the optimum.

    Returns ``(S_bar, S_star, bound)`` in units of ``utility_scale * bps``
    (Mbps by default), where ``bound = ln|profiles| / gamma``.
    """
    if not gamma > 0:
        raise InvalidInput("gap bound needs gamma > 0")
    profiles, totals = _enumerate_totals(scenario)
    scaled = totals * utility_scale
    q = _boltzmann(totals, gamma, utility_scale)
    s_star = float(scaled.max())
    # summing non-negative shortfalls keeps the gap >= 0 in floating point
    gap = float(q @ (s_star - scaled))
    bound = math.log(len(profiles)) / gamma
    if not 0.0 <= gap <= bound * (1 + 1e-12):
        raise InvariantViolation(f"optimality gap {gap} outside [0, {bound}]")
    return s_star - gap, s_star, bound
