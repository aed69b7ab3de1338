"""State-based AP association game for mobile secondary users.

A user's payoff at AP ``b`` is ``H[k][b] * U_b * g(x_b) - delta_k * d(b, s_k)``
with ``U_b`` the AP's equilibrium throughput in Mbps, ``x_b`` the number of
users associated with ``b`` and ``s_k`` the user's current AP. Users update
asynchronously on exponential timers; after each update the state follows
the strategy (users physically move to the AP they chose).
"""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .model import (
    REL_TOL,
    ContentionModel,
    InvalidInput,
    InvariantViolation,
    Scenario,
    UserConfig,
    UserPopulation,
    contention_success,
    per_ap_throughput,
)

log = logging.getLogger(__name__)

MBPS = 1e-6


class _Game:
    """Dense arrays for the active user set; rebuilt whenever the population changes."""

    def __init__(self, scenario: Scenario, ap_rates: np.ndarray, users: Sequence[UserConfig],
                 contention: ContentionModel):
        self.n_aps = scenario.n_aps
        self.rates = ap_rates
        self.users = list(users)
        for u in self.users:
            if len(u.gains) != self.n_aps:
                raise InvalidInput(f"user {u.uid} has {len(u.gains)} gains, scenario has {self.n_aps} APs")
        self.gains = np.array([u.gains for u in self.users], dtype=float).reshape(-1, self.n_aps)
        self.delta = np.array([u.mobility_cost for u in self.users], dtype=float)
        self.moves = np.array(
            [scenario.dist if u.distance_override is None else np.array(u.distance_override)
             for u in self.users],
            dtype=float,
        ).reshape(-1, self.n_aps, self.n_aps)
        self.contention = contention
        top = max(len(self.users), 1) + 1
        self.g = np.array([contention.g(x) for x in range(top + 1)])
        self.log_g_cum = np.cumsum(np.log(self.g))

    def values(self, k: int, strategy: Sequence[int], state: Sequence[int]) -> np.ndarray:
        """Payoff of user ``k`` for every AP, others fixed at ``strategy``."""
        x = np.bincount(np.asarray(strategy, dtype=int), minlength=self.n_aps)
        x[strategy[k]] -= 1
        rate = self.gains[k] * self.rates * self.g[x + 1]
        return rate - self.delta[k] * self.moves[k][:, state[k]]

    def best(self, k: int, strategy: Sequence[int], state: Sequence[int]) -> int:
        vals = self.values(k, strategy, state)
        stay = int(state[k])
        cand = int(np.argmax(vals))
        if vals[cand] - vals[stay] > REL_TOL * max(abs(vals[stay]), abs(vals[cand])):
            return cand
        return stay

    def potential(self, strategy: Sequence[int]) -> float:
        b = np.asarray(strategy, dtype=int)
        x = np.bincount(b, minlength=self.n_aps)
        idx = np.arange(len(b))
        return float(
            np.log(self.rates[b]).sum()
            + self.log_g_cum[x].sum()
            + np.log(self.gains[idx, b]).sum()
        )

    def is_equilibrium(self, strategy: Sequence[int]) -> bool:
        return all(self.best(k, strategy, strategy) == strategy[k] for k in range(len(strategy)))


def _ap_rates_mbps(scenario: Scenario, eq_profile) -> np.ndarray:
    return per_ap_throughput(scenario, eq_profile) * MBPS


def _game(scenario, eq_profile, population: UserPopulation) -> _Game:
    population.check_for(scenario)
    return _Game(scenario, _ap_rates_mbps(scenario, eq_profile), population.users, population.contention)


def _check_vector(vec: Sequence[int], population: UserPopulation, n_aps: int, name: str) -> tuple[int, ...]:
    vec = tuple(int(v) for v in vec)
    if len(vec) != population.size:
        raise InvalidInput(f"{name} must hold one AP per user")
    if any(not 0 <= v < n_aps for v in vec):
        raise InvalidInput(f"{name} has an invalid AP index")
    return vec


def payoff(scenario: Scenario, eq_profile, population: UserPopulation, state: Sequence[int],
           k: int, b_k: int, strategy: Optional[Sequence[int]] = None) -> float:
    """Payoff (Mbps) of user ``k`` choosing AP ``b_k`` while sitting at ``state[k]``.

    Other users' choices come from ``strategy`` (default: ``state``).
    """
    scenario.check_ap(b_k)
    state = _check_vector(state, population, scenario.n_aps, "state")
    strategy = state if strategy is None else _check_vector(strategy, population, scenario.n_aps, "strategy")
    if not 0 <= k < population.size:
        raise InvalidInput(f"user index {k} outside 0..{population.size - 1}")
    return float(_game(scenario, eq_profile, population).values(k, strategy, state)[b_k])


def state_potential(scenario: Scenario, eq_profile, population: UserPopulation, b: Sequence[int]) -> float:
    b = _check_vector(b, population, scenario.n_aps, "strategy")
    return _game(scenario, eq_profile, population).potential(b)


def user_best_response(scenario: Scenario, eq_profile, population: UserPopulation,
                       state: Sequence[int], k: int, strategy: Optional[Sequence[int]] = None) -> int:
    """Best AP for user ``k``; ties prefer staying, then the smallest AP index."""
    state = _check_vector(state, population, scenario.n_aps, "state")
    strategy = state if strategy is None else _check_vector(strategy, population, scenario.n_aps, "strategy")
    if not 0 <= k < population.size:
        raise InvalidInput(f"user index {k} outside 0..{population.size - 1}")
    return _game(scenario, eq_profile, population).best(k, strategy, state)


def verify_state_based_ne(scenario: Scenario, eq_profile, population: UserPopulation,
                          b: Sequence[int], s: Sequence[int]) -> bool:
    b = _check_vector(b, population, scenario.n_aps, "strategy")
    s = _check_vector(s, population, scenario.n_aps, "state")
    if b != s:
        # F(b, s) = b, so s is reachable from (b, s) only when s == b
        return False
    return _game(scenario, eq_profile, population).is_equilibrium(b)


@dataclass(frozen=True)
class ChurnEvent:
    """Population change applied right after update event ``at_event``.

    ``entry_aps`` gives the starting AP of each added user; ``None`` entries
    (or a missing tuple) draw the AP uniformly at random.
    """

    at_event: int
    remove: tuple[int, ...] = ()
    add: tuple[UserConfig, ...] = ()
    entry_aps: Optional[tuple[Optional[int], ...]] = None


@dataclass(frozen=True)
class AssocConfig:
    mean_timer: float = 1.0
    horizon: Optional[int] = None
    seed: int = 0
    churn_schedule: tuple[ChurnEvent, ...] = ()

    def __post_init__(self):
        if not self.mean_timer > 0:
            raise InvalidInput("mean_timer must be positive")
        if self.horizon is not None and self.horizon < 1:
            raise InvalidInput("horizon must be >= 1")


class AssocEvent(NamedTuple):
    index: int
    time: float
    user: int  # uid
    moved_from: int
    moved_to: int
    uids: tuple[int, ...]
    strategy: tuple[int, ...]
    state: tuple[int, ...]
    potential: float
    payoffs: tuple[float, ...]
    improved: bool


@dataclass
class AssocRun:
    """Event trace plus convergence bookkeeping.

    ``segments`` holds ``(start_event, converged_event)`` per churn-free
    stretch; ``converged_at`` is the converged event of the last stretch.
    ``equilibrium_reached`` is the first event of each stretch after which
    the strategy was a state-based equilibrium.
    """

    trace: list[AssocEvent] = field(default_factory=list)
    segments: list[list] = field(default_factory=list)
    equilibrium_reached: list[Optional[int]] = field(default_factory=list)
    final_users: tuple[UserConfig, ...] = ()
    final_strategy: tuple[int, ...] = ()
    horizon: int = 0
    lambda_max: int = 10

    @property
    def converged_at(self) -> Optional[int]:
        return self.segments[-1][1] if self.segments else None

    @property
    def final_population(self) -> UserPopulation:
        return UserPopulation(self.final_users, self.final_strategy, self.lambda_max)


def run_association(scenario: Scenario, eq_profile, population: UserPopulation,
                    config: AssocConfig) -> AssocRun:
    """Discrete-event simulation of asynchronous best responses with optional churn."""
    population.check_for(scenario)
    rates = _ap_rates_mbps(scenario, eq_profile)
    rng = np.random.default_rng(config.seed)
    n_aps = scenario.n_aps
    users = list(population.users)
    strategy = list(population.state)
    next_uid = max((u.uid for u in users), default=-1) + 1
    schedule = sorted(config.churn_schedule, key=lambda c: c.at_event)
    peak = population.size + sum(len(c.add) for c in schedule)
    contention = ContentionModel(population.lambda_max, x_max=max(peak, 1))
    horizon = config.horizon
    if horizon is None:
        last = schedule[-1].at_event if schedule else 0
        horizon = last + max(peak, 1) * n_aps * 10

    game = _Game(scenario, rates, users, contention)
    heap = [(rng.exponential(config.mean_timer), u.uid) for u in users]
    heapq.heapify(heap)
    active = {u.uid: k for k, u in enumerate(users)}

    run = AssocRun(horizon=horizon, lambda_max=population.lambda_max)
    run.segments.append([0, None])
    run.equilibrium_reached.append(0 if game.is_equilibrium(strategy) else None)
    quiet: set[int] = set()
    event = 0
    while event < horizon and heap:
        now, uid = heapq.heappop(heap)
        if uid not in active:
            continue
        event += 1
        heapq.heappush(heap, (now + rng.exponential(config.mean_timer), uid))
        k = active[uid]
        old = strategy[k]
        new = game.best(k, strategy, strategy)
        improved = new != old
        if improved:
            psi_before = game.potential(strategy)
            strategy[k] = new
            psi = game.potential(strategy)
            if not psi > psi_before:
                raise InvariantViolation(
                    f"potential did not rise on an improving move of user {uid}: {psi_before} -> {psi}"
                )
            quiet = {uid}
        else:
            psi = game.potential(strategy)
            quiet.add(uid)
        if sum(np.bincount(strategy, minlength=n_aps)) != len(users):
            raise InvariantViolation("occupancy no longer sums to the user count")
        pay = tuple(
            float(game.values(j, strategy, strategy)[strategy[j]]) for j in range(len(users))
        )
        snapshot = tuple(strategy)
        run.trace.append(AssocEvent(event, now, uid, old, new, tuple(u.uid for u in users),
                                    snapshot, snapshot, psi, pay, improved))
        if run.equilibrium_reached[-1] is None and game.is_equilibrium(strategy):
            run.equilibrium_reached[-1] = event
        if run.segments[-1][1] is None and len(quiet) == len(users):
            run.segments[-1][1] = event

        churned = False
        while schedule and schedule[0].at_event == event:
            users, strategy, next_uid = _apply_churn(
                schedule.pop(0), users, strategy, next_uid, n_aps, rng, heap, now, config.mean_timer
            )
            churned = True
        if churned:
            active = {u.uid: k for k, u in enumerate(users)}
            game = _Game(scenario, rates, users, contention)
            quiet = set()
            run.segments.append([event, None])
            run.equilibrium_reached.append(event if game.is_equilibrium(strategy) else None)
        elif run.segments[-1][1] is not None and not schedule:
            break

    run.final_users = tuple(users)
    run.final_strategy = tuple(strategy)
    if run.converged_at is None:
        log.info("association run hit the horizon (%d events) without converging", horizon)
    return run


def _apply_churn(churn: ChurnEvent, users, strategy, next_uid, n_aps, rng, heap, now, mean_timer):
    gone = set(churn.remove)
    unknown = gone - {u.uid for u in users}
    if unknown:
        raise InvalidInput(f"churn at event {churn.at_event} removes unknown users {sorted(unknown)}")
    kept = [(u, s) for u, s in zip(users, strategy) if u.uid not in gone]
    users = [u for u, _ in kept]
    strategy = [s for _, s in kept]
    entry = churn.entry_aps or (None,) * len(churn.add)
    if len(entry) != len(churn.add):
        raise InvalidInput("entry_aps must match the number of added users")
    for u, ap in zip(churn.add, entry):
        uid = u.uid if u.uid is not None else next_uid
        next_uid = max(next_uid, uid + 1)
        if ap is None:
            ap = int(rng.integers(n_aps))
        if not 0 <= ap < n_aps:
            raise InvalidInput(f"entry AP {ap} out of range")
        users.append(UserConfig(u.gains, u.mobility_cost, u.distance_override, uid=uid))
        strategy.append(int(ap))
        heapq.heappush(heap, (now + rng.exponential(mean_timer), uid))
    uids = [u.uid for u in users]
    if len(set(uids)) != len(uids):
        raise InvalidInput(f"churn at event {churn.at_event} reuses a live uid")
    return users, strategy, next_uid


def idle_probability(lambda_max: int, x: int) -> float:
    """Probability that nobody among ``x`` contenders grabs the channel in a slot."""
    return 1.0 - x * contention_success(lambda_max, x)


def estimate_load(lambda_max: int, idle_observations: Sequence[int], x_max: int = 64) -> int:
    """Invert the idle-slot frequency into a user count (nearest table entry, ties to fewer users)."""
    obs = np.asarray(idle_observations)
    if obs.size == 0:
        raise InvalidInput("need at least one observation")
    mean = float(obs.mean())
    table = np.array([idle_probability(lambda_max, x) for x in range(x_max + 1)])
    if np.any(np.diff(table[1:]) <= 0):
        log.warning("idle probability is not strictly increasing on 1..%d; using nearest match", x_max)
    return int(np.argmin(np.abs(table - mean)))
