"""Physical-interference throughput model, channel potential and backoff contention.

Conventions used throughout the package:

* APs and users are indexed from 0 internally; channel labels are the
  integers ``1..channel_count`` exactly as handed out by the database.
* Powers and noise are in mW, distances in meters, bandwidth in Hz and
  throughput in bps unless a function says otherwise.
* A channel profile is a plain tuple of channel labels, one per AP.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np

ChannelProfile = tuple  # tuple[int, ...], one channel label per AP

# A deviation counts as improving only above this relative margin.
REL_TOL = 1e-12


class InvalidInput(ValueError):
    """Raised when a scenario, profile or index violates its contract."""


class InvariantViolation(RuntimeError):
    """Raised when a property guaranteed by the theory fails at runtime."""


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


def mw_to_dbm(mw: float) -> float:
    return 10.0 * math.log10(mw)


@dataclass(frozen=True)
class ApConfig:
    """One access point.

    ``noise`` is aligned with ``feasible_channels`` (sorted ascending). Pass a
    scalar or a ``{channel: mW}`` mapping to :meth:`build` instead of filling
    the tuple by hand.
    """

    position: tuple[float, float]
    power: float
    coverage_radius: float
    feasible_channels: tuple[int, ...]
    noise: tuple[float, ...]

    @classmethod
    def build(
        cls,
        position: Sequence[float],
        power: float,
        coverage_radius: float,
        feasible_channels: Sequence[int],
        noise: Union[float, Mapping[int, float]],
    ) -> "ApConfig":
        chans = tuple(sorted(int(c) for c in feasible_channels))
        if isinstance(noise, Mapping):
            try:
                levels = tuple(float(noise[c]) for c in chans)
            except KeyError as exc:
                raise InvalidInput(f"no noise level for channel {exc.args[0]}") from None
        else:
            levels = (float(noise),) * len(chans)
        return cls(
            position=(float(position[0]), float(position[1])),
            power=float(power),
            coverage_radius=float(coverage_radius),
            feasible_channels=chans,
            noise=levels,
        )

    def noise_on(self, channel: int) -> float:
        return self.noise[self.feasible_channels.index(channel)]


@dataclass(frozen=True)
class Scenario:
    """Channels, APs and propagation constants.

    ``distances`` optionally overrides the center-to-center AP distance
    table; it must be symmetric with a zero diagonal.
    """

    channel_count: int
    bandwidth: float
    path_loss_exponent: float
    aps: tuple[ApConfig, ...]
    distances: tuple[tuple[float, ...], ...] | None = None

    # derived arrays, filled in __post_init__
    dist: np.ndarray = field(init=False, repr=False, compare=False)
    signal: np.ndarray = field(init=False, repr=False, compare=False)
    cross: np.ndarray = field(init=False, repr=False, compare=False)
    noise_table: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "aps", tuple(self.aps))
        if self.distances is not None:
            object.__setattr__(
                self, "distances", tuple(tuple(float(v) for v in row) for row in self.distances)
            )
        self._validate()
        n = len(self.aps)
        if self.distances is not None:
            dist = np.array(self.distances, dtype=float)
        else:
            pos = np.array([ap.position for ap in self.aps], dtype=float)
            dist = np.sqrt(((pos[:, None, :] - pos[None, :, :]) ** 2).sum(axis=-1))
        for i in range(n):
            for j in range(i + 1, n):
                floor = max(self.aps[i].coverage_radius, self.aps[j].coverage_radius)
                if not dist[i, j] >= floor:
                    raise InvalidInput(
                        f"APs {i} and {j} are {dist[i, j]:.3f} m apart, "
                        f"closer than coverage radius {floor:g} m"
                    )
        theta = self.path_loss_exponent
        power = np.array([ap.power for ap in self.aps])
        radius = np.array([ap.coverage_radius for ap in self.aps])
        with np.errstate(divide="ignore"):
            cross = power[:, None] / dist**theta
        np.fill_diagonal(cross, 0.0)
        noise = np.full((n, self.channel_count + 1), np.nan)
        for i, ap in enumerate(self.aps):
            noise[i, list(ap.feasible_channels)] = ap.noise
        for name, arr in (
            ("dist", dist),
            ("signal", power / radius**theta),
            ("cross", cross),  # cross[i, n] = P_i / d_in^theta
            ("noise_table", noise),  # column 0 unused
        ):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def _validate(self):
        if self.channel_count < 1:
            raise InvalidInput("channel_count must be a positive integer")
        if not self.bandwidth > 0:
            raise InvalidInput("bandwidth must be positive")
        if not self.path_loss_exponent > 0:
            raise InvalidInput("path_loss_exponent must be positive")
        if not self.aps:
            raise InvalidInput("scenario needs at least one AP")
        for i, ap in enumerate(self.aps):
            if not ap.feasible_channels:
                raise InvalidInput(f"aps[{i}].feasible_channels is empty")
            if len(set(ap.feasible_channels)) != len(ap.feasible_channels):
                raise InvalidInput(f"aps[{i}].feasible_channels has duplicates")
            bad = [c for c in ap.feasible_channels if not 1 <= c <= self.channel_count]
            if bad:
                raise InvalidInput(f"aps[{i}].feasible_channels {bad} outside 1..{self.channel_count}")
            if len(ap.noise) != len(ap.feasible_channels):
                raise InvalidInput(f"aps[{i}].noise must have one level per feasible channel")
            if not ap.power > 0:
                raise InvalidInput(f"aps[{i}].power must be positive")
            if not ap.coverage_radius > 0:
                raise InvalidInput(f"aps[{i}].coverage_radius must be positive")
            if any(not w > 0 for w in ap.noise):
                raise InvalidInput(f"aps[{i}].noise must be positive")
        if self.distances is not None:
            n = len(self.aps)
            d = self.distances
            if len(d) != n or any(len(row) != n for row in d):
                raise InvalidInput(f"distances must be {n}x{n}")
            for i in range(n):
                if d[i][i] != 0:
                    raise InvalidInput(f"distances[{i}][{i}] must be 0")
                for j in range(i + 1, n):
                    if d[i][j] != d[j][i]:
                        raise InvalidInput(f"distances[{i}][{j}] != distances[{j}][{i}]")

    @property
    def n_aps(self) -> int:
        return len(self.aps)

    @property
    def feasible_sets(self) -> list[tuple[int, ...]]:
        return [ap.feasible_channels for ap in self.aps]

    def profile_space_size(self) -> int:
        return math.prod(len(ap.feasible_channels) for ap in self.aps)

    def profiles(self):
        """All channel profiles in lexicographic (mixed-radix) order."""
        return itertools.product(*self.feasible_sets)

    def check_profile(self, profile: Sequence[int]) -> ChannelProfile:
        profile = tuple(int(c) for c in profile)
        if len(profile) != self.n_aps:
            raise InvalidInput(f"profile has {len(profile)} entries, expected {self.n_aps}")
        for n, (c, ap) in enumerate(zip(profile, self.aps)):
            if c not in ap.feasible_channels:
                raise InvalidInput(f"channel {c} is not feasible for AP {n}")
        return profile

    def check_ap(self, n: int) -> int:
        if not 0 <= n < self.n_aps:
            raise InvalidInput(f"AP index {n} outside 0..{self.n_aps - 1}")
        return n


def _interference(scenario: Scenario, a: np.ndarray) -> np.ndarray:
    same = a[:, None] == a[None, :]
    return (scenario.cross * same).sum(axis=0)


def per_ap_throughput(scenario: Scenario, profile: Sequence[int]) -> np.ndarray:
    """Worst-case downlink throughput of every AP (bps)."""
    a = np.asarray(scenario.check_profile(profile))
    noise = scenario.noise_table[np.arange(scenario.n_aps), a]
    sinr = scenario.signal / (noise + _interference(scenario, a))
    return scenario.bandwidth * np.log2(1.0 + sinr)


def throughput(scenario: Scenario, profile: Sequence[int], n: int) -> float:
    scenario.check_ap(n)
    return float(per_ap_throughput(scenario, profile)[n])


def system_throughput(scenario: Scenario, profile: Sequence[int]) -> float:
    return float(per_ap_throughput(scenario, profile).sum())


def candidate_throughputs(
    scenario: Scenario, profile: Sequence[int], n: int
) -> tuple[tuple[int, ...], np.ndarray]:
    """Per-AP throughputs for every feasible channel of AP ``n``.

    Returns ``(channels, table)`` with ``table[c, j]`` the throughput of AP
    ``j`` when AP ``n`` switches to ``channels[c]`` and everyone else stays.
    """
    chans = scenario.aps[n].feasible_channels
    a = np.asarray(profile)
    cross = scenario.cross
    same = a[:, None] == a[None, :]
    same[n, :] = False
    base = (cross * same).sum(axis=0)  # interference at each AP ignoring AP n
    cand = np.asarray(chans)
    hit = cand[:, None] == a[None, :]  # (C, N): AP j shares the candidate channel
    interf = base[None, :] + cross[n][None, :] * hit
    noise = np.broadcast_to(scenario.noise_table[np.arange(scenario.n_aps), a], interf.shape).copy()
    # AP n itself sees everyone else on the candidate channel
    hit_n = hit.copy()
    hit_n[:, n] = False
    interf[:, n] = (cross[:, n][None, :] * hit_n).sum(axis=1)
    noise[:, n] = scenario.noise_table[n, cand]
    sinr = scenario.signal[None, :] / (noise + interf)
    return chans, scenario.bandwidth * np.log2(1.0 + sinr)


def potential_phi(scenario: Scenario, profile: Sequence[int]) -> float:
    """Exact potential of the channel selection game (mW^2 scale).

    Negative power-weighted co-channel coupling minus twice the
    power-weighted noise on each AP's chosen channel.
    """
    a = np.asarray(scenario.check_profile(profile))
    power = np.array([ap.power for ap in scenario.aps])
    same = a[:, None] == a[None, :]
    coupling = (scenario.cross * power[None, :] * same).sum()  # P_i P_j / d_ij^theta
    noise = scenario.noise_table[np.arange(scenario.n_aps), a]
    return float(-coupling - 2.0 * (power * noise).sum())


def contention_success(lambda_max: int, x: int) -> float:
    """Probability that a tagged user among ``x`` contenders draws the unique earliest slot.

    Evaluated as an integer ratio so small cases come out exact
    (``contention_success(10, 2) == 0.45``).
    """
    if lambda_max < 1:
        raise InvalidInput("lambda_max must be >= 1")
    if x < 0:
        raise InvalidInput("contender count must be >= 0")
    if x <= 1:
        return 1.0
    num = sum((lambda_max - lam) ** (x - 1) for lam in range(1, lambda_max + 1))
    return num / lambda_max**x


@dataclass(frozen=True)
class ContentionModel:
    lambda_max: int
    x_max: int = 64
    table: tuple[float, ...] = field(init=False, repr=False)

    def __post_init__(self):
        if self.lambda_max < 1:
            raise InvalidInput("lambda_max must be >= 1")
        if self.x_max < 1:
            raise InvalidInput("x_max must be >= 1")
        object.__setattr__(
            self, "table", tuple(contention_success(self.lambda_max, x) for x in range(self.x_max + 1))
        )

    def g(self, x: int) -> float:
        if 0 <= x <= self.x_max:
            return self.table[x]
        return contention_success(self.lambda_max, x)

    def log_g_cumsum(self, upto: int) -> np.ndarray:
        """``out[x] = sum_{i=0..x} ln g(i)`` for x = 0..upto."""
        vals = np.log([self.g(i) for i in range(upto + 1)])
        return np.cumsum(vals)


@dataclass(frozen=True)
class UserConfig:
    """A secondary user.

    ``gains[n]`` is the transmission gain at AP ``n``; ``distance_override``
    optionally replaces the AP-to-AP distance table for this user's moving
    cost (entry ``[to][from]`` is the cost distance of moving from ``from`` to ``to``).
    """

    gains: tuple[float, ...]
    mobility_cost: float = 0.0
    distance_override: tuple[tuple[float, ...], ...] | None = None
    uid: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "gains", tuple(float(h) for h in self.gains))
        if self.distance_override is not None:
            d = tuple(tuple(float(v) for v in row) for row in self.distance_override)
            object.__setattr__(self, "distance_override", d)
        if any(not h >= 1.0 for h in self.gains):
            raise InvalidInput("user gains must be >= 1")
        if not self.mobility_cost >= 0:
            raise InvalidInput("mobility_cost must be >= 0")
        if self.distance_override is not None:
            d = self.distance_override
            n = len(self.gains)
            if len(d) != n or any(len(row) != n for row in d):
                raise InvalidInput(f"distance_override must be {n}x{n}")
            if any(d[i][i] != 0 for i in range(n)):
                raise InvalidInput("distance_override diagonal must be 0")
            if any(v < 0 for row in d for v in row):
                raise InvalidInput("distance_override entries must be >= 0")


@dataclass(frozen=True)
class UserPopulation:
    """Users, their current APs (the game state) and the contention model."""

    users: tuple[UserConfig, ...]
    state: tuple[int, ...]
    lambda_max: int = 10
    contention: ContentionModel = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        users = tuple(
            u if u.uid is not None else UserConfig(u.gains, u.mobility_cost, u.distance_override, uid=k)
            for k, u in enumerate(self.users)
        )
        object.__setattr__(self, "users", users)
        object.__setattr__(self, "state", tuple(int(s) for s in self.state))
        if len(self.state) != len(self.users):
            raise InvalidInput("state must hold one AP index per user")
        uids = [u.uid for u in users]
        if len(set(uids)) != len(uids):
            raise InvalidInput("user uids must be unique")
        if users:
            n_aps = len(users[0].gains)
            if any(len(u.gains) != n_aps for u in users):
                raise InvalidInput("all users need one gain per AP")
            if any(not 0 <= s < n_aps for s in self.state):
                raise InvalidInput("state entries must be valid AP indices")
        object.__setattr__(
            self, "contention", ContentionModel(self.lambda_max, x_max=max(len(users), 1))
        )

    @property
    def size(self) -> int:
        return len(self.users)

    def check_for(self, scenario: Scenario) -> "UserPopulation":
        if self.users and len(self.users[0].gains) != scenario.n_aps:
            raise InvalidInput(
                f"users carry {len(self.users[0].gains)} gains but scenario has {scenario.n_aps} APs"
            )
        return self


def occupancy(strategy: Sequence[int], n_aps: int) -> np.ndarray:
    return np.bincount(np.asarray(strategy, dtype=int), minlength=n_aps)


def user_rate(
    scenario: Scenario,
    equilibrium_profile: Sequence[int],
    population: UserPopulation,
    k: int,
    b: int,
) -> float:
    """Average rate (bps) of user ``k`` if it associates with AP ``b``.

    Occupancy comes from the population state with user ``k`` moved to ``b``.
    """
    population.check_for(scenario)
    scenario.check_ap(b)
    if not 0 <= k < population.size:
        raise InvalidInput(f"user index {k} outside 0..{population.size - 1}")
    strategy = list(population.state)
    strategy[k] = b
    x = occupancy(strategy, scenario.n_aps)
    u = throughput(scenario, equilibrium_profile, b)
    return population.users[k].gains[b] * u * population.contention.g(int(x[b]))
