"""Scenario files, random scenario generation and CSV run records.

Scenario files are JSON. AP references inside the file (``initial_ap``,
``entry_ap``) are 1-based like AP labels in the literature; channel labels
are used verbatim. Internally everything is 0-based.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from .association import AssocRun, ChurnEvent
from .coop import GibbsRun
from .model import (
    ApConfig,
    InvalidInput,
    Scenario,
    UserConfig,
    UserPopulation,
    dbm_to_mw,
    potential_phi,
)
from .noncoop import BestResponseRun

SCHEMA_VERSION = 1
REFERENCE_SCENARIO = "reference_8ap.json"
CSV_COLUMNS = ("iteration", "actor", "action", "utility", "system_metric", "potential")


class ScenarioFileError(InvalidInput):
    pass


@dataclass(frozen=True)
class ScenarioFile:
    scenario: Scenario
    population: Optional[UserPopulation] = None
    churn: tuple[ChurnEvent, ...] = ()
    lambda_max: int = 10
    description: str = ""


# ---------------------------------------------------------------- parsing


def _field(block: dict, key: str, where: str, kind=float, default: Any = ...):
    if key not in block:
        if default is ...:
            raise ScenarioFileError(f"{where}.{key}: missing")
        return default
    try:
        return kind(block[key])
    except (TypeError, ValueError):
        raise ScenarioFileError(f"{where}.{key}: expected {kind.__name__}, got {block[key]!r}") from None


def _to_mw(value: float, unit: str) -> float:
    return dbm_to_mw(value) if unit == "dBm" else float(value)


def _parse_noise(raw, unit: str, where: str):
    if isinstance(raw, dict):
        try:
            return {int(k): _to_mw(float(v), unit) for k, v in raw.items()}
        except (TypeError, ValueError):
            raise ScenarioFileError(f"{where}.noise: bad per-channel table") from None
    try:
        return _to_mw(float(raw), unit)
    except (TypeError, ValueError):
        raise ScenarioFileError(f"{where}.noise: expected number or table, got {raw!r}") from None


def _parse_user(block: dict, where: str, n_aps: int) -> tuple[UserConfig, Optional[int]]:
    gains = block.get("gains", 1.0)
    if isinstance(gains, (int, float)):
        gains = [gains] * n_aps
    if len(gains) != n_aps:
        raise ScenarioFileError(f"{where}.gains: need {n_aps} entries, got {len(gains)}")
    ap = block.get("initial_ap", block.get("entry_ap"))
    if ap is not None:
        ap = int(ap) - 1
        if not 0 <= ap < n_aps:
            raise ScenarioFileError(f"{where}.initial_ap: {ap + 1} is not an AP (1..{n_aps})")
    try:
        user = UserConfig(
            gains=tuple(float(g) for g in gains),
            mobility_cost=_field(block, "mobility_cost", where, default=0.0),
            distance_override=block.get("distances"),
            uid=_field(block, "id", where, int, None),
        )
    except InvalidInput as exc:
        raise ScenarioFileError(f"{where}: {exc}") from None
    return user, ap


def parse_scenario(doc: dict, source: str = "<scenario>") -> ScenarioFile:
    if not isinstance(doc, dict):
        raise ScenarioFileError(f"{source}: top level must be an object")
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ScenarioFileError(f"{source}: schema_version {version} not supported")
    units = doc.get("units", {})
    power_unit = units.get("power", "mW")
    noise_unit = units.get("noise", power_unit)
    for key, unit in (("power", power_unit), ("noise", noise_unit)):
        if unit not in ("mW", "dBm"):
            raise ScenarioFileError(f"{source}: units.{key} must be 'mW' or 'dBm'")
    if units.get("distance", "m") != "m":
        raise ScenarioFileError(f"{source}: units.distance must be 'm'")
    if units.get("bandwidth", "Hz") != "Hz":
        raise ScenarioFileError(f"{source}: units.bandwidth must be 'Hz'")

    blocks = doc.get("aps")
    if not isinstance(blocks, list) or not blocks:
        raise ScenarioFileError(f"{source}: aps: need a non-empty list")
    aps = []
    for i, block in enumerate(blocks):
        where = f"aps[{i}]"
        pos = block.get("position")
        if not isinstance(pos, list) or len(pos) != 2:
            raise ScenarioFileError(f"{source}: {where}.position: need [x, y]")
        try:
            aps.append(
                ApConfig.build(
                    position=pos,
                    power=_to_mw(_field(block, "power", where), power_unit),
                    coverage_radius=_field(block, "coverage_radius", where),
                    feasible_channels=block.get("feasible_channels", []),
                    noise=_parse_noise(block.get("noise"), noise_unit, where),
                )
            )
        except ScenarioFileError as exc:
            raise ScenarioFileError(f"{source}: {exc}") from None
        except InvalidInput as exc:
            raise ScenarioFileError(f"{source}: {where}: {exc}") from None
    try:
        scenario = Scenario(
            channel_count=_field(doc, "channel_count", "scenario", int),
            bandwidth=_field(doc, "bandwidth", "scenario"),
            path_loss_exponent=_field(doc, "path_loss_exponent", "scenario"),
            aps=tuple(aps),
            distances=doc.get("distances"),
        )
    except InvalidInput as exc:
        raise ScenarioFileError(f"{source}: {exc}") from None

    lambda_max = int(doc.get("contention", {}).get("lambda_max", 10))
    population = None
    if doc.get("users"):
        users, state = [], []
        for k, block in enumerate(doc["users"]):
            user, ap = _parse_user(block, f"{source}: users[{k}]", scenario.n_aps)
            if ap is None:
                raise ScenarioFileError(f"{source}: users[{k}].initial_ap: missing")
            users.append(user)
            state.append(ap)
        try:
            population = UserPopulation(tuple(users), tuple(state), lambda_max)
        except InvalidInput as exc:
            raise ScenarioFileError(f"{source}: users: {exc}") from None

    churn = []
    for c, block in enumerate(doc.get("churn", [])):
        where = f"{source}: churn[{c}]"
        added = [_parse_user(b, f"{where}.add[{j}]", scenario.n_aps) for j, b in enumerate(block.get("add", []))]
        churn.append(
            ChurnEvent(
                at_event=_field(block, "at_event", where, int),
                remove=tuple(int(u) for u in block.get("remove", [])),
                add=tuple(u for u, _ in added),
                entry_aps=tuple(ap for _, ap in added) if added else None,
            )
        )
    return ScenarioFile(scenario, population, tuple(churn), lambda_max, doc.get("description", ""))


def load_scenario_file(path) -> ScenarioFile:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioFileError(f"{path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioFileError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return parse_scenario(doc, str(path))


def load_scenario(path) -> tuple[Scenario, Optional[UserPopulation]]:
    sf = load_scenario_file(path)
    return sf.scenario, sf.population


def reference_scenario_path() -> Path:
    return Path(str(resources.files("spectrum_share") / "data" / REFERENCE_SCENARIO))


def load_reference_scenario() -> ScenarioFile:
    return load_scenario_file(reference_scenario_path())


# ---------------------------------------------------------------- writing


def _user_doc(user: UserConfig, ap: Optional[int], key: str = "initial_ap") -> dict:
    doc: dict = {"id": user.uid, "gains": list(user.gains), "mobility_cost": user.mobility_cost}
    if ap is not None:
        doc[key] = ap + 1
    if user.distance_override is not None:
        doc["distances"] = [list(r) for r in user.distance_override]
    return doc


def scenario_to_dict(sf: ScenarioFile) -> dict:
    sc = sf.scenario
    aps = []
    for ap in sc.aps:
        noise = ap.noise[0] if len(set(ap.noise)) == 1 else {str(c): w for c, w in zip(ap.feasible_channels, ap.noise)}
        aps.append(
            {
                "position": list(ap.position),
                "power": ap.power,
                "coverage_radius": ap.coverage_radius,
                "feasible_channels": list(ap.feasible_channels),
                "noise": noise,
            }
        )
    doc: dict = {"schema_version": SCHEMA_VERSION}
    if sf.description:
        doc["description"] = sf.description
    doc.update(
        {
            "units": {"power": "mW", "noise": "mW", "distance": "m", "bandwidth": "Hz"},
            "channel_count": sc.channel_count,
            "bandwidth": sc.bandwidth,
            "path_loss_exponent": sc.path_loss_exponent,
            "aps": aps,
        }
    )
    if sc.distances is not None:
        doc["distances"] = [list(r) for r in sc.distances]
    doc["contention"] = {"lambda_max": sf.lambda_max}
    if sf.population is not None:
        doc["users"] = [_user_doc(u, s) for u, s in zip(sf.population.users, sf.population.state)]
    if sf.churn:
        doc["churn"] = [
            {
                "at_event": c.at_event,
                "remove": list(c.remove),
                "add": [_user_doc(u, ap, "entry_ap") for u, ap in zip(c.add, c.entry_aps or (None,) * len(c.add))],
            }
            for c in sf.churn
        ]
    return doc


def dumps_scenario(sf: ScenarioFile) -> str:
    return json.dumps(scenario_to_dict(sf), indent=2) + "\n"


def write_scenario_file(sf: ScenarioFile, path) -> Path:
    path = Path(path)
    path.write_text(dumps_scenario(sf))
    return path


def scenario_hash(sf: ScenarioFile) -> str:
    canon = json.dumps(scenario_to_dict(sf), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


# ---------------------------------------------------------------- generation


def generate_scenario(
    n_aps: int,
    n_channels: int,
    vacant_per_ap: int,
    area_side_m: float = 500.0,
    seed: int = 0,
    power_range: tuple[float, float] = (100.0, 400.0),
    noise: float = -100.0,
    coverage_radius: float = 20.0,
    bandwidth: float = 6e6,
    path_loss_exponent: float = 4.0,
    max_attempts: int = 10_000,
) -> ScenarioFile:
    """Random APs in a square with random vacant-channel subsets.

    ``noise`` is in dBm; powers are in mW. Positions are drawn by rejection so
    no two APs sit closer than their coverage radius.
    """
    if not 1 <= vacant_per_ap <= n_channels:
        raise InvalidInput("vacant_per_ap must be in 1..n_channels")
    if n_aps < 1:
        raise InvalidInput("n_aps must be >= 1")
    rng = np.random.default_rng(seed)
    noise_mw = dbm_to_mw(noise)
    positions: list[tuple[float, float]] = []
    for n in range(n_aps):
        for _ in range(max_attempts):
            p = tuple(float(round(v, 3)) for v in rng.uniform(0.0, area_side_m, size=2))
            if all(math.dist(p, q) >= coverage_radius for q in positions):
                positions.append(p)
                break
        else:
            raise InvalidInput(f"could not place AP {n} after {max_attempts} attempts; area too crowded")
    aps = []
    for p in positions:
        chans = sorted(int(c) for c in rng.choice(np.arange(1, n_channels + 1), size=vacant_per_ap, replace=False))
        power = float(round(rng.uniform(*power_range), 3))
        aps.append(ApConfig.build(p, power, coverage_radius, chans, noise_mw))
    scenario = Scenario(n_channels, bandwidth, path_loss_exponent, tuple(aps))
    desc = f"random: {n_aps} APs, {n_channels} channels, {vacant_per_ap} vacant each, {area_side_m:g} m square, seed {seed}"
    return ScenarioFile(scenario, description=desc)


GAIN_LEVELS = (1.0, 1.1, 1.2, 1.3, 1.4, 1.5)


def generate_population(
    scenario: Scenario,
    n_users: int,
    seed: int = 0,
    mobility_cost: float | tuple[float, float] = 0.06,
    gains: Sequence[float] | None = GAIN_LEVELS,
    initial_ap: Optional[int] = None,
    lambda_max: int = 10,
    first_uid: int = 0,
) -> UserPopulation:
    """Random users: gains drawn per (user, AP) from ``gains`` (``None`` means all 1).

    ``mobility_cost`` is a constant or a ``(low, high)`` uniform range;
    ``initial_ap`` pins everyone to one AP, otherwise starts are uniform.
    """
    rng = np.random.default_rng(seed)
    users = make_users(scenario.n_aps, n_users, rng, mobility_cost, gains, first_uid)
    if initial_ap is None:
        state = tuple(int(v) for v in rng.integers(scenario.n_aps, size=n_users))
    else:
        scenario.check_ap(initial_ap)
        state = (initial_ap,) * n_users
    return UserPopulation(tuple(users), state, lambda_max)


def make_users(n_aps, n_users, rng, mobility_cost=0.06, gains=GAIN_LEVELS, first_uid=0) -> list[UserConfig]:
    users = []
    for k in range(n_users):
        h = (1.0,) * n_aps if gains is None else tuple(float(v) for v in rng.choice(gains, size=n_aps))
        if isinstance(mobility_cost, tuple):
            delta = float(rng.uniform(*mobility_cost))
        else:
            delta = float(mobility_cost)
        users.append(UserConfig(h, delta, uid=first_uid + k))
    return users


def random_churn(
    population: UserPopulation,
    n_aps: int,
    seed: int,
    remove_at: int = 200,
    n_remove: int = 10,
    add_at: int = 400,
    n_add: int = 15,
    mobility_cost: float | tuple[float, float] = (0.0, 0.2),
    gains: Sequence[float] | None = GAIN_LEVELS,
) -> tuple[ChurnEvent, ...]:
    """Remove ``n_remove`` random users at ``remove_at`` and add ``n_add`` new ones at ``add_at``."""
    rng = np.random.default_rng(seed)
    uids = [u.uid for u in population.users]
    if n_remove > len(uids):
        raise InvalidInput("cannot remove more users than exist")
    gone = tuple(sorted(int(u) for u in rng.choice(uids, size=n_remove, replace=False)))
    first = max(uids, default=-1) + 1
    added = make_users(n_aps, n_add, rng, mobility_cost, gains, first)
    entry = tuple(int(v) for v in rng.integers(n_aps, size=n_add))
    return (ChurnEvent(remove_at, remove=gone), ChurnEvent(add_at, add=tuple(added), entry_aps=entry))


# ---------------------------------------------------------------- run records


@dataclass
class RunRecord:
    rows: list[tuple] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def write(self, path) -> Path:
        """Write the CSV trace and a ``.meta.json`` sidecar next to it."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for row in self.rows:
                w.writerow([_fmt(v) for v in row])
        meta = dict(self.metadata, rows=len(self.rows))
        path.with_suffix(".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        return path


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def read_trace(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def gibbs_record(scenario: Scenario, run: GibbsRun, meta: dict) -> RunRecord:
    phi_cache: dict = {}
    rows = []
    for it, ap, prof, rates, total in run.rows():
        if prof not in phi_cache:
            phi_cache[prof] = potential_phi(scenario, prof)
        rows.append((it, ap + 1, prof[ap], float(rates[ap]), total, phi_cache[prof]))
    return RunRecord(rows, dict(meta, algorithm="coop"))


def br_record(run: BestResponseRun, meta: dict) -> RunRecord:
    rows = []
    for i, (stage, ap, prof, phi, rates) in enumerate(run.trace):
        actor = ap + 1 if ap >= 0 else 0
        action = prof[ap] if ap >= 0 else ""
        utility = float(rates[ap]) if ap >= 0 else ""
        rows.append((i, actor, action, utility, float(rates.sum()), phi))
    return RunRecord(rows, dict(meta, algorithm="noncoop"))


def assoc_record(run: AssocRun, meta: dict) -> RunRecord:
    rows = []
    for ev in run.trace:
        k = ev.uids.index(ev.user)
        rows.append((ev.index, ev.user, ev.moved_to + 1, ev.payoffs[k], float(sum(ev.payoffs)), ev.potential))
    return RunRecord(rows, dict(meta, algorithm="assoc"))
