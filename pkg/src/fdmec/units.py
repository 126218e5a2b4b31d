"""System constants, user profiles and random scenario generation."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError

PAIRING_STRATEGIES = ("SW", "SM", "SS")


def dbm_to_watts(level_dbm):
    """Convert a power level in dBm to watts."""
    return 10.0 ** ((level_dbm - 30.0) / 10.0)


def watts_to_dbm(power_w):
    return 10.0 * math.log10(power_w) + 30.0


def path_gain(distance_m, shadowing_db=0.0):
    """Linear power gain for the 128.1 + 37.6 log10(d[km]) macro-cell law."""
    loss_db = 128.1 + 37.6 * np.log10(np.asarray(distance_m) / 1000.0) + shadowing_db
    return 10.0 ** (-loss_db / 10.0)


@dataclass(frozen=True)
class SystemConfig:
    bandwidth_hz: float = 10e6
    slot_duration_s: float = 0.1
    noise_power_w: float = dbm_to_watts(-104.0)
    self_interference_coeff: float = 1e-5
    user_max_power_w: float = dbm_to_watts(30.0)
    bs_max_power_w: float = dbm_to_watts(47.0)
    edge_capacity_cycles: float = 6e9
    bs_energy_per_cycle_j: float = 1e-10

    def __post_init__(self):
        for name in ("bandwidth_hz", "slot_duration_s", "noise_power_w",
                     "user_max_power_w", "bs_max_power_w",
                     "edge_capacity_cycles", "bs_energy_per_cycle_j"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigurationError(f"{name} must be positive, got {value!r}")
        if not (math.isfinite(self.self_interference_coeff)
                and self.self_interference_coeff >= 0):
            raise ConfigurationError("self_interference_coeff must be >= 0")

    def replace(self, **changes) -> SystemConfig:
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class UserProfile:
    uplink_gain: float
    downlink_gain: float
    eh_efficiency: float
    task_bits: float
    cycles_per_bit: float
    local_energy_per_cycle_j: float
    local_capacity_cycles_per_s: float

    def __post_init__(self):
        if not self.uplink_gain > 0 or not self.downlink_gain > 0:
            raise ConfigurationError("channel gains must be positive")
        if not 0 < self.eh_efficiency <= 1:
            raise ConfigurationError("eh_efficiency must lie in (0, 1]")
        if not self.task_bits >= 0:
            raise ConfigurationError("task_bits must be >= 0")
        if not self.cycles_per_bit > 0 or not self.local_capacity_cycles_per_s > 0:
            raise ConfigurationError("cycles_per_bit and local capacity must be positive")
        if not self.local_energy_per_cycle_j >= 0:
            raise ConfigurationError("local_energy_per_cycle_j must be >= 0")


def forced_offload(user: UserProfile, cfg: SystemConfig) -> float:
    """Bits that cannot be computed locally before the slot ends."""
    local_bits = user.local_capacity_cycles_per_s * cfg.slot_duration_s / user.cycles_per_bit
    return max(0.0, user.task_bits - local_bits)


@dataclass(frozen=True)
class GroupPartition:
    """Ordered NOMA groups; each group lists user indices strongest first."""

    groups: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(tuple(int(j) for j in g) for g in self.groups))
        flat = [j for g in self.groups for j in g]
        if any(len(g) == 0 for g in self.groups):
            raise ConfigurationError("empty group in partition")
        if sorted(flat) != list(range(len(flat))):
            raise ConfigurationError("groups must partition 0..M-1 exactly once")

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def n_users(self) -> int:
        return sum(len(g) for g in self.groups)

    def phase_of(self) -> np.ndarray:
        phase = np.empty(self.n_users, dtype=int)
        for i, g in enumerate(self.groups):
            phase[list(g)] = i
        return phase

    def check_order(self, users) -> None:
        for g in self.groups:
            gains = [users[j].uplink_gain for j in g]
            if any(a < b for a, b in zip(gains, gains[1:])):
                raise ConfigurationError(f"group {g} is not sorted by descending uplink gain")

    @classmethod
    def singletons(cls, n_users: int) -> GroupPartition:
        return cls(tuple((j,) for j in range(n_users)))


@dataclass(frozen=True)
class ScenarioSpec:
    user_count: int = 20
    group_size: int = 2
    cell_radius_m: float = 2.0
    min_distance_m: float = 1.0
    shadowing_std_db: float = 4.0
    rng_seed: int = 0
    pairing_strategy: str = "SM"
    reciprocal_channels: bool = True
    task_bits_range: tuple[float, float] = (100e3, 500e3)
    cycles_per_bit_range: tuple[float, float] = (500.0, 1500.0)
    eh_efficiency: float = 0.8
    local_energy_per_cycle_j: float = 1e-10
    local_capacity_cycles_per_s: float = 1e9

    def __post_init__(self):
        if self.user_count < 1 or self.group_size < 1:
            raise ConfigurationError("user_count and group_size must be positive")
        if self.user_count % self.group_size:
            raise ConfigurationError("user_count must be divisible by group_size")
        if not self.cell_radius_m > self.min_distance_m > 0:
            raise ConfigurationError("need cell_radius_m > min_distance_m > 0")
        if self.shadowing_std_db < 0:
            raise ConfigurationError("shadowing_std_db must be >= 0")
        if self.pairing_strategy not in PAIRING_STRATEGIES:
            raise ConfigurationError(f"unknown pairing strategy {self.pairing_strategy!r}")
        if self.group_size > 2 and self.pairing_strategy != "SS":
            raise ConfigurationError("groups larger than two only support SS chunking")
        lo, hi = self.task_bits_range
        if not 0 <= lo <= hi:
            raise ConfigurationError("bad task_bits_range")
        lo, hi = self.cycles_per_bit_range
        if not 0 < lo <= hi:
            raise ConfigurationError("bad cycles_per_bit_range")

    def replace(self, **changes) -> ScenarioSpec:
        return dataclasses.replace(self, **changes)


def pair_users(sorted_user_indices, strategy: str, group_size: int = 2) -> GroupPartition:
    """Group users that are already ranked by descending uplink gain.

    SW pairs rank k with rank M-1-k, SM pairs rank k with rank k + M/2 and
    SS pairs consecutive ranks. Each pair is listed strong user first.
    """
    ranked = list(sorted_user_indices)
    m = len(ranked)
    if strategy not in PAIRING_STRATEGIES:
        raise ConfigurationError(f"unknown pairing strategy {strategy!r}")
    if group_size == 1:
        return GroupPartition(tuple((j,) for j in ranked))
    if m % group_size:
        raise ConfigurationError(f"cannot split {m} users into groups of {group_size}")
    if group_size != 2:
        if strategy != "SS":
            raise ConfigurationError("SW/SM pairing needs group_size 2")
        return GroupPartition(tuple(tuple(ranked[k:k + group_size])
                                    for k in range(0, m, group_size)))
    half = m // 2
    if strategy == "SW":
        pairs = [(ranked[k], ranked[m - 1 - k]) for k in range(half)]
    elif strategy == "SM":
        pairs = [(ranked[k], ranked[k + half]) for k in range(half)]
    else:
        pairs = [(ranked[k], ranked[k + 1]) for k in range(0, m, 2)]
    return GroupPartition(tuple(pairs))


def _uniform_annulus(rng, n, r_min, r_max):
    return np.sqrt(rng.uniform(r_min ** 2, r_max ** 2, size=n))


def generate_scenario(spec: ScenarioSpec, cfg: SystemConfig | None = None):
    """Draw users for one Monte-Carlo realisation.

    Returns ``(users, partition)``. The draw depends only on ``spec``
    (``cfg`` is accepted for interface symmetry and validated).
    """
    if cfg is not None and not isinstance(cfg, SystemConfig):
        raise ConfigurationError("cfg must be a SystemConfig")
    rng = np.random.default_rng(spec.rng_seed)
    m = spec.user_count
    dist = _uniform_annulus(rng, m, spec.min_distance_m, spec.cell_radius_m)
    up = path_gain(dist, rng.normal(0.0, spec.shadowing_std_db, size=m))
    down_shadow = rng.normal(0.0, spec.shadowing_std_db, size=m)
    down = up.copy() if spec.reciprocal_channels else path_gain(dist, down_shadow)
    bits = rng.uniform(*spec.task_bits_range, size=m)
    cycles = rng.uniform(*spec.cycles_per_bit_range, size=m)
    users = [
        UserProfile(
            uplink_gain=float(up[j]),
            downlink_gain=float(down[j]),
            eh_efficiency=spec.eh_efficiency,
            task_bits=float(bits[j]),
            cycles_per_bit=float(cycles[j]),
            local_energy_per_cycle_j=spec.local_energy_per_cycle_j,
            local_capacity_cycles_per_s=spec.local_capacity_cycles_per_s,
        )
        for j in range(m)
    ]
    ranked = sorted(range(m), key=lambda j: (-users[j].uplink_gain, j))
    partition = pair_users(ranked, spec.pairing_strategy, spec.group_size)
    return users, partition


# --- JSON documents -------------------------------------------------------

def _convert_dbm(doc: dict) -> dict:
    out = {}
    for key, value in doc.items():
        if key.endswith("_dbm"):
            base = key[: -len("_dbm")]
            target = {"noise_power": "noise_power_w",
                      "user_max_power": "user_max_power_w",
                      "bs_max_power": "bs_max_power_w"}.get(base, base + "_w")
            out[target] = dbm_to_watts(float(value))
        else:
            out[key] = value
    return out


def _build(cls, doc: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(doc) - names
    if unknown:
        raise ConfigurationError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
    kwargs = {}
    for key, value in doc.items():
        kwargs[key] = tuple(value) if isinstance(value, list) else value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc


def config_from_dict(doc: dict | None) -> SystemConfig:
    return _build(SystemConfig, _convert_dbm(doc or {}))


def scenario_from_dict(doc: dict | None) -> ScenarioSpec:
    return _build(ScenarioSpec, dict(doc or {}))


def users_from_dicts(rows) -> list[UserProfile]:
    return [_build(UserProfile, dict(r)) for r in rows]


def load_problem_document(path):
    """Read a scenario document.

    The document holds a ``system`` object and either a ``scenario`` object
    (users are drawn) or explicit ``users`` plus ``groups`` lists.
    """
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read {path}: {exc}") from exc
    return problem_from_document(doc)


def problem_from_document(doc: dict):
    if not isinstance(doc, dict):
        raise ConfigurationError("problem document must be a JSON object")
    cfg = config_from_dict(doc.get("system"))
    if "users" in doc:
        users = users_from_dicts(doc["users"])
        if "groups" in doc:
            partition = GroupPartition(tuple(tuple(g) for g in doc["groups"]))
        else:
            ranked = sorted(range(len(users)), key=lambda j: -users[j].uplink_gain)
            partition = pair_users(ranked, doc.get("pairing_strategy", "SM"))
        if partition.n_users != len(users):
            raise ConfigurationError("groups do not cover the user list")
        partition.check_order(users)
        return users, partition, cfg
    spec = scenario_from_dict(doc.get("scenario"))
    users, partition = generate_scenario(spec, cfg)
    return users, partition, cfg


def asdict(obj) -> dict:
    return dataclasses.asdict(obj)


__all__ = [
    "SystemConfig", "UserProfile", "GroupPartition", "ScenarioSpec",
    "dbm_to_watts", "watts_to_dbm", "path_gain", "pair_users",
    "generate_scenario", "forced_offload", "config_from_dict",
    "scenario_from_dict", "load_problem_document", "problem_from_document",
]
