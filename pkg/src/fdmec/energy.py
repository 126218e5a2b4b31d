"""Energy accounting and constraint residuals for one time slot."""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .errors import DomainError
from .noma import GroupLayout, group_rates, uplink_powers
from .units import GroupPartition, SystemConfig, UserProfile


class Instance:
    """Users, grouping and constants packed into arrays for fast evaluation.

    With ``broadcast_phase`` an extra phase without offloading users is
    appended after the groups and the BS may broadcast only in that phase
    (half-duplex operation). ``bs_power_cap`` holds the per-phase limit.
    """

    def __init__(self, users, partition: GroupPartition, cfg: SystemConfig, broadcast_phase=False):
        if partition.n_users != len(users):
            raise ValueError("partition size does not match the user list")
        partition.check_order(users)
        self.users = list(users)
        self.partition = partition
        self.cfg = cfg
        self.layout = GroupLayout(partition)
        col = lambda name: np.array([getattr(u, name) for u in users], dtype=float)
        self.h = col("uplink_gain")
        self.g = col("downlink_gain")
        self.zeta = col("eh_efficiency")
        self.bits = col("task_bits")
        self.cycles = col("cycles_per_bit")
        self.kappa = col("local_energy_per_cycle_j")
        self.local_rate = col("local_capacity_cycles_per_s")
        self.harvest_gain = self.zeta * self.g
        self.local_cost = self.cycles * self.kappa          # J per locally computed bit
        self.min_offload = np.maximum(0.0, self.bits - self.local_rate * cfg.slot_duration_s / self.cycles)
        self.broadcast_phase = bool(broadcast_phase)
        n = partition.n_groups
        self.n_phases = n + int(self.broadcast_phase)
        self.membership = np.zeros((self.n_phases, self.n_users))
        self.membership[:n] = self.layout.membership
        self.bs_power_cap = np.full(self.n_phases, cfg.bs_max_power_w)
        if self.broadcast_phase:
            self.bs_power_cap[:n] = 0.0

    @property
    def n_users(self):
        return len(self.users)

    @property
    def n_groups(self):
        return self.partition.n_groups

    @property
    def phase(self):
        return self.layout.phase

    def harvest(self, q, t):
        """Energy each user collects during every phase except its own."""
        broadcast = np.asarray(q, dtype=float) * np.asarray(t, dtype=float)
        return self.harvest_gain * (broadcast.sum() - broadcast[self.phase])

    def powers(self, q, t, d):
        return uplink_powers(q, t, d, self.h, self.layout, self.cfg)


@dataclass
class Allocation:
    bs_powers: np.ndarray
    phase_times: np.ndarray
    offload_bits: np.ndarray
    uplink_powers: np.ndarray | None = None

    def __post_init__(self):
        self.bs_powers = np.asarray(self.bs_powers, dtype=float)
        self.phase_times = np.asarray(self.phase_times, dtype=float)
        self.offload_bits = np.asarray(self.offload_bits, dtype=float)
        if self.uplink_powers is not None:
            self.uplink_powers = np.asarray(self.uplink_powers, dtype=float)

    @classmethod
    def derived(cls, q, t, d, inst: Instance) -> Allocation:
        """Allocation whose powers meet every offload demand with equality."""
        return cls(q, t, d, inst.powers(q, t, d))

    def to_dict(self):
        out = {"bs_powers": self.bs_powers.tolist(),
               "phase_times": self.phase_times.tolist(),
               "offload_bits": self.offload_bits.tolist()}
        if self.uplink_powers is not None:
            out["uplink_powers"] = self.uplink_powers.tolist()
        return out


def offload_energy(p_j, t_i):
    return p_j * t_i


def local_energy(user: UserProfile, d_j):
    if d_j < 0 or d_j > user.task_bits:
        raise DomainError(f"offload {d_j} outside [0, {user.task_bits}]")
    return (user.task_bits - d_j) * user.cycles_per_bit * user.local_energy_per_cycle_j


def harvested_energy(user: UserProfile, own_phase: int, q, t):
    broadcast = np.asarray(q, dtype=float) * np.asarray(t, dtype=float)
    return user.eh_efficiency * user.downlink_gain * (broadcast.sum() - broadcast[own_phase])


def bs_energy(q, t, d, users, cfg: SystemConfig):
    cycles = sum(u.cycles_per_bit * dj for u, dj in zip(users, d))
    return float(np.dot(q, t)) + cfg.bs_energy_per_cycle_j * cycles


@dataclass
class EnergyBreakdown:
    bs_broadcast_j: float
    bs_compute_j: float
    user_offload_j: np.ndarray
    user_local_j: np.ndarray
    user_harvest_j: np.ndarray
    total_j: float

    def flat(self) -> dict:
        row = {"bs_broadcast_j": self.bs_broadcast_j, "bs_compute_j": self.bs_compute_j}
        for name in ("user_offload_j", "user_local_j", "user_harvest_j"):
            for j, v in enumerate(getattr(self, name)):
                row[f"{name}_u{j}"] = float(v)
        row["total_j"] = self.total_j
        return row


def total_energy(alloc: Allocation, inst: Instance) -> EnergyBreakdown:
    q, t, d = alloc.bs_powers, alloc.phase_times, alloc.offload_bits
    if np.any(d < 0) or np.any(d > inst.bits * (1 + 1e-12)):
        raise DomainError("offload bits must lie in [0, task bits]")
    p = alloc.uplink_powers if alloc.uplink_powers is not None else inst.powers(q, t, d)
    offload = p * t[inst.phase]
    local = (inst.bits - d) * inst.local_cost
    harvest = inst.harvest(q, t)
    broadcast = float(np.dot(q, t))
    compute = inst.cfg.bs_energy_per_cycle_j * float(np.dot(inst.cycles, d))
    total = broadcast + compute + float(np.sum(offload + local - harvest))
    return EnergyBreakdown(broadcast, compute, offload, local, harvest, total)


def reduced_objective(q, t, d, inst: Instance) -> float:
    """Total energy after eliminating the uplink powers, term by term."""
    q, t, d = (np.asarray(v, dtype=float) for v in (q, t, d))
    cfg = inst.cfg
    value = float(np.dot(q, t)) + cfg.bs_energy_per_cycle_j * float(np.dot(inst.cycles, d))
    for i, group in enumerate(inst.partition.groups):
        if t[i] <= 0:
            continue
        c = cfg.noise_power_w + cfg.self_interference_coeff * q[i]
        scale = cfg.bandwidth_hz * t[i]
        for k, j in enumerate(group):
            tail = sum(d[l] for l in group[k + 1:])
            value += t[i] * c / inst.h[j] * (2.0 ** (d[j] / scale) - 1.0) * 2.0 ** (tail / scale)
    for j in range(inst.n_users):
        i = inst.phase[j]
        others = sum(q[k] * t[k] for k in range(len(q)) if k != i)
        value += (inst.bits[j] - d[j]) * inst.local_cost[j] - inst.harvest_gain[j] * others
    return value


@dataclass
class ConstraintResiduals:
    """Slack of every constraint; nonnegative means satisfied."""

    rate_slack: np.ndarray
    eh_slack: np.ndarray
    local_latency_slack: np.ndarray
    edge_capacity_slack: float
    time_budget_slack: float
    power_cap_slack: np.ndarray
    bs_power_cap_slack: np.ndarray
    offload_bounds_slack: np.ndarray
    nonnegativity_slack: float

    def worst(self) -> float:
        return min(float(np.min(np.atleast_1d(getattr(self, f.name))))
                   for f in fields(self) if np.size(getattr(self, f.name)))

    def flat(self) -> dict:
        row = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if np.ndim(value):
                for k, v in enumerate(value):
                    row[f"{f.name}_u{k}" if f.name != "bs_power_cap_slack" else f"{f.name}_g{k}"] = float(v)
            else:
                row[f.name] = float(value)
        return row

    def scaled(self, inst: Instance) -> dict:
        """Worst slack per family divided by its natural scale."""
        cfg = inst.cfg
        energy_scale = np.maximum(inst.bits * inst.local_cost, 1e-12)
        rate_scale = np.maximum(inst.bits, 1.0)
        return {
            "rate": float(np.min(self.rate_slack / rate_scale, initial=np.inf)),
            "energy_harvesting": float(np.min(self.eh_slack / energy_scale, initial=np.inf)),
            "local_latency": float(np.min(self.local_latency_slack /
                                          (inst.local_rate * cfg.slot_duration_s), initial=np.inf)),
            "edge_capacity": self.edge_capacity_slack / cfg.edge_capacity_cycles,
            "time_budget": self.time_budget_slack / cfg.slot_duration_s,
            "user_power": float(np.min(self.power_cap_slack, initial=np.inf)) / cfg.user_max_power_w,
            "bs_power": float(np.min(self.bs_power_cap_slack, initial=np.inf)) / cfg.bs_max_power_w,
            "offload_bounds": float(np.min(self.offload_bounds_slack / rate_scale, initial=np.inf)),
        }


def residuals(alloc: Allocation, inst: Instance) -> ConstraintResiduals:
    cfg = inst.cfg
    q, t, d = alloc.bs_powers, alloc.phase_times, alloc.offload_bits
    p = alloc.uplink_powers if alloc.uplink_powers is not None else inst.powers(q, t, d)
    rate_slack = np.zeros(inst.n_users)
    for i, group in enumerate(inst.partition.groups):
        idx = list(group)
        if t[i] > 0:
            r = group_rates(inst.h[idx], p[idx], q[i], cfg)
            rate_slack[idx] = r * t[i] - d[idx]
        else:
            rate_slack[idx] = -d[idx]
    consumed = p * t[inst.phase] + (inst.bits - d) * inst.local_cost
    return ConstraintResiduals(
        rate_slack=rate_slack,
        eh_slack=inst.harvest(q, t) - consumed,
        local_latency_slack=inst.local_rate * cfg.slot_duration_s - inst.cycles * (inst.bits - d),
        edge_capacity_slack=cfg.edge_capacity_cycles - float(np.dot(inst.cycles, d)),
        time_budget_slack=cfg.slot_duration_s - float(np.sum(t)),
        power_cap_slack=cfg.user_max_power_w - p,
        bs_power_cap_slack=inst.bs_power_cap - q,
        offload_bounds_slack=np.minimum(d, inst.bits - d),
        nonnegativity_slack=float(min(np.min(q), np.min(t), np.min(p))),
    )
