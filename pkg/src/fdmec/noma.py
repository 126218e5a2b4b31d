"""Uplink NOMA rates with SIC and the minimum powers that meet a bit demand.

Within a group users are listed by descending uplink gain and decoded in
that order, so user j sees the later (weaker) users as interference plus
noise and residual self-interference ``noise + gamma * q``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleDemandError
from .units import GroupPartition, SystemConfig

LN2 = math.log(2.0)


@dataclass(frozen=True)
class PhaseAllocation:
    phase_time_s: float
    bs_power_w: float
    offload_bits: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "offload_bits", tuple(float(v) for v in self.offload_bits))
        if self.phase_time_s < 0 or self.bs_power_w < 0 or min(self.offload_bits, default=0) < 0:
            raise ValueError("phase allocation entries must be nonnegative")


def interference_floor(bs_power_w, cfg: SystemConfig):
    """Noise plus residual self-interference seen by the BS receiver."""
    return cfg.noise_power_w + cfg.self_interference_coeff * np.asarray(bs_power_w, dtype=float)


def achievable_rate(gains, powers, j, bs_power_w, cfg: SystemConfig) -> float:
    """Rate of the user at position ``j`` of a group (bits/s)."""
    gains = np.asarray(gains, dtype=float)
    powers = np.asarray(powers, dtype=float)
    interference = float(np.dot(gains[j + 1:], powers[j + 1:]))
    sinr = gains[j] * powers[j] / (interference + interference_floor(bs_power_w, cfg))
    return cfg.bandwidth_hz * math.log2(1.0 + sinr)


def group_rates(gains, powers, bs_power_w, cfg: SystemConfig) -> np.ndarray:
    gains = np.asarray(gains, dtype=float)
    received = gains * np.asarray(powers, dtype=float)
    later = np.cumsum(received[::-1])[::-1] - received
    sinr = received / (later + interference_floor(bs_power_w, cfg))
    return cfg.bandwidth_hz * np.log2(1.0 + sinr)


def _rate_exponents(phase: PhaseAllocation, cfg: SystemConfig) -> np.ndarray:
    """Per-user spectral efficiency d_j / (B t) in bits/s/Hz (natural-log units)."""
    d = np.asarray(phase.offload_bits, dtype=float)
    if not np.any(d > 0):
        return np.zeros_like(d)
    if phase.phase_time_s <= 0:
        raise InfeasibleDemandError("positive offload demand in a phase of zero duration")
    return d * LN2 / (cfg.bandwidth_hz * phase.phase_time_s)


def interference_sums(phase: PhaseAllocation, gains, cfg: SystemConfig) -> np.ndarray:
    """Received power from each user and all weaker users in its group.

    Backward recursion u_j = 2^{a_j} u_{j+1} + c (2^{a_j} - 1) with u past
    the last user equal to zero, where a_j = d_j / (B t).
    """
    x = _rate_exponents(phase, cfg)
    c = float(interference_floor(phase.bs_power_w, cfg))
    u = np.zeros(len(x) + 1)
    for j in range(len(x) - 1, -1, -1):
        u[j] = math.exp(x[j]) * u[j + 1] + c * math.expm1(x[j])
    return u[:-1]


def power_closed_form(phase: PhaseAllocation, gains, cfg: SystemConfig) -> np.ndarray:
    """Minimum transmit powers meeting every demand with equality.

    Uses p_j = (u_j - u_{j+1}) / h_j in the factored form
    c / h_j * (2^{a_j} - 1) * 2^{sum_{l>j} a_l}, which never subtracts two
    large numbers.
    """
    x = _rate_exponents(phase, cfg)
    gains = np.asarray(gains, dtype=float)
    c = float(interference_floor(phase.bs_power_w, cfg))
    later = np.cumsum(x[::-1])[::-1] - x
    with np.errstate(over="ignore"):
        return c / gains * np.expm1(x) * np.exp(later)


def min_phase_time(gains, bs_power_w, offload_bits, cfg: SystemConfig, rtol=1e-9) -> float:
    """Shortest phase in which every member stays within the power cap.

    Every closed-form power decreases with the phase duration, so the
    binding duration is bracketed by doubling and refined by bisection to
    an absolute tolerance of ``rtol * T``.
    """
    d = np.asarray(offload_bits, dtype=float)
    if not np.any(d > 0):
        return 0.0
    gains = np.asarray(gains, dtype=float)
    cap = cfg.user_max_power_w
    tol = rtol * cfg.slot_duration_s

    def too_short(t):
        p = power_closed_form(PhaseAllocation(t, bs_power_w, d), gains, cfg)
        return not np.all(p <= cap)

    hi = cfg.slot_duration_s
    while too_short(hi):
        hi *= 2.0
    lo = 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if too_short(mid):
            lo = mid
        else:
            hi = mid
    return hi


class GroupLayout:
    """Index bookkeeping for evaluating all groups at once.

    ``later[j, l]`` is 1 when l shares j's group and is decoded after j;
    ``suffix = later + I``.
    """

    def __init__(self, partition: GroupPartition):
        self.partition = partition
        m = partition.n_users
        self.n_users = m
        self.n_groups = partition.n_groups
        self.phase = partition.phase_of()
        self.later = np.zeros((m, m))
        self.previous = np.full(m, -1)
        self.is_last = np.zeros(m, dtype=bool)
        for g in partition.groups:
            for k, j in enumerate(g):
                self.later[j, list(g[k + 1:])] = 1.0
                if k > 0:
                    self.previous[j] = g[k - 1]
            self.is_last[g[-1]] = True
        self.suffix = self.later + np.eye(m)
        # membership[i, j] = 1 if user j offloads in phase i
        self.membership = np.zeros((self.n_groups, m))
        self.membership[self.phase, np.arange(m)] = 1.0


def exponents(t, d, layout: GroupLayout, cfg: SystemConfig):
    """Per-user exponent d_j ln2 / (B t_i); zero where the phase is empty."""
    tj = np.asarray(t, dtype=float)[layout.phase]
    d = np.asarray(d, dtype=float)
    if np.any((tj <= 0) & (d > 0)):
        raise InfeasibleDemandError("positive offload demand in a phase of zero duration")
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.where(tj > 0, d * LN2 / (cfg.bandwidth_hz * np.where(tj > 0, tj, 1.0)), 0.0)
    return x


def uplink_powers(q, t, d, gains, layout: GroupLayout, cfg: SystemConfig) -> np.ndarray:
    """Closed-form powers for every user of every group."""
    x = exponents(t, d, layout, cfg)
    c = interference_floor(q, cfg)[layout.phase]
    with np.errstate(over="ignore"):
        return c / np.asarray(gains, dtype=float) * np.expm1(x) * np.exp(layout.later @ x)
