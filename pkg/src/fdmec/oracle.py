"""Brute-force reference answers for tiny instances.

Everything here is evaluated from the published expansion of the minimum
powers and from first principles for rates and constraints, without the
log-domain helpers the solver uses, so agreement between the two is
meaningful.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

MAX_GRID_POINTS = 10_000_000
_CHUNK = 200_000


def literal_powers(gains, offload_bits, phase_time_s, bs_power_w, cfg):
    """Minimum powers of one group by the published sum-of-products form.

    Broadcasts over any leading shape of ``offload_bits``/``phase_time_s``
    (group members on the last axis of ``offload_bits``).
    """
    d = np.asarray(offload_bits, dtype=float)
    t = np.asarray(phase_time_s, dtype=float)[..., None]
    c = (cfg.noise_power_w + cfg.self_interference_coeff * np.asarray(bs_power_w, dtype=float))[..., None]
    gains = np.asarray(gains, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        a = np.where(d > 0, d / (cfg.bandwidth_hz * t), 0.0)
        grow = 2.0 ** a - 1.0
    k = d.shape[-1]
    out = np.empty(np.broadcast(d, t).shape)
    for j in range(k):
        bracket = np.ones(out.shape[:-1])
        for l in range(j + 1, k):
            between = np.sum(a[..., j + 1:l], axis=-1)
            bracket = bracket + grow[..., l] * 2.0 ** between
        out[..., j] = c[..., 0] / gains[j] * grow[..., j] * bracket
    return out


def rate_region_check(gains, powers, phase, cfg, rtol=1e-9) -> bool:
    """True when every member can send its bits at the given powers.

    Rates come straight from the SINR with weaker users as interference.
    """
    gains = [float(x) for x in gains]
    powers = [float(x) for x in powers]
    bits = [float(x) for x in phase.offload_bits]
    floor = cfg.noise_power_w + cfg.self_interference_coeff * phase.bs_power_w
    for j, need in enumerate(bits):
        if need <= 0:
            continue
        interference = sum(gains[l] * powers[l] for l in range(j + 1, len(gains)))
        sinr = gains[j] * powers[j] / (interference + floor)
        sent = cfg.bandwidth_hz * math.log2(1.0 + sinr) * phase.phase_time_s
        if sent < need * (1.0 - rtol):
            return False
    return True


@dataclass
class GridSpec:
    """Axes named ``q0, q1, ..., t0, ..., d0, ...``; every variable is either
    scanned (``axes[name] = (low, high, steps)``) or ``pinned``."""

    axes: dict
    pinned: dict = field(default_factory=dict)
    feasibility_tol: float = 1e-9
    max_points: int = MAX_GRID_POINTS

    def __post_init__(self):
        for name, (lo, hi, steps) in self.axes.items():
            if steps < 1 or hi < lo:
                raise ConfigurationError(f"bad axis {name}")
        if self.n_points > self.max_points:
            raise ConfigurationError(f"grid of {self.n_points} points exceeds {self.max_points}")

    @property
    def dimension(self) -> int:
        return sum(1 for _, _, s in self.axes.values() if s > 1)

    @property
    def n_points(self) -> int:
        return int(np.prod([s for _, _, s in self.axes.values()], dtype=float))

    def values(self, name):
        lo, hi, steps = self.axes[name]
        return np.linspace(lo, hi, steps)

    def refined(self) -> GridSpec:
        """Twice the resolution on the same ranges; contains every old point."""
        axes = {k: (lo, hi, 2 * s - 1 if s > 1 else 1) for k, (lo, hi, s) in self.axes.items()}
        return GridSpec(axes, dict(self.pinned), self.feasibility_tol, self.max_points)

    def zoomed(self, center: dict, shrink=0.25, bounds=None) -> GridSpec:
        """Same step counts on ranges shrunk around ``center`` (clipped to ``bounds``)."""
        axes = {}
        for k, (lo, hi, s) in self.axes.items():
            half = 0.5 * (hi - lo) * shrink
            blo, bhi = (bounds or {}).get(k, (lo, hi))
            c = center[k]
            axes[k] = (max(blo, c - half), min(bhi, c + half), s)
        return GridSpec(axes, dict(self.pinned), self.feasibility_tol, self.max_points)


@dataclass
class OracleResult:
    feasible: bool
    objective: float
    q: np.ndarray | None = None
    t: np.ndarray | None = None
    d: np.ndarray | None = None
    min_slack: float = -math.inf        # smallest normalised slack at the best point
    evaluated: int = 0

    def point(self) -> dict:
        out = {}
        for key, arr in (("q", self.q), ("t", self.t), ("d", self.d)):
            for i, v in enumerate(arr):
                out[f"{key}{i}"] = float(v)
        return out


def _variable_names(n_groups, n_users):
    return [f"q{i}" for i in range(n_groups)] + [f"t{i}" for i in range(n_groups)] + \
        [f"d{j}" for j in range(n_users)]


def evaluate_points(users, partition, cfg, q, t, d):
    """Objective and worst normalised slack for a batch of points.

    ``q, t`` have shape (P, N), ``d`` has shape (P, M). Slack is positive
    when every constraint holds.
    """
    q, t, d = (np.asarray(v, dtype=float) for v in (q, t, d))
    P = q.shape[0]
    M = len(users)
    h = np.array([u.uplink_gain for u in users])
    g = np.array([u.downlink_gain for u in users])
    zeta = np.array([u.eh_efficiency for u in users])
    R = np.array([u.task_bits for u in users])
    C = np.array([u.cycles_per_bit for u in users])
    kappa = np.array([u.local_energy_per_cycle_j for u in users])
    Fj = np.array([u.local_capacity_cycles_per_s for u in users])
    T = cfg.slot_duration_s

    power = np.zeros((P, M))
    own_t = np.zeros((P, M))
    own_b = np.zeros((P, M))
    slack = np.full(P, np.inf)
    for i, group in enumerate(partition.groups):
        idx = list(group)
        ti = t[:, i]
        dg = d[:, idx]
        empty = ti <= 0
        dead = empty & np.any(dg > 0, axis=1)
        slack = np.where(dead, -np.inf, slack)
        safe_t = np.where(empty, 1.0, ti)
        p = literal_powers(h[idx], dg, safe_t, q[:, i], cfg)
        p = np.where(empty[:, None], 0.0, p)
        power[:, idx] = p
        own_t[:, idx] = ti[:, None]
        own_b[:, idx] = (q[:, i] * ti)[:, None]

    broadcast = np.sum(q * t, axis=1)
    harvest = zeta * g * (broadcast[:, None] - own_b)
    local = (R - d) * C * kappa
    spend = power * own_t + local
    energy = broadcast + cfg.bs_energy_per_cycle_j * (d @ C) + np.sum(spend - harvest, axis=1)

    escale = np.maximum(R * C * kappa, 1e-12)
    eh = np.where(R > 0, (harvest - spend) / escale, np.inf)
    cap = 1.0 - power / cfg.user_max_power_w
    cap = np.where(d > 0, cap, np.inf)
    latency = (Fj * T - C * (R - d)) / (Fj * T)
    families = [
        eh.min(axis=1), cap.min(axis=1), latency.min(axis=1),
        1.0 - (d @ C) / cfg.edge_capacity_cycles,
        1.0 - t.sum(axis=1) / T,
        np.min(1.0 - q / cfg.bs_max_power_w, axis=1),
    ]
    for fam in families:
        slack = np.minimum(slack, fam)
    bad = (q < 0).any(axis=1) | (t < 0).any(axis=1) | (d < 0).any(axis=1) | (d > R).any(axis=1)
    slack = np.where(bad, -np.inf, slack)
    return energy, slack


def grid_minimize(users, partition, cfg, grid: GridSpec) -> OracleResult:
    """Exhaustive scan; keeps the cheapest point whose slack is >= -tol."""
    n, m = partition.n_groups, len(users)
    names = _variable_names(n, m)
    missing = [k for k in names if k not in grid.axes and k not in grid.pinned]
    if missing:
        raise ConfigurationError(f"grid leaves {missing} unspecified")
    if grid.dimension > 4:
        raise ConfigurationError("oracle supports at most four scanned variables")
    scanned = [k for k in names if k in grid.axes]
    values = [grid.values(k) for k in scanned]
    base = np.array([grid.pinned.get(k, 0.0) for k in names])
    col = {k: names.index(k) for k in scanned}

    best = OracleResult(False, math.inf)
    shape = tuple(len(v) for v in values)
    total = grid.n_points
    done = 0
    while done < total:
        flat = np.arange(done, min(total, done + _CHUNK))
        idx = np.unravel_index(flat, shape)
        z = np.tile(base, (flat.size, 1))
        for a, k in enumerate(scanned):
            z[:, col[k]] = values[a][idx[a]]
        q, t, d = z[:, :n], z[:, n:2 * n], z[:, 2 * n:]
        energy, slack = evaluate_points(users, partition, cfg, q, t, d)
        ok = slack >= -grid.feasibility_tol
        if np.any(ok):
            cand = np.where(ok, energy, np.inf)
            k = int(np.argmin(cand))
            if cand[k] < best.objective:
                best = OracleResult(True, float(cand[k]), q[k].copy(), t[k].copy(), d[k].copy(), float(slack[k]))
        done += flat.size
    best.evaluated = done
    return best


def zoom_minimize(users, partition, cfg, grid: GridSpec, levels=6, shrink=0.3) -> OracleResult:
    """Coarse scan followed by repeated scans on shrinking boxes around the best point."""
    bounds = {k: (lo, hi) for k, (lo, hi, _) in grid.axes.items()}
    best = grid_minimize(users, partition, cfg, grid)
    evaluated = best.evaluated
    current = grid
    for _ in range(levels):
        if not best.feasible:
            break
        current = current.zoomed(best.point(), shrink, bounds)
        trial = grid_minimize(users, partition, cfg, current)
        evaluated += trial.evaluated
        if trial.feasible and trial.objective <= best.objective:
            best = trial
    best.evaluated = evaluated
    return best
