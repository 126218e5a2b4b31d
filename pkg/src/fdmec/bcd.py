"""Block coordinate descent over BS powers, phase times and offloaded bits.

The uplink powers are eliminated through the closed-form minimum powers,
leaving variables (q, t, d). With two of the three blocks fixed the problem
in the third is convex (for the bit block after a tangent restriction, see
`build_d_subproblem`), and each block is solved with the barrier method.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .convex import BarrierSettings, SmoothProblem, minimize_barrier, reduce_violation
from .energy import Allocation, EnergyBreakdown, Instance, residuals, total_energy
from .errors import InfeasibleProblemError, NumericalError
from .noma import LN2, min_phase_time

log = logging.getLogger(__name__)

STATUS_CONVERGED = "converged"
STATUS_ITERATION_LIMIT = "iteration-limit"
STATUS_INFEASIBLE = "infeasible"
INIT_POLICIES = ("offload-first", "local-first")


@dataclass
class SolveSettings:
    max_outer_iterations: int = 100
    relative_objective_tol: float = 1e-6
    barrier: BarrierSettings = field(default_factory=BarrierSettings)
    initialization: str = "offload-first"
    max_tangent_rounds: int = 8
    phase1_rounds: int = 12

    def __post_init__(self):
        if self.max_outer_iterations < 1 or not self.relative_objective_tol > 0:
            raise ValueError("iteration limit and tolerance must be positive")
        if self.initialization not in INIT_POLICIES:
            raise ValueError(f"unknown initialization policy {self.initialization!r}")


@dataclass
class SolveReport:
    status: str
    allocation: Allocation | None = None
    breakdown: EnergyBreakdown | None = None
    trace: list = field(default_factory=list)
    block_iterations: dict = field(default_factory=lambda: {"q": [], "t": [], "d": []})
    outer_iterations: int = 0
    max_violation: float | None = None
    infeasible_family: str | None = None
    message: str = ""
    scheme: str = "proposed"

    @property
    def objective(self) -> float:
        return self.trace[-1] if self.trace else math.nan

    def to_dict(self) -> dict:
        out = {
            "scheme": self.scheme,
            "status": self.status,
            "objective_j": None if not self.trace else self.objective,
            "trace": list(self.trace),
            "outer_iterations": self.outer_iterations,
            "block_iterations": self.block_iterations,
            "max_violation": self.max_violation,
            "infeasible_family": self.infeasible_family,
            "message": self.message,
        }
        if self.allocation is not None:
            out["allocation"] = self.allocation.to_dict()
        if self.breakdown is not None:
            b = self.breakdown
            out["breakdown"] = {
                "bs_broadcast_j": b.bs_broadcast_j,
                "bs_compute_j": b.bs_compute_j,
                "user_offload_j": b.user_offload_j.tolist(),
                "user_local_j": b.user_local_j.tolist(),
                "user_harvest_j": b.user_harvest_j.tolist(),
                "total_j": b.total_j,
            }
        return out

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def summary_row(self) -> dict:
        b = self.breakdown
        return {
            "scheme": self.scheme,
            "status": self.status,
            "total_energy_j": self.objective if self.trace else "",
            "outer_iterations": self.outer_iterations,
            "bs_broadcast_j": "" if b is None else b.bs_broadcast_j,
            "bs_compute_j": "" if b is None else b.bs_compute_j,
            "user_offload_j": "" if b is None else float(np.sum(b.user_offload_j)),
            "user_local_j": "" if b is None else float(np.sum(b.user_local_j)),
            "user_harvest_j": "" if b is None else float(np.sum(b.user_harvest_j)),
            "max_violation": "" if self.max_violation is None else self.max_violation,
        }


def energy_scales(inst: Instance) -> np.ndarray:
    """Reference energy per user used to normalise harvesting constraints."""
    scale = inst.bits * inst.local_cost
    floor = max(float(scale.max(initial=0.0)), 1e-9) * 1e-6
    return np.maximum(scale, floor)


def _needs_energy(inst: Instance) -> np.ndarray:
    return inst.bits > 0


def _objective_scale(variable, constant=0.0):
    """Normaliser for a block objective.

    Block objectives drop every term that does not depend on the block, and
    are scaled by the size of what remains. With P0 equal to the local
    per-cycle energy the dropped part can exceed the rest by six orders of
    magnitude, which would otherwise swamp the barrier tolerances.
    """
    return max(abs(variable), 1e-9 * abs(constant), 1e-300)


def _wrap_linear(c, const, scale):
    c = np.asarray(c, dtype=float) / scale
    const = const / scale
    zero = np.zeros((c.size, c.size))

    def objective(x, order=0):
        f = float(c @ x) + const
        if order == 0:
            return f
        if order == 1:
            return f, c
        return f, c, zero
    return objective


@dataclass
class BlockProblem:
    problem: SmoothProblem
    free: np.ndarray           # indices of the block entries that are variables
    current: np.ndarray        # full block vector at the start point
    scale: float               # objective normalisation

    @property
    def x0(self):
        return self.current[self.free]

    def embed(self, x):
        out = self.current.copy()
        out[self.free] = x
        return out


# --- q block --------------------------------------------------------------

def _power_weights(t, d, inst: Instance):
    """Closed-form power per unit of noise-plus-interference, per user."""
    tj = t[inst.phase]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        x = np.where(tj > 0, d * LN2 / (inst.cfg.bandwidth_hz * np.where(tj > 0, tj, 1.0)), 0.0)
        return np.expm1(x) * np.exp(inst.layout.later @ x) / inst.h


def build_q_subproblem(q, t, d, inst: Instance) -> BlockProblem:
    """Linear program in the BS broadcast powers."""
    cfg = inst.cfg
    q, t, d = (np.asarray(v, dtype=float) for v in (q, t, d))
    n, m = inst.n_phases, inst.n_users
    w = _power_weights(t, d, inst)
    tj = t[inst.phase]
    gamma, noise = cfg.self_interference_coeff, cfg.noise_power_w
    member = inst.membership
    outside_harvest = (1.0 - member) @ inst.harvest_gain
    slope = t + gamma * t * (member @ w) - t * outside_harvest
    const = noise * float(np.sum(tj * w)) + cfg.bs_energy_per_cycle_j * float(inst.cycles @ d) \
        + float(np.sum((inst.bits - d) * inst.local_cost))
    free = np.flatnonzero(inst.bs_power_cap > 0)
    fixed = np.setdiff1d(np.arange(n), free)
    # widest swing of the linear part over the box
    scale = _objective_scale(float(np.abs(slope[free]) @ inst.bs_power_cap[free]), const)

    rows, rhs, labels = [], [], []
    e = energy_scales(inst)
    need = _needs_energy(inst)
    for j in range(m):
        i = inst.phase[j]
        if need[j]:
            row = -inst.harvest_gain[j] * t
            row[i] = gamma * tj[j] * w[j]
            rows.append(row / e[j])
            rhs.append(-(noise * tj[j] * w[j] + (inst.bits[j] - d[j]) * inst.local_cost[j]) / e[j])
            labels.append("energy_harvesting")
        if d[j] > 0 and gamma > 0:
            row = np.zeros(n)
            row[i] = gamma * w[j] / cfg.user_max_power_w
            rows.append(row)
            rhs.append(1.0 - noise * w[j] / cfg.user_max_power_w)
            labels.append("user_power")
    A = b = None
    if rows:
        A = np.array(rows)
        b = np.array(rhs) - A[:, fixed] @ q[fixed]
        A = A[:, free]
    objective = _wrap_linear(slope[free], 0.0, scale)
    problem = SmoothProblem(free.size, objective, A=A, b=b, lb=np.zeros(free.size),
                            ub=inst.bs_power_cap[free], labels=labels)
    return BlockProblem(problem, free, q.copy(), scale)


# --- t block --------------------------------------------------------------

def _perspective_terms(t_user, coeff, tail, own):
    """t*f and its first two derivatives in t for every user.

    ``coeff = c / h``; ``tail`` and ``own`` are the later-user and own
    exponent numerators (d ln2 / B), so f = coeff * expm1(own/t) * exp(tail/t).
    """
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        x = own / t_user
        y = tail / t_user
        ey = np.exp(y)
        em = np.expm1(x)
        val = coeff * t_user * ey * em
        d1 = coeff * ey * (em * (1.0 - y - x) - x)
        d2 = coeff / t_user * ey * ((y + x) ** 2 * em + x * (2.0 * y + x))
    zero = own == 0
    val = np.where(zero, 0.0, val)
    d1 = np.where(zero, 0.0, d1)
    d2 = np.where(zero, 0.0, d2)
    return val, d1, d2


def _power_terms(t_user, coeff, tail, own):
    """Closed-form power and its first two derivatives in t for every user."""
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        x = own / t_user
        y = tail / t_user
        ey = np.exp(y)
        em = np.expm1(x)
        s = y + x
        val = coeff * ey * em
        d1 = -coeff / t_user * ey * (s * em + x)
        d2 = coeff / t_user ** 2 * ey * ((s * s + 2.0 * s) * em + x * x + 2.0 * x * y + 2.0 * x)
    zero = own == 0
    return np.where(zero, 0.0, val), np.where(zero, 0.0, d1), np.where(zero, 0.0, d2)


def phase_time_floor(q, d, inst: Instance) -> np.ndarray:
    out = np.zeros(inst.n_phases)
    for i, group in enumerate(inst.partition.groups):
        idx = list(group)
        out[i] = min_phase_time(inst.h[idx], q[i], d[idx], inst.cfg)
    return out


def build_t_subproblem(q, t, d, inst: Instance, floors=None, soft_power=False) -> BlockProblem:
    """Phase times with the per-user power caps turned into lower bounds.

    With ``soft_power`` the caps stay explicit convex constraints instead,
    which lets a feasibility search trade them against the time budget.
    """
    cfg = inst.cfg
    q, t, d = (np.asarray(v, dtype=float) for v in (q, t, d))
    n, m = inst.n_phases, inst.n_users
    member = inst.membership
    demand = member @ d
    free = np.flatnonzero((demand > 0) | (t > 0))
    nf = free.size
    pos = np.full(n, -1)
    pos[free] = np.arange(nf)
    if soft_power:
        floors = np.zeros(n)
    elif floors is None:
        floors = phase_time_floor(q, d, inst)
        # a current duration that already meets the caps is a valid floor
        powers_ok = inst.powers(q, np.where(t > 0, t, 1.0), d) < cfg.user_max_power_w
        ok = (np.bincount(inst.phase, weights=~powers_ok, minlength=n) == 0) & (t > 0)
        floors = np.where(ok, np.minimum(floors, t * (1.0 - 1e-12)), floors)

    own = d * LN2 / cfg.bandwidth_hz
    tail = inst.layout.later @ own
    coeff = (cfg.noise_power_w + cfg.self_interference_coeff * q[inst.phase]) / inst.h
    outside_harvest = (1.0 - member) @ inst.harvest_gain
    lin = q * (1.0 - outside_harvest)
    const = cfg.bs_energy_per_cycle_j * float(inst.cycles @ d) + float(np.sum((inst.bits - d) * inst.local_cost))
    fixed_t = t.copy()
    user_free = pos[inst.phase]                     # column of each user's phase, -1 if fixed

    def full(x):
        tt = fixed_t.copy()
        tt[free] = x
        return tt

    def objective_raw(x, order):
        tt = full(x)
        val, d1, d2 = _perspective_terms(tt[inst.phase], coeff, tail, own)
        f = float(lin @ tt + val.sum())
        if order == 0:
            return f
        grad = lin[free] + np.bincount(inst.phase, weights=d1, minlength=n)[free]
        if order == 1:
            return f, grad
        hess = np.diag(np.bincount(inst.phase, weights=d2, minlength=n)[free])
        return f, grad, hess

    scale = _objective_scale(objective_raw(t[free], 0), const)

    def objective(x, order=0):
        out = objective_raw(x, order)
        if order == 0:
            return out / scale
        return tuple(v / scale for v in out)

    e = energy_scales(inst)
    users = np.flatnonzero(_needs_energy(inst))
    local = (inst.bits - d) * inst.local_cost
    broadcast_gain = inst.harvest_gain[users][:, None] * q[None, :]

    constraints = None
    if users.size:
        def constraints(x, order=0):
            tt = full(x)
            val, d1, d2 = _perspective_terms(tt[inst.phase][users], coeff[users], tail[users], own[users])
            bq = broadcast_gain * tt[None, :]
            harvest = bq.sum(axis=1) - bq[np.arange(users.size), inst.phase[users]]
            g = (val + local[users] - harvest) / e[users]
            if order == 0:
                return g
            jac_full = -broadcast_gain.copy()
            jac_full[np.arange(users.size), inst.phase[users]] = d1
            jac = jac_full[:, free] / e[users][:, None]
            if order == 1:
                return g, jac
            cols = user_free[users]
            curv = d2 / e[users]

            def whess(wts):
                h = np.zeros((nf, nf))
                ok = cols >= 0
                np.add.at(h, (cols[ok], cols[ok]), wts[ok] * curv[ok])
                return h
            return g, jac, whess

    labels = ["energy_harvesting"] * users.size
    if soft_power:
        senders = np.flatnonzero((d > 0) & (user_free >= 0))
        labels += ["user_power"] * senders.size
        harvest_constraints = constraints
        cap = cfg.user_max_power_w

        def power_constraints(x, order):
            tt = full(x)
            val, d1, d2 = _power_terms(tt[inst.phase][senders], coeff[senders], tail[senders], own[senders])
            g = val / cap - 1.0
            if order == 0:
                return g
            cols = user_free[senders]
            jac = np.zeros((senders.size, nf))
            jac[np.arange(senders.size), cols] = d1 / cap
            if order == 1:
                return g, jac

            def whess(wts):
                h = np.zeros((nf, nf))
                np.add.at(h, (cols, cols), wts * d2 / cap)
                return h
            return g, jac, whess

        def constraints(x, order=0):
            parts = [power_constraints(x, order)]
            if harvest_constraints is not None:
                parts.insert(0, harvest_constraints(x, order))
            if order == 0:
                return np.concatenate(parts)
            g = np.concatenate([p[0] for p in parts])
            jac = np.vstack([p[1] for p in parts])
            if order == 1:
                return g, jac
            sizes = np.cumsum([p[0].size for p in parts])[:-1]

            def whess(wts):
                return sum(p[2](w) for p, w in zip(parts, np.split(wts, sizes)))
            return g, jac, whess

    A = np.ones((1, nf)) / cfg.slot_duration_s
    b = np.array([1.0 - fixed_t[np.setdiff1d(np.arange(n), free)].sum() / cfg.slot_duration_s])
    labels += ["time_budget"]
    problem = SmoothProblem(nf, objective, constraints, A=A, b=b,
                            lb=floors[free], ub=None, labels=labels)
    return BlockProblem(problem, free, t.copy(), scale)


# --- d block --------------------------------------------------------------

def build_d_subproblem(q, t, d, inst: Instance, anchor=None) -> BlockProblem:
    """Offloaded bits with every SIC power constraint made convex.

    Each user's power is c/h * (exp(own + tail) - exp(tail)). The sum of
    these terms in the objective is convex for descending gains, but for a
    user decoded before others the single term is not, so in its power and
    harvesting constraints exp(tail) is replaced by its tangent at
    ``anchor`` (default ``d``). The tangent underestimates exp(tail), so the
    constraints become tighter, convex, and exact at the anchor.
    """
    cfg = inst.cfg
    q, t, d = (np.asarray(v, dtype=float) for v in (q, t, d))
    anchor = d if anchor is None else np.asarray(anchor, dtype=float)
    m = inst.n_users
    tj = t[inst.phase]
    free = np.flatnonzero((inst.bits > 0) & (tj > 0))
    if np.any((tj <= 0) & (d > 0)):
        raise InfeasibleProblemError("bits scheduled in a closed phase", "time_budget")
    with np.errstate(divide="ignore"):
        k = np.where(tj > 0, LN2 / (cfg.bandwidth_hz * np.where(tj > 0, tj, 1.0)), 0.0)
    U = inst.layout.suffix
    S = inst.layout.later
    c = cfg.noise_power_w + cfg.self_interference_coeff * q[inst.phase]
    coeff = c / inst.h                                  # power per unit exponential
    weight = tj * coeff                                 # energy per unit exponential
    prev = inst.layout.previous
    weight_step = weight - np.where(prev >= 0, weight[np.maximum(prev, 0)], 0.0)
    tail_anchor = S @ (k * anchor)
    fixed_d = d.copy()
    lin = cfg.bs_energy_per_cycle_j * inst.cycles - inst.local_cost
    const = float(np.sum(inst.bits * inst.local_cost))
    Ufree = U[:, free]
    Sfree = S[:, free]
    kfree = k[free]

    def full(x):
        dd = fixed_d.copy()
        dd[free] = x
        return dd

    def objective_raw(x, order):
        dd = full(x)
        z = k * dd
        tail = S @ z
        own = z
        with np.errstate(over="ignore"):
            et = np.exp(tail)
            val = weight * et * np.expm1(own)
        f = float(lin @ dd + val.sum())
        if order == 0:
            return f
        head = U @ z
        with np.errstate(over="ignore"):
            eh = np.exp(head)
        gz = Ufree.T @ (weight * eh) - Sfree.T @ (weight * et)
        grad = lin[free] + kfree * gz
        if order == 1:
            return f, grad
        curv = weight_step * eh
        hz = (Ufree.T * curv) @ Ufree
        hess = hz * kfree[:, None] * kfree[None, :]
        return f, grad, hess

    scale = _objective_scale(objective_raw(d[free], 0), const)

    def objective(x, order=0):
        out = objective_raw(x, order)
        if order == 0:
            return out / scale
        return tuple(v / scale for v in out)

    e = energy_scales(inst)
    harvest = inst.harvest(q, t)
    rows = free                                       # constrained users: those with variables
    cap = cfg.user_max_power_w

    def surrogate(x, order):
        dd = full(x)
        z = k * dd
        head = (U @ z)[rows]
        tail = (S @ z)[rows]
        ta = tail_anchor[rows]
        with np.errstate(over="ignore"):
            ea = np.exp(ta)
            val = coeff[rows] * ea * (np.expm1(head - ta) - (tail - ta))
        if order == 0:
            return val
        with np.errstate(over="ignore"):
            eh = np.exp(head)
        jac = coeff[rows][:, None] * (eh[:, None] * Ufree[rows] - ea[:, None] * Sfree[rows]) * kfree[None, :]
        return val, jac, coeff[rows] * eh

    constraints = None
    if rows.size:
        tr = tj[rows]
        er = e[rows]

        def constraints(x, order=0):
            out = surrogate(x, order)
            val = out if order == 0 else out[0]
            dd = full(x)
            g_eh = (tr * val + (inst.bits[rows] - dd[rows]) * inst.local_cost[rows] - harvest[rows]) / er
            g_pw = (val - cap) / cap
            g = np.concatenate([g_eh, g_pw])
            if order == 0:
                return g
            jac_p = out[1]
            jac_eh = tr[:, None] * jac_p
            jac_eh[np.arange(rows.size), np.arange(rows.size)] -= inst.local_cost[rows]
            jac = np.vstack([jac_eh / er[:, None], jac_p / cap])
            if order == 1:
                return g, jac
            scal = out[2]
            vecs = Ufree[rows] * kfree[None, :]

            def whess(wts):
                w_eh, w_pw = wts[:rows.size], wts[rows.size:]
                coef = scal * (w_eh * tr / er + w_pw / cap)
                return (vecs.T * coef) @ vecs
            return g, jac, whess

    A = (inst.cycles[free] / cfg.edge_capacity_cycles)[None, :]
    fixed_cycles = float(np.sum(np.delete(inst.cycles * d, free)))
    b = np.array([1.0 - fixed_cycles / cfg.edge_capacity_cycles])
    labels = ["energy_harvesting"] * rows.size + ["user_power"] * rows.size + ["edge_capacity"]
    problem = SmoothProblem(free.size, objective, constraints, A=A, b=b,
                            lb=inst.min_offload[free], ub=inst.bits[free], labels=labels)
    return BlockProblem(problem, free, d.copy(), scale)


# --- driver ---------------------------------------------------------------

def scaled_violation(q, t, d, inst: Instance):
    """Worst normalised constraint violation (negative = strictly feasible)."""
    res = residuals(Allocation.derived(q, t, d, inst), inst)
    e = energy_scales(inst)
    need = _needs_energy(inst)
    cfg = inst.cfg
    active = d > 0
    fams = {
        "energy_harvesting": float(np.max(-res.eh_slack[need] / e[need], initial=-np.inf)),
        "user_power": float(np.max(-res.power_cap_slack[active] / cfg.user_max_power_w, initial=-np.inf)),
        "edge_capacity": -res.edge_capacity_slack / cfg.edge_capacity_cycles,
        "time_budget": -res.time_budget_slack / cfg.slot_duration_s,
    }
    worst = max(fams, key=fams.get)
    return fams[worst], worst


def _certify(inst: Instance):
    cfg = inst.cfg
    lo = inst.min_offload
    forced = float(inst.cycles @ lo)
    if forced > cfg.edge_capacity_cycles:
        raise InfeasibleProblemError(
            f"forced offload needs {forced:.4g} edge cycles > F = {cfg.edge_capacity_cycles:.4g}",
            "edge_capacity", forced / cfg.edge_capacity_cycles - 1.0)
    broadcasters = (inst.bs_power_cap > 0).astype(float)
    sources = broadcasters.sum() - broadcasters[inst.phase]
    if np.any(_needs_energy(inst) & (sources == 0)):
        raise InfeasibleProblemError(
            "a user has no phase to harvest from while it needs energy", "energy_harvesting")
    floors = phase_time_floor(np.zeros(inst.n_phases), lo, inst)
    if floors.sum() >= cfg.slot_duration_s:
        raise InfeasibleProblemError(
            f"minimum phase durations sum to {floors.sum():.4g} s >= T", "time_budget",
            floors.sum() / cfg.slot_duration_s - 1.0)


def initial_guess(inst: Instance, policy="offload-first"):
    """Starting point before feasibility repair.

    Full broadcast power and equal phases filling 99.9% of the slot, so the
    time budget is not active at the start. ``local-first`` offloads only the
    bits the local CPU cannot finish; ``offload-first`` raises every user
    by the same fraction of its remaining bits until the edge is 99.9% full.
    The two start in different regions, and since offloading a bit costs the
    edge what it saves locally when the per-cycle energies match, the
    alternating scheme rarely moves between them.
    """
    cfg = inst.cfg
    n = inst.n_phases
    q = inst.bs_power_cap.copy()
    t = np.full(n, 0.999 * cfg.slot_duration_s / n)
    lo = inst.min_offload.copy()
    if policy == "local-first":
        return q, t, lo
    room = inst.cycles @ (inst.bits - lo)
    spare = 0.999 * cfg.edge_capacity_cycles - inst.cycles @ lo
    share = min(1.0, max(0.0, spare / room)) if room > 0 else 0.0
    return q, t, lo + share * (inst.bits - lo)


def _phase1_block(block: BlockProblem, settings):
    if block.free.size == 0:
        return block.current, None
    res = reduce_violation(block.problem, block.x0, settings=settings.barrier)
    return block.embed(res.x), res


def initialize(inst: Instance, settings: SolveSettings | None = None):
    """Strictly feasible starting allocation, or InfeasibleProblemError."""
    settings = settings or SolveSettings()
    _certify(inst)
    q, t, d = initial_guess(inst, settings.initialization)
    worst, family = scaled_violation(q, t, d, inst)
    if worst < 0:
        return q, t, d
    best = worst
    stall = 0
    for _ in range(settings.phase1_rounds):
        q, _ = _phase1_block(build_q_subproblem(q, t, d, inst), settings)
        t, _ = _phase1_block(build_t_subproblem(q, t, d, inst, soft_power=True), settings)
        d, _ = _phase1_block(build_d_subproblem(q, t, d, inst), settings)
        worst, family = scaled_violation(q, t, d, inst)
        log.debug("phase-1 round: worst %.3g (%s)", worst, family)
        if worst < 0:
            return q, t, d
        if worst > best - 1e-6 * max(1.0, abs(best)):
            stall += 1
            if stall >= 2:
                break
        else:
            stall = 0
        best = min(best, worst)
    raise InfeasibleProblemError(
        f"no strictly feasible allocation found; worst violation {worst:.3g} in {family}",
        family, worst)


ROUNDING_SLACK = 1e-9


def relax_to_start(problem: SmoothProblem, x0, tol=ROUNDING_SLACK):
    """Make a block start point strictly feasible when it misses only by rounding.

    Consecutive blocks evaluate the same constraint with different
    arithmetic, so a constraint left active by one block can look violated
    by ~1e-16 to the next. The start is nudged inside its bounds and any
    general constraint it still misses is loosened by that amount.
    Violations above ``tol`` (normalised units) are real and raise.
    Returns ``(problem, x0)``.
    """
    x0 = np.asarray(x0, dtype=float)
    pad = 1e-13
    finite = np.isfinite(problem.lb) & np.isfinite(problem.ub)
    span = np.where(finite, problem.ub - problem.lb, np.abs(x0) + 1.0)
    low = x0 <= problem.lb
    high = x0 >= problem.ub
    if np.any(x0[low] < problem.lb[low] - tol * span[low]) or np.any(x0[high] > problem.ub[high] + tol * span[high]):
        raise NumericalError("block start lies outside its bounds")
    nudge = np.maximum(1e-3 * pad * span, 8 * np.finfo(float).eps * np.abs(x0))
    x0 = np.where(low, problem.lb + nudge, x0)
    x0 = np.where(high, problem.ub - nudge, x0)
    g0 = np.asarray(problem.nonlinear(x0, 0), dtype=float)
    shift = np.where(g0 >= 0, g0 + pad, 0.0)
    b = problem.b
    if problem.A is not None:
        r0 = problem.A @ x0 - problem.b
        b = problem.b + np.where(r0 >= 0, r0 + pad * np.maximum(1.0, np.abs(problem.b)), 0.0)
    worst = max(float(np.max(shift, initial=0.0)),
                float(np.max(b - problem.b, initial=0.0)) if problem.A is not None else 0.0)
    if worst > tol:
        labels = problem.labels or []
        viol = np.concatenate([shift, np.zeros(0) if problem.A is None else b - problem.b])
        k = int(np.argmax(viol))
        name = labels[k] if k < len(labels) else "constraint"
        raise NumericalError(f"block start violates {name} by {worst:.3g}")
    if worst == 0.0:
        return problem, x0
    constraints = problem.constraints
    if constraints is not None and np.any(shift > 0):
        inner = constraints

        def constraints(x, order=0):
            out = inner(x, order)
            if order == 0:
                return out - shift
            return (out[0] - shift,) + tuple(out[1:])
    return SmoothProblem(problem.n, problem.objective, constraints, problem.A, b,
                         problem.lb, problem.ub, problem.labels), x0


def _solve_block(block: BlockProblem, settings: SolveSettings):
    if block.free.size == 0:
        return block.current, 0
    problem, x0 = relax_to_start(block.problem, block.x0)
    result = minimize_barrier(problem, x0, settings.barrier)
    return block.embed(result.x), result.iterations


def solve_q(q, t, d, inst, settings):
    return _solve_block(build_q_subproblem(q, t, d, inst), settings)


def solve_t(q, t, d, inst, settings):
    block = build_t_subproblem(q, t, d, inst)
    t_new, its = _solve_block(block, settings)
    demand = inst.membership @ d
    close = (t_new < 1e-12 * inst.cfg.slot_duration_s) & (demand == 0) & (t_new > 0)
    if np.any(close):
        trial = np.where(close, 0.0, t_new)
        if scaled_violation(q, trial, d, inst)[0] < 0:
            t_new = trial
    return t_new, its


def solve_d(q, t, d, inst, settings):
    total = 0
    current = d
    value = total_energy(Allocation.derived(q, t, current, inst), inst).total_j
    for _ in range(settings.max_tangent_rounds):
        block = build_d_subproblem(q, t, current, inst)
        new, its = _solve_block(block, settings)
        total += its
        new_value = total_energy(Allocation.derived(q, t, new, inst), inst).total_j
        if not new_value <= value or scaled_violation(q, t, new, inst)[0] >= 0:
            break
        improvement = value - new_value
        current, value = new, new_value
        if improvement <= 0.1 * settings.relative_objective_tol * abs(value):
            break
    return current, total


def objective_value(q, t, d, inst) -> float:
    return total_energy(Allocation.derived(q, t, d, inst), inst).total_j


def run_bcd(inst: Instance, start, settings: SolveSettings, scheme="proposed") -> SolveReport:
    q, t, d = (np.array(v, dtype=float) for v in start)
    report = SolveReport(STATUS_ITERATION_LIMIT, scheme=scheme)
    value = objective_value(q, t, d, inst)
    report.trace.append(value)
    for it in range(1, settings.max_outer_iterations + 1):
        q, n_q = solve_q(q, t, d, inst, settings)
        t, n_t = solve_t(q, t, d, inst, settings)
        d, n_d = solve_d(q, t, d, inst, settings)
        for key, n in (("q", n_q), ("t", n_t), ("d", n_d)):
            report.block_iterations[key].append(n)
        new_value = objective_value(q, t, d, inst)
        report.trace.append(new_value)
        report.outer_iterations = it
        change = abs(value - new_value)
        value = new_value
        if change <= settings.relative_objective_tol * max(abs(value), 1e-300):
            report.status = STATUS_CONVERGED
            break
    alloc = Allocation.derived(q, t, d, inst)
    report.allocation = alloc
    report.breakdown = total_energy(alloc, inst)
    report.max_violation = scaled_violation(q, t, d, inst)[0]
    return report


def solve_instance(inst: Instance, settings: SolveSettings | None = None, scheme="proposed") -> SolveReport:
    """Initialise and alternate; infeasible instances get a report, not an exception."""
    settings = settings or SolveSettings()
    try:
        start = initialize(inst, settings)
    except InfeasibleProblemError as exc:
        return SolveReport(STATUS_INFEASIBLE, infeasible_family=exc.family,
                           max_violation=exc.violation, message=str(exc), scheme=scheme)
    return run_bcd(inst, start, settings, scheme)


def solve(users, partition, cfg, settings: SolveSettings | None = None, scheme="proposed") -> SolveReport:
    """Full-duplex NOMA allocation for one slot, block order q, t, d."""
    return solve_instance(Instance(users, partition, cfg), settings, scheme)
