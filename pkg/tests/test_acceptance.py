"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``ACCEPTANCE <k> PASS|FAIL`` line (visible under
``pytest -v``) before asserting, so a run shows every verdict even when
some fail. The Monte-Carlo criteria take several minutes each.
"""

import math
import time

import numpy as np
import pytest

from fdmec.bcd import (
    STATUS_CONVERGED, STATUS_INFEASIBLE, SolveSettings, build_d_subproblem, build_t_subproblem,
    build_q_subproblem, initialize, run_bcd, scaled_violation, solve, solve_instance,
)
from fdmec.convex import check_derivatives, hessians
from fdmec.energy import Instance
from fdmec.errors import InfeasibleProblemError
from fdmec.experiments import ExperimentSpec, run_tasks
from fdmec.noma import PhaseAllocation, interference_sums, power_closed_form
from fdmec.oracle import GridSpec, literal_powers, zoom_minimize
from fdmec.units import ScenarioSpec, SystemConfig, generate_scenario

from conftest import small_instance, two_phase_toy

pytestmark = pytest.mark.slow


@pytest.fixture
def verdict(capsys):
    def emit(k, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {k} {'PASS' if ok else 'FAIL'}: {detail}")
        return ok
    return emit


def _random_phase(rng, k, cfg):
    t = rng.uniform(1e-3, 0.1)
    d = rng.uniform(0.0, 3.0, size=k) * cfg.bandwidth_hz * t
    d[rng.random(k) < 0.15] = 0.0
    gains = np.sort(rng.uniform(1e-4, 1e-2, size=k))[::-1]
    return gains, PhaseAllocation(t, rng.uniform(0.0, cfg.bs_max_power_w), tuple(d))


def test_1_recursion_matches_published_expansion(verdict):
    cfg = SystemConfig()
    rng = np.random.default_rng(1)
    cases = [_random_phase(rng, int(rng.integers(1, 5)), cfg) for _ in range(1000)]
    start = time.perf_counter()
    worst = 0.0
    for gains, phase in cases:
        u = interference_sums(phase, gains, cfg)
        p = power_closed_form(phase, gains, cfg)
        # the expansion gives powers; summing h_l p_l over l >= j gives the sums
        ref = literal_powers(gains, phase.offload_bits, phase.phase_time_s, phase.bs_power_w, cfg)
        ref_u = np.cumsum((gains * ref)[::-1])[::-1]
        for a, b in ((p, ref), (u, ref_u)):
            nz = b != 0
            if np.any(a[~nz] != 0):
                worst = math.inf
            if np.any(nz):
                worst = max(worst, float(np.max(np.abs(a[nz] - b[nz]) / np.abs(b[nz]))))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-10 and elapsed < 1.0
    verdict(1, ok, f"max rel error {worst:.2e} (<= 1e-10), {elapsed:.2f} s (< 1 s)")
    assert ok


def test_2_rate_round_trip(verdict):
    cfg = SystemConfig()
    rng = np.random.default_rng(2)
    cases = []
    while len(cases) < 1000:
        gains, phase = _random_phase(rng, int(rng.integers(1, 5)), cfg)
        p = power_closed_form(phase, gains, cfg)
        if np.all(p <= cfg.user_max_power_w):
            cases.append((gains, phase, p))
    start = time.perf_counter()
    worst = 0.0
    for gains, phase, p in cases:
        floor = cfg.noise_power_w + cfg.self_interference_coeff * phase.bs_power_w
        for j, need in enumerate(phase.offload_bits):
            # SINR with every later-decoded user as interference
            interference = sum(gains[l] * p[l] for l in range(j + 1, len(gains)))
            sent = cfg.bandwidth_hz * math.log2(1 + gains[j] * p[j] / (interference + floor)) * phase.phase_time_s
            if need > 0:
                worst = max(worst, abs(sent - need) / need)
            elif sent != 0:
                worst = math.inf
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and elapsed < 1.0
    verdict(2, ok, f"max rel error {worst:.2e} (<= 1e-9), {elapsed:.2f} s (< 1 s)")
    assert ok


def test_3_block_convexity(verdict):
    rng = np.random.default_rng(3)
    settings = SolveSettings()
    solved = []
    for seed in range(100):
        inst = small_instance(seed)
        try:
            x0 = initialize(inst, settings)
        except InfeasibleProblemError:
            continue
        a = run_bcd(inst, x0, settings).allocation
        solved.append((inst, x0, (a.bs_powers, a.phase_times, a.offload_bits)))
        if len(solved) == 10:
            break
    # BCD solutions sit on active constraints, so sample on segments towards
    # the strictly feasible start and jitter a little
    points, tries = [], 0
    while len(points) < 1000 and tries < 20000:
        inst, x0, xs = solved[tries % len(solved)]
        tries += 1
        lam = rng.uniform(0.02, 1.0)
        q, t, d = (b + lam * (a - b) for a, b in zip(x0, xs))
        q = np.minimum(q * rng.uniform(0.99, 1.01, size=q.size), inst.bs_power_cap)
        t = t * rng.uniform(0.99, 1.01, size=t.size)
        d = np.clip(d * rng.uniform(0.99, 1.01, size=d.size), inst.min_offload, inst.bits)
        if scaled_violation(q, t, d, inst)[0] < 0:
            points.append((inst, q, t, d))
    assert len(points) == 1000, f"only {len(points)} feasible sample points"
    start = time.perf_counter()
    worst_eig, worst_fd = math.inf, 0.0
    for inst, q, t, d in points:
        blocks = (build_q_subproblem(q, t, d, inst), build_t_subproblem(q, t, d, inst),
                  build_t_subproblem(q, t, d, inst, soft_power=True), build_d_subproblem(q, t, d, inst))
        for block in blocks:
            for h in hessians(block.problem, block.x0):
                h = 0.5 * (h + h.T)
                tr = float(np.trace(h))
                worst_eig = min(worst_eig, float(np.linalg.eigvalsh(h)[0]) + 1e-8 * abs(tr))
            worst_fd = max(worst_fd, check_derivatives(block.problem, block.x0))
    elapsed = time.perf_counter() - start
    ok = worst_eig >= 0 and worst_fd <= 1e-4 and elapsed < 10.0
    verdict(3, ok, f"min(lambda_min + 1e-8 tr) {worst_eig:.2e} (>= 0), derivative mismatch {worst_fd:.2e} "
                   f"(<= 1e-4), {elapsed:.1f} s (< 10 s) over {len(points)} points")
    assert ok


def test_4_monotone_descent_at_full_scale(verdict):
    cfg = SystemConfig()
    start = time.perf_counter()
    reports, skipped, seed = [], 0, 0
    while len(reports) < 100:
        users, part = generate_scenario(ScenarioSpec(rng_seed=seed), cfg)
        seed += 1
        rep = solve(users, part, cfg)
        if rep.status == STATUS_INFEASIBLE:
            skipped += 1
            continue
        reports.append(rep)
    elapsed = time.perf_counter() - start
    monotone = all(b <= a + 1e-9 for rep in reports for a, b in zip(rep.trace, rep.trace[1:]))
    fast = sum(rep.status == STATUS_CONVERGED and rep.outer_iterations <= 10 for rep in reports)
    iters = np.array([rep.outer_iterations for rep in reports])
    ok = monotone and fast >= 95 and elapsed < 300
    verdict(4, ok, f"monotone {monotone}, converged in <= 10 rounds {fast}/100 (>= 95), median rounds "
                   f"{np.median(iters):.0f}, max {iters.max()}, {skipped} infeasible draws skipped, "
                   f"{elapsed:.0f} s (< 300 s)")
    assert ok


def test_5_oracle_equivalence(verdict):
    rng = np.random.default_rng(5)
    start = time.perf_counter()
    worst_above, worst_gap, strict = -math.inf, 0.0, 0
    n = 0
    while n < 20:
        users, part, cfg = two_phase_toy(rng)
        rep = solve(users, part, cfg)
        # q0 is pinned to 0 and the passive user offloads nothing, leaving
        # (q1, t0, t1, d0): the total decision dimension is 4
        grid = GridSpec({"q1": (0, cfg.bs_max_power_w, 21), "t0": (0, cfg.slot_duration_s, 21),
                         "t1": (0, cfg.slot_duration_s, 21), "d0": (0, users[0].task_bits, 21)},
                        {"q0": 0.0, "d1": 0.0})
        best = zoom_minimize(users, part, cfg, grid, levels=7)
        if not best.feasible and rep.status == STATUS_INFEASIBLE:
            continue
        n += 1
        if rep.status == STATUS_INFEASIBLE:
            worst_above = math.inf
            continue
        # discretization slack: 1e-3 of the objective
        worst_above = max(worst_above, (rep.objective - best.objective) / abs(best.objective))
        # the 1% band is required at strictly feasible oracle points; the
        # best grid point usually sits on an active constraint, so apply it
        # to every instance
        strict += best.min_slack > 0
        worst_gap = max(worst_gap, abs(rep.objective - best.objective) / abs(best.objective))
    elapsed = time.perf_counter() - start
    ok = worst_above <= 1e-3 and worst_gap <= 1e-2 and elapsed < 120
    verdict(5, ok, f"max (BCD - oracle)/oracle {worst_above:.2e} (<= 1e-3), max |gap| over all 20 "
                   f"({strict} with a strictly feasible oracle point) {worst_gap:.2e} (<= 1e-2), "
                   f"{elapsed:.0f} s (< 120 s)")
    assert ok


def _paired_means(spec, outcomes, groups):
    """Mean energy per configuration over seeds solved by every configuration."""
    energy = {}
    for o in outcomes:
        if o.status != STATUS_INFEASIBLE:
            energy[(o.task.value, o.task.scheme, o.task.seed)] = o.row["total_energy_j"]
    seeds = range(spec.first_seed, spec.first_seed + spec.seeds)
    paired = [s for s in seeds if all((v, sc, s) in energy for v, sc in groups)]
    means = {g: float(np.mean([energy[(*g, s)] for s in paired])) if paired else math.nan for g in groups}
    return means, len(paired)


def test_6_energy_falls_with_slot_duration(verdict):
    grid = [0.05, 0.1, 0.2, 0.3, 0.5]
    spec = ExperimentSpec("sweep_T", grid, seeds=50, schemes=("proposed", "noma_hd", "oma_fd"))
    start = time.perf_counter()
    outcomes = run_tasks(spec)
    elapsed = time.perf_counter() - start
    groups = [(v, s) for v in grid for s in spec.schemes]
    means, n = _paired_means(spec, outcomes, groups)
    prop = [means[(v, "proposed")] for v in grid]
    falling = all(b < a for a, b in zip(prop, prop[1:]))
    ordered = all(means[(v, "proposed")] <= means[(v, s)] for v in grid for s in ("noma_hd", "oma_fd"))
    ok = falling and ordered and n > 0 and elapsed < 900
    table = "; ".join(f"T={v}: " + ", ".join(f"{s} {means[(v, s)]:.9g}" for s in spec.schemes) for v in grid)
    verdict(6, ok, f"strictly decreasing {falling}, proposed lowest {ordered}, {n} paired seeds, "
                   f"{elapsed:.0f} s (< 900 s); {table}")
    assert ok


def test_7_energy_flattens_with_edge_capacity(verdict):
    grid = [1e9, 2e9, 4e9, 6e9, 8e9, 10e9]
    spec = ExperimentSpec("sweep_F", grid, seeds=50)
    start = time.perf_counter()
    outcomes = run_tasks(spec)
    elapsed = time.perf_counter() - start
    # a small edge cannot absorb the bits users are forced to offload, and
    # feasible sets grow with F, so pair over the values where anything solves
    solvable = sorted({o.task.value for o in outcomes if o.status != STATUS_INFEASIBLE})
    dropped = [v for v in grid if v not in solvable]
    means, n = _paired_means(spec, outcomes, [(v, "proposed") for v in solvable])
    m = [means[(v, "proposed")] for v in solvable]
    nonincreasing = all(b <= a for a, b in zip(m, m[1:]))
    flat = len(m) >= 2 and abs(m[-1] - m[-2]) <= 0.01 * abs(m[-2])
    ok = nonincreasing and flat and n > 0 and elapsed < 900
    verdict(7, ok, f"nonincreasing {nonincreasing}, last step within 1% {flat}, {n} paired seeds, "
                   f"infeasible for every seed at F = {dropped}, {elapsed:.0f} s (< 900 s); means "
                   + ", ".join(f"F={v:.0e}: {x:.9g}" for v, x in zip(solvable, m)))
    assert ok


def test_8_sm_pairing_is_best(verdict):
    grid = ["SM", "SW", "SS"]
    spec = ExperimentSpec("pairing", grid, seeds=50)
    start = time.perf_counter()
    outcomes = run_tasks(spec)
    elapsed = time.perf_counter() - start
    means, n = _paired_means(spec, outcomes, [(v, "proposed") for v in grid])
    m = {v: means[(v, "proposed")] for v in grid}
    ok = m["SM"] <= m["SW"] and m["SM"] <= m["SS"] and n > 0 and elapsed < 600
    verdict(8, ok, f"{n} paired seeds, {elapsed:.0f} s (< 600 s); means "
                   + ", ".join(f"{v} {m[v]:.9g}" for v in grid))
    assert ok


def test_9_cubic_iteration_cost(verdict):
    sizes = [4, 8, 16, 32]
    cfg = SystemConfig()
    settings = SolveSettings()
    start = time.perf_counter()
    per_iter = []
    for m in sizes:
        samples, seed = [], 0
        while len(samples) < 3:
            users, part = generate_scenario(ScenarioSpec(user_count=m, rng_seed=seed), cfg)
            seed += 1
            inst = Instance(users, part, cfg)
            try:
                x0 = initialize(inst, settings)
            except Exception:
                continue
            tic = time.perf_counter()
            rep = run_bcd(inst, x0, settings)
            samples.append((time.perf_counter() - tic) / rep.outer_iterations)
        per_iter.append(float(np.median(samples)))
    elapsed = time.perf_counter() - start
    per_iter = np.array(per_iter)
    bound = 2 * per_iter[0] * (np.array(sizes) / sizes[0]) ** 3
    slope = float(np.polyfit(np.log(sizes), np.log(per_iter), 1)[0])
    ok = bool(np.all(per_iter <= bound)) and slope <= 3 and elapsed < 600
    verdict(9, ok, f"per-round seconds " + ", ".join(f"M={m}: {x:.3g}" for m, x in zip(sizes, per_iter))
               + f"; log-log slope {slope:.2f} (<= 3), all within 2x of the cubic bound "
                 f"{bool(np.all(per_iter <= bound))}, {elapsed:.0f} s (< 600 s)")
    assert ok
