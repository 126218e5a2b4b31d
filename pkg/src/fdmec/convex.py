"""Dense log-barrier interior-point machinery for small smooth convex problems.

A problem is ``min f(x)`` subject to bounds ``lb < x < ub``, linear rows
``A x < b`` and smooth convex constraints ``g_k(x) < 0``. Evaluators take
``(x, order)`` and return derivatives up to ``order``:

* ``objective(x, 0) -> f``; ``objective(x, 1) -> (f, grad)``;
  ``objective(x, 2) -> (f, grad, hess)``
* ``constraints(x, 0) -> g``; ``constraints(x, 1) -> (g, jac)``;
  ``constraints(x, 2) -> (g, jac, weighted_hess)`` where
  ``weighted_hess(w)`` returns ``sum_k w_k * hess g_k(x)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import ConvexityError, NumericalError


@dataclass
class SmoothProblem:
    n: int
    objective: Callable
    constraints: Callable | None = None
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    labels: list | None = None        # family name per nonlinear constraint, then per row of A

    def __post_init__(self):
        if self.A is not None:
            self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
            self.b = np.asarray(self.b, dtype=float).reshape(-1)
            if self.A.shape != (self.b.size, self.n):
                raise ValueError("A must be (len(b), n)")
        self.lb = np.full(self.n, -np.inf) if self.lb is None else np.asarray(self.lb, dtype=float)
        self.ub = np.full(self.n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float)
        if np.any(self.lb >= self.ub):
            raise ValueError("bounds must satisfy lb < ub")

    @property
    def n_rows(self) -> int:
        return 0 if self.A is None else self.A.shape[0]

    def nonlinear(self, x, order=0):
        if self.constraints is None:
            empty = np.zeros(0)
            if order == 0:
                return empty
            if order == 1:
                return empty, np.zeros((0, self.n))
            return empty, np.zeros((0, self.n)), lambda w: np.zeros((self.n, self.n))
        return self.constraints(x, order)

    def slacks(self, x):
        """All constraint slacks at x (positive = strictly satisfied)."""
        parts = [-np.asarray(self.nonlinear(x, 0), dtype=float)]
        if self.A is not None:
            parts.append(self.b - self.A @ x)
        lo = np.isfinite(self.lb)
        hi = np.isfinite(self.ub)
        parts.append(x[lo] - self.lb[lo])
        parts.append(self.ub[hi] - x[hi])
        return np.concatenate(parts)

    def n_inequalities(self, x) -> int:
        return int(self.slacks(x).size)

    def strictly_feasible(self, x) -> bool:
        s = self.slacks(x)
        return bool(np.all(np.isfinite(s)) and np.all(s > 0))


@dataclass
class BarrierSettings:
    initial_barrier_weight: float | None = None   # None: chosen from the start point
    barrier_growth: float = 10.0
    newton_tol: float = 1e-8
    max_newton_steps: int = 50
    alpha: float = 0.25
    beta: float = 0.5
    duality_gap_tol: float = 1e-8
    max_outer: int = 60

    def __post_init__(self):
        if not 0 < self.alpha < 0.5:
            raise ValueError("alpha must lie in (0, 0.5)")
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        if not self.barrier_growth > 1:
            raise ValueError("barrier_growth must exceed 1")


@dataclass
class BarrierResult:
    x: np.ndarray
    value: float
    iterations: int
    outer_iterations: int
    gap: float
    history: list = field(default_factory=list)
    stopped_early: bool = False


class _Barrier:
    """Evaluates mu * f(x) - sum log(slack) and its derivatives."""

    def __init__(self, problem: SmoothProblem):
        self.p = problem
        self.lo = np.isfinite(problem.lb)
        self.hi = np.isfinite(problem.ub)

    def linear_slacks(self, x):
        p = self.p
        rows = p.b - p.A @ x if p.A is not None else np.zeros(0)
        return rows, x[self.lo] - p.lb[self.lo], p.ub[self.hi] - x[self.hi]

    def max_linear_step(self, x, dx):
        """Largest step keeping bounds and linear rows strictly satisfied."""
        p = self.p
        step = np.inf
        rows, low, high = self.linear_slacks(x)
        if p.A is not None:
            rate = p.A @ dx
            pos = rate > 0
            if np.any(pos):
                step = min(step, np.min(rows[pos] / rate[pos]))
        d_lo = dx[self.lo]
        neg = d_lo < 0
        if np.any(neg):
            with np.errstate(over="ignore", divide="ignore"):
                step = min(step, np.min(low[neg] / -d_lo[neg]))
        d_hi = dx[self.hi]
        pos = d_hi > 0
        if np.any(pos):
            with np.errstate(over="ignore", divide="ignore"):
                step = min(step, np.min(high[pos] / d_hi[pos]))
        return step

    def value(self, x, mu):
        """Barrier value, or +inf outside the strict domain."""
        rows, low, high = self.linear_slacks(x)
        if (rows.size and rows.min() <= 0) or (low.size and low.min() <= 0) or (high.size and high.min() <= 0):
            return np.inf
        with np.errstate(all="ignore"):
            g = np.asarray(self.p.nonlinear(x, 0), dtype=float)
            if g.size and not (np.all(np.isfinite(g)) and g.max() < 0):
                return np.inf
            f = self.p.objective(x, 0)
        if not np.isfinite(f):
            return np.inf
        return mu * f - np.sum(np.log(-g)) - np.sum(np.log(rows)) - np.sum(np.log(low)) - np.sum(np.log(high))

    def derivatives(self, x, mu):
        p = self.p
        f, gf, hf = p.objective(x, 2)
        g, jac, whess = p.nonlinear(x, 2)
        rows, low, high = self.linear_slacks(x)
        if not (np.isfinite(f) and np.all(np.isfinite(gf)) and np.all(np.isfinite(hf))
                and np.all(np.isfinite(g)) and np.all(np.isfinite(jac))):
            raise NumericalError("non-finite evaluator output at an accepted point")
        inv = 1.0 / -g
        grad = mu * np.asarray(gf, dtype=float) + jac.T @ inv
        hess = mu * np.asarray(hf, dtype=float) + (jac.T * inv ** 2) @ jac
        if g.size:
            hess = hess + whess(inv)
        if rows.size:
            r = 1.0 / rows
            grad = grad + p.A.T @ r
            hess = hess + (p.A.T * r ** 2) @ p.A
        if low.size:
            r = 1.0 / low
            grad[self.lo] -= r
            hess[self.lo, self.lo] += r ** 2
        if high.size:
            r = 1.0 / high
            grad[self.hi] += r
            hess[self.hi, self.hi] += r ** 2
        val = mu * f - np.sum(np.log(-g)) - np.sum(np.log(rows)) - np.sum(np.log(low)) - np.sum(np.log(high))
        return val, grad, hess, f


def newton_direction(grad, hess):
    """Solve hess @ dx = -grad with Jacobi scaling and Cholesky."""
    hess = 0.5 * (hess + hess.T)
    diag = np.diag(hess).copy()
    if not np.all(np.isfinite(diag)):
        raise NumericalError("non-finite Hessian")
    scale = 1.0 / np.sqrt(np.where(diag > 0, diag, 1.0))
    scaled = hess * scale[:, None] * scale[None, :]
    rhs = -grad * scale
    try:
        factor = cho_factor(scaled, lower=True, check_finite=False)
    except LinAlgError:
        boost = 1e-12 * max(np.trace(scaled), 1.0)
        try:
            factor = cho_factor(scaled + boost * np.eye(len(grad)), lower=True, check_finite=False)
        except LinAlgError as exc:
            raise ConvexityError("Newton system is not positive definite") from exc
    dx = cho_solve(factor, rhs, check_finite=False) * scale
    if not np.all(np.isfinite(dx)):
        raise NumericalError("non-finite Newton step")
    return dx


def _initial_weight(barrier: _Barrier, x, m):
    """Pick mu so the start point is as close to centred as possible."""
    p = barrier.p
    f, gf, _ = p.objective(x, 2)
    _, g_bar, h_bar, _ = barrier.derivatives(x, 0.0)
    gf = np.asarray(gf, dtype=float)
    try:
        hinv_gf = np.linalg.solve(h_bar + 1e-300 * np.eye(len(x)), gf)
    except np.linalg.LinAlgError:
        hinv_gf = gf
    denom = float(gf @ hinv_gf)
    mu = -float(g_bar @ hinv_gf) / denom if denom > 0 else 0.0
    floor = m / max(abs(f), 1e-12)
    if not np.isfinite(mu) or mu < floor:
        mu = floor
    return mu


def minimize_barrier(problem: SmoothProblem, x0, settings: BarrierSettings | None = None,
                     early_stop: Callable | None = None) -> BarrierResult:
    """Log-barrier method with damped Newton centering.

    Returns the best of the start point and the final central point, so the
    objective never increases. ``early_stop(x)`` may end the run after any
    accepted Newton step.
    """
    settings = settings or BarrierSettings()
    x = np.array(x0, dtype=float)
    if not problem.strictly_feasible(x):
        raise ValueError("start point is not strictly feasible")
    f0 = float(problem.objective(x, 0))
    if not np.isfinite(f0):
        raise NumericalError("objective is not finite at the start point")
    barrier = _Barrier(problem)
    m = problem.n_inequalities(x)
    mu = settings.initial_barrier_weight
    if m == 0:
        mu = 1.0
    elif mu is None:
        mu = _initial_weight(barrier, x, m)
    total_steps = 0
    history = []
    outer = 0
    stopped = False
    while True:
        outer += 1
        for _ in range(settings.max_newton_steps):
            val, grad, hess, _ = barrier.derivatives(x, mu)
            dx = newton_direction(grad, hess)
            slope = float(grad @ dx)
            if slope > 0:
                raise ConvexityError("Newton direction is not a descent direction")
            if -slope / 2.0 <= settings.newton_tol:
                break
            step = min(1.0, 0.99 * barrier.max_linear_step(x, dx))
            while step > 1e-20:
                trial = barrier.value(x + step * dx, mu)
                if trial <= val + settings.alpha * step * slope:
                    break
                step *= settings.beta
            else:
                break
            x = x + step * dx
            total_steps += 1
            if early_stop is not None and early_stop(x):
                stopped = True
                break
        history.append(float(problem.objective(x, 0)))
        if stopped or m == 0 or m / mu <= settings.duality_gap_tol or outer >= settings.max_outer:
            break
        mu *= settings.barrier_growth
    value = float(problem.objective(x, 0))
    if not np.isfinite(value):
        raise NumericalError("objective is not finite at the solution")
    if value > f0 and not stopped:
        x, value = np.array(x0, dtype=float), f0
    gap = 0.0 if m == 0 else m / mu
    return BarrierResult(x, value, total_steps, outer, gap, history, stopped)


def solve_lp(c, A, b, lb=None, ub=None, x0=None, settings=None) -> BarrierResult:
    """min c @ x s.t. A x <= b, lb <= x <= ub from a strictly feasible x0."""
    c = np.asarray(c, dtype=float)

    def objective(x, order=0):
        f = float(c @ x)
        if order == 0:
            return f
        if order == 1:
            return f, c
        return f, c, np.zeros((c.size, c.size))

    problem = SmoothProblem(c.size, objective, A=A, b=b, lb=lb, ub=ub)
    if x0 is None:
        raise ValueError("solve_lp needs a strictly feasible start point")
    return minimize_barrier(problem, x0, settings)


@dataclass
class Phase1Result:
    x: np.ndarray
    max_violation: float
    feasible: bool
    worst_label: str | None = None


def _interior_of_bounds(problem: SmoothProblem, x, frac=1e-6):
    x = np.array(x, dtype=float)
    lb, ub = problem.lb, problem.ub
    width = np.where(np.isfinite(lb) & np.isfinite(ub), ub - lb, np.nan)
    pad = np.where(np.isfinite(width), frac * width, frac * np.maximum(np.abs(x), 1.0))
    lo_ok = np.isfinite(lb)
    hi_ok = np.isfinite(ub)
    x[lo_ok] = np.maximum(x[lo_ok], lb[lo_ok] + pad[lo_ok])
    x[hi_ok] = np.minimum(x[hi_ok], ub[hi_ok] - pad[hi_ok])
    return x


def _violations(problem: SmoothProblem, x):
    g = np.asarray(problem.nonlinear(x, 0), dtype=float)
    rows = problem.A @ x - problem.b if problem.A is not None else np.zeros(0)
    return np.concatenate([g, rows])


def phase1_feasible(problem: SmoothProblem, x_guess, settings: BarrierSettings | None = None,
                    margin: float = 1e-10) -> Phase1Result:
    """Find x with every general constraint strictly satisfied.

    Bounds are kept hard; nonlinear constraints and linear rows are relaxed
    by a common shift s and ``min s`` is solved with the barrier method,
    stopping as soon as ``s <= -margin``.
    """
    settings = settings or BarrierSettings()
    x = _interior_of_bounds(problem, x_guess)
    v = _violations(problem, x)
    labels = problem.labels or [None] * v.size
    if v.size == 0 or (np.all(np.isfinite(v)) and v.max() < 0):
        return Phase1Result(x, float(v.max()) if v.size else -np.inf, True)
    if not np.all(np.isfinite(v)):
        return Phase1Result(x, np.inf, False, labels[int(np.argmax(np.nan_to_num(v, nan=np.inf)))])
    n = problem.n
    n_nl = v.size - problem.n_rows

    def objective(z, order=0):
        f = z[-1]
        if order == 0:
            return f
        grad = np.zeros(n + 1)
        grad[-1] = 1.0
        if order == 1:
            return f, grad
        return f, grad, np.zeros((n + 1, n + 1))

    constraints = None
    if n_nl:
        def constraints(z, order=0):
            out = problem.nonlinear(z[:n], order)
            if order == 0:
                return out - z[-1]
            g, jac = out[0], out[1]
            jz = np.hstack([jac, -np.ones((g.size, 1))])
            if order == 1:
                return g - z[-1], jz

            def whess(w, inner=out[2]):
                h = np.zeros((n + 1, n + 1))
                h[:n, :n] = inner(w)
                return h
            return g - z[-1], jz, whess

    A = b = None
    if problem.A is not None:
        A = np.hstack([problem.A, -np.ones((problem.n_rows, 1))])
        b = problem.b
    s0 = float(v.max())
    start = np.append(x, s0 + max(1.0, abs(s0)) * 0.1 + 1e-12)
    aux = SmoothProblem(n + 1, objective, constraints, A, b,
                        np.append(problem.lb, -np.inf), np.append(problem.ub, np.inf))
    result = minimize_barrier(aux, start, settings, early_stop=lambda z: z[-1] <= -margin)
    xs = result.x[:n]
    v = _violations(problem, xs)
    worst = float(v.max())
    label = labels[int(np.argmax(v))]
    return Phase1Result(xs, worst, worst < -1e-10 and problem.strictly_feasible(xs), label)


def violation_penalty(problem: SmoothProblem, temperature: float) -> SmoothProblem:
    """Bounds-only problem minimising the soft maximum tau * log sum exp(g_k / tau).

    Every general constraint and linear row enters, so the problem is
    convex whenever the constraints are. Unlike the max-shift formulation
    it has no kink, which matters when it is minimised one block of
    variables at a time.
    """
    tau = float(temperature)

    def objective(x, order=0):
        out = problem.nonlinear(x, order)
        g = np.asarray(out if order == 0 else out[0], dtype=float)
        rows = problem.A @ x - problem.b if problem.A is not None else np.zeros(0)
        v = np.concatenate([g, rows]) / tau
        top = float(v.max())
        e = np.exp(v - top)
        total = float(e.sum())
        f = tau * (top + math.log(total))
        if order == 0:
            return f
        w = e / total
        jac = out[1]
        if problem.A is not None:
            jac = np.vstack([jac, problem.A])
        grad = jac.T @ w
        if order == 1:
            return f, grad
        # weighted covariance of the constraint gradients, centred so that
        # rounding cannot make it indefinite
        centred = jac - grad
        hess = (centred.T * w) @ centred / tau + out[2](w[:g.size])
        return f, grad, 0.5 * (hess + hess.T)

    return SmoothProblem(problem.n, objective, lb=problem.lb, ub=problem.ub)


def reduce_violation(problem: SmoothProblem, x_guess, temperature=0.02,
                     settings: BarrierSettings | None = None, margin: float = 1e-4) -> Phase1Result:
    """Lower every constraint violation with bounds kept hard.

    Stops as soon as all general constraints hold with ``margin``.
    """
    settings = settings or BarrierSettings()
    x = _interior_of_bounds(problem, x_guess)
    labels = problem.labels or [None] * _violations(problem, x).size
    v = _violations(problem, x)
    if v.size and np.all(np.isfinite(v)) and v.max() >= -margin:
        penalty = violation_penalty(problem, temperature)
        result = minimize_barrier(penalty, x, settings,
                                  early_stop=lambda z: _violations(problem, z).max() < -margin)
        x = result.x
        v = _violations(problem, x)
    if v.size == 0:
        return Phase1Result(x, -np.inf, True)
    worst = float(np.max(np.nan_to_num(v, nan=np.inf)))
    return Phase1Result(x, worst, worst < 0 and problem.strictly_feasible(x), labels[int(np.argmax(v))])


def _step_sizes(x, h):
    # relative steps: block variables live on very different scales
    return h * np.where(x != 0, np.abs(x), 1.0)


def check_derivatives(problem: SmoothProblem, x, h=1e-6) -> float:
    """Worst relative mismatch between analytic and central-difference derivatives.

    Gradients are compared with differences of values and Hessians with
    differences of analytic gradients, for the objective and each nonlinear
    constraint. The part of a mismatch that cancellation in the difference
    quotient can explain (a few ulps of the differenced values divided by
    the step) is not counted.
    """
    x = np.asarray(x, dtype=float)
    steps = _step_sizes(x, h)
    n = x.size
    eps = 64 * np.finfo(float).eps

    def rel(a, b, noise):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        excess = np.maximum(np.abs(a - b) - noise, 0.0)
        return float(np.max(excess) / max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-300))

    def central(fun, i):
        e = np.zeros(n)
        e[i] = steps[i]
        hi, lo = np.asarray(fun(x + e), dtype=float), np.asarray(fun(x - e), dtype=float)
        noise = eps * np.maximum(np.abs(hi), np.abs(lo)) / steps[i]
        return (hi - lo) / (2 * steps[i]), noise

    worst = 0.0
    f, gf, hf = problem.objective(x, 2)
    fd_g, ng = np.empty(n), np.empty(n)
    fd_h, nh = np.empty((n, n)), np.empty((n, n))
    for i in range(n):
        fd_g[i], ng[i] = central(lambda z: problem.objective(z, 0), i)
        fd_h[:, i], nh[:, i] = central(lambda z: problem.objective(z, 1)[1], i)
    if np.any(gf) or np.any(fd_g):
        worst = max(worst, rel(gf, fd_g, ng))
    if np.any(hf) or np.any(np.abs(fd_h) > 1e-12 * max(np.max(np.abs(gf)), 1e-300)):
        worst = max(worst, rel(hf, fd_h, nh))
    if problem.constraints is not None:
        g, jac, whess = problem.constraints(x, 2)
        m = g.size
        fd_j, nj = np.empty((m, n)), np.empty((m, n))
        fd_hk, nhk = np.empty((m, n, n)), np.empty((m, n, n))
        for i in range(n):
            fd_j[:, i], nj[:, i] = central(lambda z: problem.constraints(z, 0), i)
            fd_hk[:, :, i], nhk[:, :, i] = central(lambda z: problem.constraints(z, 1)[1], i)
        for k in range(m):
            w = np.zeros(m)
            w[k] = 1.0
            hk = whess(w)
            if np.any(jac[k]) or np.any(fd_j[k]):
                worst = max(worst, rel(jac[k], fd_j[k], nj[k]))
            if np.any(hk) or np.any(np.abs(fd_hk[k]) > 1e-12 * max(np.max(np.abs(jac[k])), 1e-300)):
                worst = max(worst, rel(hk, fd_hk[k], nhk[k]))
    return worst


def hessians(problem: SmoothProblem, x):
    """Objective Hessian followed by each nonlinear constraint Hessian."""
    _, _, hf = problem.objective(x, 2)
    out = [np.asarray(hf, dtype=float)]
    if problem.constraints is not None:
        g, _, whess = problem.constraints(x, 2)
        for k in range(g.size):
            w = np.zeros(g.size)
            w[k] = 1.0
            out.append(whess(w))
    return out


def min_relative_eigenvalue(hess) -> float:
    """Smallest eigenvalue divided by the trace (0 for a zero matrix)."""
    hess = 0.5 * (hess + hess.T)
    tr = float(np.trace(hess))
    lam = float(np.linalg.eigvalsh(hess)[0])
    return lam / tr if tr > 0 else lam
