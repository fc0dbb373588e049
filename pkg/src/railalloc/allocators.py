"""Baseline allocators and independent optimality oracles."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import (BracketError, InvalidArgumentError, MaxIterationsError,
                     TooLargeInstanceError, ZeroDistanceError)
from .geometry import Scenario
from .sqp import NlpProblem


@dataclass
class AllocatorResult:
    alpha: np.ndarray
    objective: float
    method: str
    wall_time: float
    iterations: int = 0
    mu: float | None = None


def pnou(scenario: Scenario) -> np.ndarray:
    """Bandwidth proportional to the number of associated users."""
    if scenario.n_users < 1:
        raise InvalidArgumentError("scenario has no users")
    counts = scenario.user_counts.astype(float)
    return counts / counts.sum()


def pd(scenario: Scenario) -> np.ndarray:
    """Bandwidth proportional to the inverse mean serving distance; empty devices get 0."""
    counts = scenario.user_counts
    sums = np.bincount(scenario.association, weights=scenario.serving_distances,
                       minlength=scenario.n_devices)
    weights = np.zeros(scenario.n_devices)
    has_users = counts > 0
    mean_d = sums[has_users] / counts[has_users]
    if np.any(mean_d == 0):
        raise ZeroDistanceError("a device has zero mean user distance")
    weights[has_users] = 1.0 / mean_d
    return weights / weights.sum()


def _result(problem: NlpProblem, x, method, t0, iterations=0, mu=None) -> AllocatorResult:
    x = np.asarray(x, dtype=float)
    return AllocatorResult(problem.expand(x), problem.objective(x), method,
                           time.perf_counter() - t0, iterations, mu)


def _barrier_center(problem: NlpProblem, y, tau, newton_tol=1e-12, max_newton=100):
    """Maximise phi_tau on the simplex for fixed tau, eliminating the last share.

    Returns the centre and the number of Newton steps taken.
    """
    n = problem.n
    scale = problem.scale

    def full(yy):
        return np.append(yy, 1.0 - yy.sum())

    def value(yy):
        a = full(yy)
        if np.any(a <= 0) or np.any(a >= 1):
            return -np.inf
        return problem.objective(a) / scale + tau * np.sum(np.log(a) + np.log1p(-a))

    steps = 0
    for _ in range(max_newton):
        a = full(y)
        g = problem.gradient(a) / scale + tau * (1.0 / a - 1.0 / (1.0 - a))
        h = problem.term_hessian(a) / scale - tau * (1.0 / a ** 2 + 1.0 / (1.0 - a) ** 2)
        # chain rule through a_last = 1 - sum(y)
        grad_y = g[:-1] - g[-1]
        hess_y = np.diag(h[:-1]) + h[-1]
        try:
            dy = np.linalg.solve(hess_y, -grad_y)
        except np.linalg.LinAlgError:
            dy = np.linalg.lstsq(hess_y, -grad_y, rcond=None)[0]
        decrement = float(grad_y @ dy)
        steps += 1
        if decrement / 2 <= newton_tol:
            break
        # keep the iterate strictly inside the box
        da = np.append(dy, -dy.sum())
        t = 1.0
        neg, pos = da < 0, da > 0
        if np.any(neg):
            t = min(t, 0.99 * float(np.min(-a[neg] / da[neg])))
        if np.any(pos):
            t = min(t, 0.99 * float(np.min((1.0 - a[pos]) / da[pos])))
        v0 = value(y)
        while value(y + t * dy) < v0 + 0.25 * t * float(grad_y @ dy):
            t *= 0.5
            if t < 1e-16:
                break
        y = y + t * dy
    return y, steps


def barrier_center(problem: NlpProblem, tau: float) -> np.ndarray:
    """Maximiser of the barrier-augmented objective for a single tau."""
    if problem.n == 1:
        return np.ones(1)
    y, _ = _barrier_center(problem, problem.uniform()[:-1], tau)
    return np.append(y, 1.0 - y.sum())


def ip_barrier(problem: NlpProblem, tol: float = 100.0, tau0: float = 1.0,
               shrink: float = 0.1, max_outer: int = 60) -> AllocatorResult:
    """Log-barrier interior-point maximisation of the capacity.

    The barrier ``-sum(ln a + ln(1 - a))`` keeps every share strictly inside
    (0, 1); tau shrinks geometrically until the duality-gap bound
    ``2 n tau`` (in bit/s) falls below ``tol``.
    """
    t0 = time.perf_counter()
    if problem.term_hessian is None:
        raise InvalidArgumentError("interior-point baseline needs the objective Hessian")
    n = problem.n
    if n == 1:
        return _result(problem, np.ones(1), "ip", t0)
    y = problem.uniform()[:-1]
    tau = tau0
    steps = 0
    for _ in range(max_outer):
        y, k = _barrier_center(problem, y, tau)
        steps += k
        if 2 * n * tau * problem.scale <= tol:
            return _result(problem, np.append(y, 1.0 - y.sum()), "ip", t0, steps)
        tau *= shrink
    raise MaxIterationsError("barrier parameter did not reach the tolerance",
                             _result(problem, np.append(y, 1.0 - y.sum()), "ip", t0, steps))


def _shares_for_multiplier(problem: NlpProblem, mu: float, lo_floor: float) -> np.ndarray:
    """Per-device share where the scaled marginal capacity equals ``mu``.

    Each coordinate is solved independently by Newton's method safeguarded with
    bisection; all coordinates advance together because the objective is separable.
    """
    n = problem.n
    scale = problem.scale
    lo = np.full(n, lo_floor)
    hi = np.ones(n)
    marg_lo = problem.gradient(lo) / scale
    marg_hi = problem.gradient(hi) / scale
    out = np.empty(n)
    at_lo = marg_lo <= mu
    at_hi = marg_hi >= mu
    out[at_lo] = lo_floor
    out[at_hi & ~at_lo] = 1.0
    todo = ~(at_lo | at_hi)
    if not np.any(todo):
        return out
    # evaluate the full vector but only track unresolved coordinates
    a = np.where(todo, 0.5 * (lo + hi), out)
    lo_b, hi_b = lo.copy(), hi.copy()
    for _ in range(200):
        r = problem.gradient(a) / scale - mu
        # marginal is decreasing: r > 0 means the root lies to the right
        lo_b = np.where(todo & (r > 0), a, lo_b)
        hi_b = np.where(todo & (r <= 0), a, hi_b)
        h = problem.term_hessian(a) / scale
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = a - r / h
        ok = np.isfinite(newton) & (newton > lo_b) & (newton < hi_b)
        a_new = np.where(ok, newton, 0.5 * (lo_b + hi_b))
        a_new = np.where(todo, a_new, a)
        if np.all(np.abs(a_new - a) <= 1e-15 * np.maximum(1.0, a)) or np.all(
                hi_b[todo] - lo_b[todo] <= 4e-16 * hi_b[todo]):
            a = a_new
            break
        a = a_new
    return a


def dual_oracle(problem: NlpProblem, tol: float = 1e-12) -> AllocatorResult:
    """Exact optimum by bisection on the simplex multiplier.

    Because the capacity is a sum of concave per-device terms, the optimum
    equalises every unsaturated device's marginal capacity at a common value mu;
    the returned ``mu`` is that value in the scaled units used by the solver.
    """
    t0 = time.perf_counter()
    n = problem.n
    if n == 1:
        return _result(problem, np.ones(1), "dual", t0, 0, problem.gradient(np.ones(1))[0] / problem.scale)
    floor = problem.alpha_floor
    scale = problem.scale
    mu_lo = float(np.min(problem.gradient(np.ones(n)) / scale))
    mu_hi = float(np.max(problem.gradient(np.full(n, floor)) / scale))
    if not mu_hi > mu_lo:
        raise BracketError("marginal capacities do not bracket the multiplier")
    if _shares_for_multiplier(problem, mu_lo, floor).sum() < 1.0 or \
            _shares_for_multiplier(problem, mu_hi, floor).sum() > 1.0:
        raise BracketError("multiplier bracket does not enclose the simplex")
    it = 0
    x = None
    for it in range(1, 400):
        mu = 0.5 * (mu_lo + mu_hi)
        x = _shares_for_multiplier(problem, mu, floor)
        excess = x.sum() - 1.0
        if abs(excess) <= tol:
            break
        if excess > 0:
            mu_lo = mu
        else:
            mu_hi = mu
        if mu_hi - mu_lo <= 2 * np.spacing(mu):
            break
    x = x / x.sum()
    return _result(problem, x, "dual", t0, it, mu)


def _lattice_terms(problem: NlpProblem, steps: int) -> np.ndarray:
    """Objective of each device alone at shares k/steps, k = 0..steps."""
    n = problem.n
    grid = np.arange(steps + 1) / steps
    terms = np.empty((n, steps + 1))
    base = problem.objective(np.zeros(n))
    for s in range(n):
        for k, a in enumerate(grid):
            x = np.zeros(n)
            x[s] = a
            terms[s, k] = problem.objective(x) - base
    return terms


def grid_oracle(problem: NlpProblem, step: float = 1e-3) -> AllocatorResult:
    """Exhaustive search over the simplex lattice with spacing ``step``.

    Ties resolve to the lexicographically smallest share vector.
    """
    t0 = time.perf_counter()
    n = problem.n
    if n > 4:
        raise TooLargeInstanceError("grid oracle supports at most 4 devices")
    if step < 1e-3 or step > 1:
        raise InvalidArgumentError("step must lie in [1e-3, 1]")
    N = int(round(1.0 / step))
    if abs(N * step - 1.0) > 1e-9:
        raise InvalidArgumentError("1/step must be an integer")
    terms = _lattice_terms(problem, N)
    if n == 1:
        best = (N,)
    elif n == 2:
        k = np.arange(N + 1)
        best_i = int(np.argmax(terms[0, k] + terms[1, N - k]))
        best = (best_i, N - best_i)
    else:
        best_val, best = -np.inf, None
        idx = np.arange(N + 1)
        for i in range(N + 1):
            rem = N - i
            if n == 3:
                j = idx[: rem + 1]
                vals = terms[0, i] + terms[1, j] + terms[2, rem - j]
                jj = int(np.argmax(vals))
                if vals[jj] > best_val:
                    best_val, best = vals[jj], (i, jj, rem - jj)
            else:
                j = idx[: rem + 1, None]
                k = idx[None, : rem + 1]
                last = rem - j - k
                vals = np.where(last >= 0,
                                terms[0, i] + terms[1, j] + terms[2, k] + terms[3, np.maximum(last, 0)],
                                -np.inf)
                flat = int(np.argmax(vals))
                jj, kk = divmod(flat, rem + 1)
                if vals[jj, kk] > best_val:
                    best_val, best = vals[jj, kk], (i, jj, kk, rem - jj - kk)
    x = np.array(best, dtype=float) / N
    return _result(problem, x, "grid", t0, 0)
