"""Sequential quadratic programming for the bandwidth-split problem.

The capacity is maximised on the simplex ``sum(a) = 1, 0 <= a <= 1``. Internally
the solver minimises ``phi(a) = -capacity(a) / scale`` so that multipliers and
KKT residuals are dimensionless and comparable across problem scalings. Each
bound is written as two inequalities ``g(a) <= 0`` in the order
``[a_0 - 1, -a_0, a_1 - 1, -a_1, ...]``.
"""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import DegenerateStepError, InvalidArgumentError, MaxIterationsError, NoDecreaseError
from .qp import QpSubproblem, solve_qp
from .radio import LinkBudget

ALPHA_FLOOR = 1e-12


@dataclass
class NlpProblem:
    """Capacity maximisation over the bandwidth shares of ``devices``.

    ``objective`` and ``gradient`` act on the reduced vector (one entry per
    device with users) and return bit/s. ``term_hessian`` is the diagonal of the
    objective Hessian, available because the objective is separable.
    """

    objective: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    n: int
    term_hessian: Callable[[np.ndarray], np.ndarray] | None = None
    devices: np.ndarray | None = None
    n_full: int | None = None
    scale: float = 1.0
    alpha_floor: float = ALPHA_FLOOR

    def __post_init__(self):
        if self.n < 1:
            raise InvalidArgumentError("problem needs at least one variable")
        if self.devices is None:
            self.devices = np.arange(self.n)
        if self.n_full is None:
            self.n_full = self.n
        if not self.scale > 0:
            raise InvalidArgumentError("scale must be positive")

    @property
    def n_inequalities(self) -> int:
        return 2 * self.n

    def phi(self, x) -> float:
        return -self.objective(x) / self.scale

    def grad_phi(self, x) -> np.ndarray:
        return -np.asarray(self.gradient(x), dtype=float) / self.scale

    def inequalities(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        g = np.empty(2 * self.n)
        g[0::2] = x - 1.0
        g[1::2] = -x
        return g

    def inequality_jacobian(self) -> np.ndarray:
        J = np.zeros((2 * self.n, self.n))
        idx = np.arange(self.n)
        J[2 * idx, idx] = 1.0
        J[2 * idx + 1, idx] = -1.0
        return J

    def expand(self, x) -> np.ndarray:
        full = np.zeros(self.n_full)
        full[self.devices] = x
        return full

    def uniform(self) -> np.ndarray:
        return np.full(self.n, 1.0 / self.n)


def capacity_problem(budget: LinkBudget, alpha_floor: float = ALPHA_FLOOR) -> NlpProblem:
    """Reduce a link budget to the devices that serve users."""
    devices = np.flatnonzero(budget.active)
    if devices.size == 0:
        raise InvalidArgumentError("scenario has no users")
    n_full = budget.n_devices

    def full(x):
        a = np.zeros(n_full)
        a[devices] = x
        return a

    problem = NlpProblem(objective=lambda x: budget.capacity(full(x)),
                         gradient=lambda x: budget.gradient(full(x))[devices],
                         term_hessian=lambda x: budget.hessian_diag(full(x))[devices],
                         n=devices.size, devices=devices, n_full=n_full,
                         alpha_floor=alpha_floor)
    problem.scale = max(1.0, abs(problem.objective(problem.uniform())))
    return problem


@dataclass
class KktResiduals:
    stationarity: float
    primal_eq: float
    primal_ineq: float
    complementarity: float
    dual_feasibility: float

    @property
    def max(self) -> float:
        return max(self.stationarity, self.primal_eq, self.primal_ineq,
                   self.complementarity, self.dual_feasibility)

    def certified(self, sigma_kkt: float = 1e-6) -> bool:
        return self.max <= sigma_kkt


@dataclass
class KktPoint:
    alpha: np.ndarray
    mu: float
    gamma: np.ndarray
    residuals: KktResiduals | None = None


def lagrangian_gradient(problem: NlpProblem, x, mu: float, gamma) -> np.ndarray:
    return problem.grad_phi(x) + mu * np.ones(problem.n) + problem.inequality_jacobian().T @ gamma


def kkt_residuals(problem: NlpProblem, point: KktPoint) -> KktResiduals:
    """Infinity-norm residual of each group of the first-order conditions."""
    x = np.asarray(point.alpha, dtype=float)
    gamma = np.asarray(point.gamma, dtype=float)
    if x.shape != (problem.n,) or gamma.shape != (problem.n_inequalities,):
        raise InvalidArgumentError("KKT point dimensions do not match the problem")
    g = problem.inequalities(x)
    return KktResiduals(
        stationarity=float(np.abs(lagrangian_gradient(problem, x, point.mu, gamma)).max()),
        primal_eq=abs(float(x.sum()) - 1.0),
        primal_ineq=float(max(0.0, g.max())),
        complementarity=float(np.abs(gamma * g).max()),
        dual_feasibility=float(max(0.0, -gamma.min())),
    )


def multipliers_for(problem: NlpProblem, x, mu: float) -> np.ndarray:
    """Bound multipliers that close stationarity for a given equality multiplier."""
    r = problem.grad_phi(x) + mu
    gamma = np.zeros(problem.n_inequalities)
    gamma[0::2] = np.maximum(-r, 0.0)  # upper bound active
    gamma[1::2] = np.maximum(r, 0.0)   # lower bound active
    return gamma


def bfgs_update(H, S, q) -> np.ndarray:
    """Damped BFGS update of the Lagrangian Hessian approximation.

    When ``q'S < 0.2 S'HS`` the secant vector is blended with ``HS`` (Powell
    damping) so that the result stays positive definite.
    """
    H = np.asarray(H, dtype=float)
    S = np.asarray(S, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.linalg.norm(S) <= 1e-14:
        raise DegenerateStepError("BFGS step is numerically zero")
    HS = H @ S
    sHs = float(S @ HS)
    qs = float(q @ S)
    if qs < 0.2 * sHs:
        theta = 0.8 * sHs / (sHs - qs)
        q = theta * q + (1.0 - theta) * HS
        qs = float(q @ S)
    H_new = H + np.outer(q, q) / qs - np.outer(HS, HS) / sHs
    return 0.5 * (H_new + H_new.T)


@dataclass
class LineSearchResult:
    t: float
    evaluations: int
    merit: float


def merit_line_search(merit: Callable[[np.ndarray], float], x_k, direction, eps2: float = 1e-8,
                      slope: Callable[[np.ndarray], float] | None = None) -> LineSearchResult:
    """Minimise ``merit(x_k + t*direction)`` over t in (0, 1] by bisection on its slope.

    ``slope(x)`` must return the directional derivative along ``direction`` at x;
    without it a central difference of width ``eps2/4`` is used.
    """
    x_k = np.asarray(x_k, dtype=float)
    d = np.asarray(direction, dtype=float)
    if not np.linalg.norm(d) > 0:
        raise NoDecreaseError("zero-length search direction")
    evals = 0

    def value(t):
        nonlocal evals
        evals += 1
        return merit(x_k + t * d)

    def dval(t):
        nonlocal evals
        if slope is not None:
            evals += 1
            return slope(x_k + t * d)
        h = eps2 / 4
        lo, hi = max(0.0, t - h), min(1.0, t + h)
        return (value(hi) - value(lo)) / (hi - lo)

    m0 = value(0.0)
    d0 = dval(0.0)
    flat = eps2 * abs(d0)
    d1 = dval(1.0)
    if d1 <= flat:
        t = 1.0
    else:
        lo, hi = 0.0, 1.0
        while hi - lo > eps2:
            mid = 0.5 * (lo + hi)
            dm = dval(mid)
            if abs(dm) <= flat:
                lo = hi = mid
                break
            if dm > 0:
                hi = mid
            else:
                lo = mid
        t = 0.5 * (lo + hi)
    mt = value(t)
    while not mt <= m0 - 1e-14:
        t *= 0.5
        if t < 1e-12:
            raise NoDecreaseError("no step along the direction decreases the merit")
        mt = value(t)
    return LineSearchResult(t, evals, mt)


@dataclass
class SolverConfig:
    sigma: float = 1e-9
    sigma_kkt: float = 1e-6
    eps1: float = 1e-9
    eps2: float = 1e-8
    max_iters: int = 200
    alpha_floor: float = ALPHA_FLOOR
    start: np.ndarray | None = None
    record_hessians: bool = False

    def __post_init__(self):
        for name in ("sigma", "sigma_kkt", "eps1", "eps2", "alpha_floor"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"{name} must be positive")
        if self.max_iters < 1:
            raise InvalidArgumentError("max_iters must be >= 1")


@dataclass
class TraceRow:
    iteration: int
    objective_bps: float
    step_norm: float
    kkt_residual: float
    linesearch_evals: int
    elapsed_s: float
    merit: float


@dataclass
class SolverState:
    x: np.ndarray
    H: np.ndarray
    S: np.ndarray | None = None
    q: np.ndarray | None = None
    iteration: int = 0
    trace: list[TraceRow] = field(default_factory=list)


@dataclass
class SolverReport:
    alpha: np.ndarray
    x: np.ndarray
    objective_bps: float
    kkt: KktPoint
    iterations: int
    trace: list[TraceRow]
    wall_time: float
    certified: bool
    message: str = ""
    qp_regularizations: int = 0
    hessians: list[np.ndarray] = field(default_factory=list)


def _start_point(problem: NlpProblem, config: SolverConfig) -> np.ndarray:
    x = problem.uniform() if config.start is None else np.asarray(config.start, dtype=float).copy()
    if x.shape != (problem.n,):
        raise InvalidArgumentError("start vector has the wrong length")
    x = np.clip(x, config.alpha_floor, 1.0)
    return x / x.sum()


def solve_sqp(problem: NlpProblem, config: SolverConfig | None = None) -> SolverReport:
    """Maximise the capacity with an SQP loop.

    Every iteration builds the QP model at the current point (BFGS Hessian,
    objective gradient, linearised bounds and simplex equality), searches along
    its solution with the merit function and corrects the Hessian from the
    Lagrangian-gradient difference. Iteration stops once the QP step, its
    predicted objective change and the KKT residual are all below tolerance.
    """
    config = config or SolverConfig()
    t_start = time.perf_counter()
    n = problem.n
    floor = config.alpha_floor
    x = _start_point(problem, config)
    grad = problem.grad_phi(x)
    state = SolverState(x=x, H=np.eye(n) * max(1.0, float(np.linalg.norm(grad))))
    A = np.vstack([np.eye(n), -np.eye(n)])
    ones = np.ones((1, n))
    rho = 1.0
    active = None
    regularizations = 0
    hessians = [state.H.copy()] if config.record_hessians else []

    def merit_fn(z):
        g = problem.inequalities(z)
        return problem.phi(z) + rho * (abs(z.sum() - 1.0) + np.maximum(g, 0.0).sum())

    def report(kkt_point, certified, message):
        xs = state.x
        return SolverReport(alpha=problem.expand(xs), x=xs.copy(),
                            objective_bps=problem.objective(xs), kkt=kkt_point,
                            iterations=state.iteration, trace=state.trace,
                            wall_time=time.perf_counter() - t_start, certified=certified,
                            message=message, qp_regularizations=regularizations,
                            hessians=hessians)

    kkt_point = None
    for k in range(config.max_iters + 1):
        x = state.x
        phi = problem.phi(x)
        qp = QpSubproblem(state.H, grad, A, np.concatenate([1.0 - x, x - floor]),
                          ones, np.array([1.0 - x.sum()]))
        sol = solve_qp(qp, start=np.zeros(n), active=active, eps1=config.eps1)
        regularizations += int(sol.regularized)
        active = sol.active_set
        d = sol.s_star
        mu = float(sol.eq_multipliers[0])
        # QP rows are [upper bounds; lower bounds]; KKT ordering interleaves them
        gamma = np.empty(2 * n)
        gamma[0::2] = sol.ineq_multipliers[:n]
        gamma[1::2] = sol.ineq_multipliers[n:]
        kkt_point = KktPoint(x.copy(), mu, gamma)
        kkt_point.residuals = kkt_residuals(problem, kkt_point)
        step_norm = float(np.linalg.norm(d))
        predicted = abs(sol.objective)
        rho = max(rho, 2.0 * max(abs(mu), float(gamma.max(initial=0.0))))
        state.trace.append(TraceRow(k, problem.objective(x), step_norm,
                                    kkt_point.residuals.max, 0,
                                    time.perf_counter() - t_start, merit_fn(x)))
        state.iteration = k
        if (step_norm <= config.sigma and predicted <= config.sigma * max(1.0, abs(phi))
                and kkt_point.residuals.certified(config.sigma_kkt)):
            return report(kkt_point, True, "converged")
        if k == config.max_iters:
            break
        try:
            ls = merit_line_search(merit_fn, x, d, config.eps2,
                                   slope=lambda z: float(problem.grad_phi(np.clip(z, floor, 1.0)) @ d))
        except NoDecreaseError:
            certified = kkt_point.residuals.certified(config.sigma_kkt)
            return report(kkt_point, certified,
                          "converged (no further merit decrease)" if certified
                          else "stalled: no merit decrease")
        state.trace[-1].linesearch_evals = ls.evaluations
        x_new = np.clip(x + ls.t * d, floor, 1.0)
        grad_new = problem.grad_phi(x_new)
        state.S = x_new - x
        state.q = (lagrangian_gradient(problem, x_new, mu, gamma)
                   - lagrangian_gradient(problem, x, mu, gamma))
        try:
            state.H = bfgs_update(state.H, state.S, state.q)
        except DegenerateStepError:
            pass
        if config.record_hessians:
            hessians.append(state.H.copy())
        state.x, grad = x_new, grad_new
    result = report(kkt_point, False, "max-iterations")
    raise MaxIterationsError(f"SQP did not converge in {config.max_iters} iterations", result)


TRACE_HEADER = ["iter", "objective_bps", "step_norm", "kkt_residual", "linesearch_evals",
                "elapsed_s"]


def write_trace_csv(report: SolverReport, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_HEADER)
        for r in report.trace:
            w.writerow([r.iteration, f"{r.objective_bps:.15g}", f"{r.step_norm:.15g}",
                        f"{r.kkt_residual:.15g}", r.linesearch_evals, f"{r.elapsed_s:.6f}"])
