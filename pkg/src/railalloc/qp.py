"""Dense primal active-set solver for strictly convex quadratic programs.

Solves ``min 0.5 s'Hs + C's  s.t.  A s <= B,  A_eq s = B_eq``. Multipliers
follow the convention ``H s + C + A' gamma + A_eq' mu = 0`` with gamma >= 0.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import InfeasibleProblemError, InvalidArgumentError, MaxIterationsError

FEAS_TOL = 1e-10


@dataclass
class QpSubproblem:
    H: np.ndarray
    C: np.ndarray
    A: np.ndarray | None = None
    B: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    B_eq: np.ndarray | None = None

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        self.C = np.asarray(self.C, dtype=float).reshape(-1)
        n = self.C.size
        if self.H.shape != (n, n):
            raise InvalidArgumentError("H must be n x n with n = len(C)")
        if not np.allclose(self.H, self.H.T, rtol=0, atol=1e-12 * max(1.0, np.abs(self.H).max())):
            raise InvalidArgumentError("H must be symmetric")
        self.A, self.B = self._rows(self.A, self.B, n, "A")
        self.A_eq, self.B_eq = self._rows(self.A_eq, self.B_eq, n, "A_eq")

    @staticmethod
    def _rows(M, b, n, name):
        if M is None:
            return np.zeros((0, n)), np.zeros(0)
        M = np.asarray(M, dtype=float).reshape(-1, n)
        b = np.asarray(b, dtype=float).reshape(-1)
        if M.shape[0] != b.size:
            raise InvalidArgumentError(f"{name} and its right-hand side disagree in length")
        return M, b

    @property
    def n(self) -> int:
        return self.C.size

    def objective(self, s) -> float:
        s = np.asarray(s, dtype=float)
        return float(0.5 * s @ self.H @ s + self.C @ s)

    def is_feasible(self, s, tol: float = 1e-8) -> bool:
        s = np.asarray(s, dtype=float)
        return bool(np.all(self.A @ s <= self.B + tol)
                    and np.all(np.abs(self.A_eq @ s - self.B_eq) <= tol))


@dataclass
class QpSolution:
    s_star: np.ndarray
    ineq_multipliers: np.ndarray
    eq_multipliers: np.ndarray
    active_set: frozenset[int]
    iterations: int = 0
    regularized: bool = False
    objective: float = field(default=float("nan"))


def find_feasible_point(qp: QpSubproblem) -> np.ndarray:
    """Phase-1: any point satisfying the linear constraints."""
    n = qp.n
    res = linprog(np.zeros(n),
                  A_ub=qp.A if qp.A.size else None, b_ub=qp.B if qp.A.size else None,
                  A_eq=qp.A_eq if qp.A_eq.size else None, b_eq=qp.B_eq if qp.A_eq.size else None,
                  bounds=[(None, None)] * n, method="highs")
    if res.status != 0:
        raise InfeasibleProblemError(f"phase-1 failed: {res.message}")
    return np.asarray(res.x, dtype=float)


def _factorizable_hessian(H: np.ndarray) -> tuple[np.ndarray, bool]:
    try:
        np.linalg.cholesky(H)
        return H, False
    except np.linalg.LinAlgError:
        pass
    eye = np.eye(H.shape[0])
    reg = 1e-10
    while reg < 1e6:
        try:
            np.linalg.cholesky(H + reg * eye)
            return H + reg * eye, True
        except np.linalg.LinAlgError:
            reg *= 100
    raise InvalidArgumentError("H cannot be regularized to positive definite")


def _independent(rows: np.ndarray, candidate: np.ndarray) -> bool:
    if rows.shape[0] == 0:
        return bool(np.linalg.norm(candidate) > 0)
    stacked = np.vstack([rows, candidate])
    return np.linalg.matrix_rank(stacked) > np.linalg.matrix_rank(rows)


def _eqp(H, g, M):
    """Step p and multipliers lam with H p + g + M' lam = 0, M p = 0."""
    n, k = H.shape[0], M.shape[0]
    if k == 0:
        return np.linalg.solve(H, -g), np.zeros(0)
    K = np.zeros((n + k, n + k))
    K[:n, :n] = H
    K[:n, n:] = M.T
    K[n:, :n] = M
    rhs = np.concatenate([-g, np.zeros(k)])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    return sol[:n], sol[n:]


def solve_qp(qp: QpSubproblem, start=None, active=None, eps1: float = 1e-9,
             max_iter: int | None = None) -> QpSolution:
    """Minimise a strictly convex QP by the primal active-set method.

    ``start`` must be feasible; when omitted (or infeasible) a phase-1 LP finds
    one. ``active`` warm-starts the working set with inequality indices.
    """
    H, regularized = _factorizable_hessian(qp.H)
    A, B, Aeq = qp.A, qp.B, qp.A_eq
    n, p, m = qp.n, A.shape[0], Aeq.shape[0]
    s = None if start is None else np.asarray(start, dtype=float).reshape(-1).copy()
    if s is None or not qp.is_feasible(s):
        s = find_feasible_point(qp)

    work: list[int] = []
    candidates = list(active) if active is not None else []
    candidates += [j for j in range(p) if abs(A[j] @ s - B[j]) <= FEAS_TOL * max(1.0, abs(B[j]))]
    for j in candidates:
        if j in work or abs(A[j] @ s - B[j]) > 1e-8 * max(1.0, abs(B[j])):
            continue
        if _independent(np.vstack([Aeq, A[work]]), A[j]):
            work.append(j)

    if max_iter is None:
        max_iter = 50 + 10 * (n + p)
    for it in range(1, max_iter + 1):
        g = H @ s + qp.C
        M = np.vstack([Aeq, A[work]]) if work else Aeq
        step, lam = _eqp(H, g, M)
        scale = max(1.0, float(np.abs(g).max(initial=0.0)), float(np.abs(qp.C).max(initial=0.0)))
        if np.linalg.norm(step, np.inf) <= 1e-13 * max(1.0, np.linalg.norm(s, np.inf)):
            gamma_w = lam[m:]
            if gamma_w.size == 0 or gamma_w.min() >= -eps1 * scale:
                gamma = np.zeros(p)
                gamma[work] = np.maximum(gamma_w, 0.0)
                return QpSolution(s, gamma, lam[:m].copy(), frozenset(work), it,
                                  regularized, qp.objective(s))
            work.pop(int(np.argmin(gamma_w)))
            continue
        t, blocking = 1.0, None
        Ap = A @ step
        for j in range(p):
            if j in work or Ap[j] <= 1e-15 * max(1.0, np.abs(A[j]).max()):
                continue
            ratio = max(0.0, (B[j] - A[j] @ s) / Ap[j])
            if ratio < t:
                t, blocking = ratio, j
        s = s + t * step
        if blocking is not None:
            work.append(blocking)
    best = QpSolution(s, np.zeros(p), np.zeros(m), frozenset(work), max_iter, regularized,
                      qp.objective(s))
    raise MaxIterationsError(f"active-set QP did not converge in {max_iter} iterations", best)
