"""Small dense convex QP with linear inequality constraints.

    minimize    0.5 x'Hx + g'x
    subject to  Cx <= d

Primal active-set method with Bland-style lowest-index pivoting. A feasible
start is found by an LP that minimizes the summed constraint violation.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog


class InfeasibleError(Exception):
    def __init__(self, x, violation):
        super().__init__(f"constraints infeasible (least total violation {violation:.3e})")
        self.x = x
        self.violation = violation


@dataclass
class QPResult:
    x: np.ndarray
    active: tuple
    multipliers: np.ndarray
    iterations: int
    objective: float


def least_violation_point(C, d, tol=1e-10):
    """Return (x, violation) minimizing sum(max(Cx - d, 0))."""
    m, n = C.shape
    if n == 0:
        return np.zeros(0), float(np.maximum(-d, 0).sum())
    cost = np.concatenate([np.zeros(n), np.ones(m)])
    A_ub = np.hstack([C, -np.eye(m)])
    bounds = [(None, None)] * n + [(0, None)] * m
    res = linprog(cost, A_ub=A_ub, b_ub=d, bounds=bounds, method="highs")
    if res.status != 0:
        raise RuntimeError(f"phase-1 LP failed: {res.message}")
    x = res.x[:n]
    return x, float(np.maximum(C @ x - d, 0).sum())


def _nullspace(M, n):
    if M.shape[0] == 0:
        return np.eye(n)
    _, s, vt = np.linalg.svd(M)
    rank = int(np.sum(s > 1e-12 * max(s[0], 1.0)))
    return vt[rank:].T


def active_set_qp(H, g, C, d, x0=None, tol=1e-10, max_iter=500):
    H, g, C, d = (np.asarray(a, dtype=float) for a in (H, g, C, d))
    n = H.shape[0]
    if n == 0:
        return QPResult(np.zeros(0), (), np.zeros(0), 0, 0.0)

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    scale = 1.0 + np.abs(d)
    if np.any(C @ x - d > tol * scale):
        x, violation = least_violation_point(C, d)
        if violation > 1e-9 * (1.0 + np.abs(d).max()):
            raise InfeasibleError(x, violation)

    working = []
    mu = np.zeros(0)
    # after an unblocked full step x already minimizes over the working
    # subspace; recomputing p there would only return round-off noise
    settled = False
    for it in range(1, max_iter + 1):
        grad = H @ x + g
        p = np.zeros(n)
        if not settled:
            Z = _nullspace(C[working], n)
            if Z.shape[1]:
                p = Z @ np.linalg.solve(Z.T @ H @ Z, -Z.T @ grad)

        if settled or np.linalg.norm(p) <= tol * (1.0 + np.linalg.norm(x)):
            settled = False
            if not working:
                return QPResult(x, (), np.zeros(0), it, _objective(H, g, x))
            Cw = C[working]
            mu = np.linalg.lstsq(Cw.T, -(grad + H @ p), rcond=None)[0]
            negative = [(working[j], j) for j in range(len(working)) if mu[j] < -tol]
            if not negative:
                order = np.argsort(working)
                return QPResult(x, tuple(np.asarray(working)[order]), mu[order], it,
                                _objective(H, g, x))
            # drop the lowest-index constraint with a negative multiplier
            working.pop(min(negative)[1])
            continue

        step, blocking = 1.0, None
        Cp = C @ p
        slack = d - C @ x
        for i in range(C.shape[0]):
            if i in working or Cp[i] <= tol:
                continue
            a = max(slack[i], 0.0) / Cp[i]
            if a < step - 1e-15:
                step, blocking = a, i
        x = x + step * p
        if blocking is not None:
            working.append(blocking)
        else:
            settled = True
    raise RuntimeError(f"active-set QP did not converge in {max_iter} iterations")


def _objective(H, g, x):
    return float(0.5 * x @ H @ x + g @ x)
