"""Dense log-barrier interior-point solver for small smooth convex programs.

Solves

    minimize    f0(x)
    subject to  g(x) <= 0        (smooth convex blocks)
                lower < x < upper
                A x = b

from a strictly feasible start. Each barrier subproblem is centred with
Newton's method (backtracking line search) and the barrier weight is cut by
a constant factor until the duality-gap surrogate ``m * mu`` falls below
the tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

# value, gradient, Hessian
ObjectiveFn = Callable[[np.ndarray], tuple[float, np.ndarray, np.ndarray]]
# values (m,), Jacobian (m, n), Hessians (m, n, n) -- or None when affine
ConstraintFn = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray, np.ndarray | None]]

OPTIMAL = "optimal"
MAX_ITER = "max_iter"
INFEASIBLE_START = "infeasible_start"


@dataclass
class ConstraintBlock:
    fn: ConstraintFn
    names: Sequence[str]


@dataclass
class ConvexProgram:
    n_vars: int
    objective: ObjectiveFn
    constraints: list[ConstraintBlock] = field(default_factory=list)
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    var_names: Sequence[str] | None = None

    def __post_init__(self):
        n = self.n_vars
        self.lower = np.full(n, -np.inf) if self.lower is None else np.asarray(self.lower, float)
        self.upper = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, float)
        if self.A_eq is not None:
            self.A_eq = np.atleast_2d(np.asarray(self.A_eq, float))
            self.b_eq = np.atleast_1d(np.asarray(self.b_eq, float))

    def constraint_values(self, x: np.ndarray) -> np.ndarray:
        if not self.constraints:
            return np.empty(0)
        return np.concatenate([blk.fn(x)[0] for blk in self.constraints])

    def constraint_names(self) -> list[str]:
        return [name for blk in self.constraints for name in blk.names]

    def violations(self, x: np.ndarray) -> list[str]:
        """Names of constraints (and bounds) not strictly satisfied at ``x``."""
        out = []
        names = self.var_names or [f"x[{i}]" for i in range(self.n_vars)]
        for i in np.flatnonzero(~(x > self.lower)):
            out.append(f"{names[i]} > {self.lower[i]:g}")
        for i in np.flatnonzero(~(x < self.upper)):
            out.append(f"{names[i]} < {self.upper[i]:g}")
        if out:
            return out
        with np.errstate(all="ignore"):
            g = self.constraint_values(x)
        return [nm for nm, v in zip(self.constraint_names(), g) if not v < 0]


@dataclass
class SolveReport:
    x_star: np.ndarray
    obj_star: float
    kkt_residual: float
    iterations: int
    status: str
    duals: np.ndarray = field(default_factory=lambda: np.empty(0))
    eq_duals: np.ndarray = field(default_factory=lambda: np.empty(0))
    lower_duals: np.ndarray = field(default_factory=lambda: np.empty(0))
    upper_duals: np.ndarray = field(default_factory=lambda: np.empty(0))
    outer_objectives: list[float] = field(default_factory=list)
    violated: list[str] = field(default_factory=list)


class _Barrier:
    """Barrier-augmented objective f0 + mu * phi for a fixed program."""

    def __init__(self, prog: ConvexProgram):
        self.prog = prog
        self.lo_idx = np.flatnonzero(np.isfinite(prog.lower))
        self.up_idx = np.flatnonzero(np.isfinite(prog.upper))

    @property
    def m(self) -> int:
        n_con = sum(len(b.names) for b in self.prog.constraints)
        return n_con + self.lo_idx.size + self.up_idx.size

    def inside(self, x: np.ndarray) -> bool:
        p = self.prog
        if np.any(x[self.lo_idx] <= p.lower[self.lo_idx]) or np.any(x[self.up_idx] >= p.upper[self.up_idx]):
            return False
        with np.errstate(all="ignore"):
            g = p.constraint_values(x)
        return bool(np.all(g < 0))

    def value(self, x: np.ndarray, mu: float) -> float:
        p = self.prog
        with np.errstate(all="ignore"):
            g = p.constraint_values(x)
            f0 = p.objective(x)[0]
        phi = -np.sum(np.log(-g))
        phi -= np.sum(np.log(x[self.lo_idx] - p.lower[self.lo_idx]))
        phi -= np.sum(np.log(p.upper[self.up_idx] - x[self.up_idx]))
        val = f0 + mu * phi
        return val if np.isfinite(val) else np.inf

    def derivatives(self, x: np.ndarray, mu: float):
        p = self.prog
        f0, grad, hess = p.objective(x)
        grad = np.array(grad, dtype=float)
        hess = np.array(hess, dtype=float)
        for blk in p.constraints:
            g, jac, h = blk.fn(x)
            w = mu / -g
            grad += w @ jac
            hess += (jac.T * (w / -g)) @ jac
            if h is not None:
                hess += np.tensordot(w, h, axes=1)
        dl = x[self.lo_idx] - p.lower[self.lo_idx]
        du = p.upper[self.up_idx] - x[self.up_idx]
        grad[self.lo_idx] -= mu / dl
        grad[self.up_idx] += mu / du
        hess[self.lo_idx, self.lo_idx] += mu / dl**2
        hess[self.up_idx, self.up_idx] += mu / du**2
        return f0, grad, hess

    def duals(self, x: np.ndarray, mu: float):
        """Inequality multipliers implied by the barrier at ``x``."""
        p = self.prog
        lam = mu / -p.constraint_values(x)
        lam_lo = mu / (x[self.lo_idx] - p.lower[self.lo_idx])
        lam_up = mu / (p.upper[self.up_idx] - x[self.up_idx])
        return lam, lam_lo, lam_up


def kkt_residual(prog: ConvexProgram, x: np.ndarray, lam, lam_lo, lam_up):
    """Scaled stationarity residual and least-squares equality multipliers."""
    _, grad0, _ = prog.objective(x)
    r = np.array(grad0, dtype=float)
    scale = 1.0 + np.max(np.abs(grad0), initial=0.0)
    offset = 0
    for blk in prog.constraints:
        _, jac, _ = blk.fn(x)
        k = len(blk.names)
        lk = lam[offset : offset + k]
        r += lk @ jac
        scale += np.sum(lk * np.max(np.abs(jac), axis=1))
        offset += k
    lo_idx = np.flatnonzero(np.isfinite(prog.lower))
    up_idx = np.flatnonzero(np.isfinite(prog.upper))
    r[lo_idx] -= lam_lo
    r[up_idx] += lam_up
    scale += np.sum(lam_lo) + np.sum(lam_up)
    nu = np.empty(0)
    if prog.A_eq is not None:
        nu = np.linalg.lstsq(prog.A_eq.T, -r, rcond=None)[0]
        r = r + prog.A_eq.T @ nu
    return float(np.max(np.abs(r)) / scale), nu


def _newton_direction(grad, hess, A):
    n = grad.size
    if A is None:
        kkt, rhs = hess, -grad
    else:
        k = A.shape[0]
        kkt = np.zeros((n + k, n + k))
        kkt[:n, :n] = hess
        kkt[:n, n:] = A.T
        kkt[n:, :n] = A
        rhs = np.concatenate([-grad, np.zeros(k)])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    return sol[:n]


def solve(
    prog: ConvexProgram,
    x0,
    tol: float = 1e-8,
    *,
    mu0: float = 1.0,
    mu_factor: float = 0.1,
    max_outer: int = 200,
    max_inner: int = 50,
    kkt_tol: float = 1e-6,
    armijo: float = 0.01,
    backtrack: float = 0.5,
) -> SolveReport:
    x = np.array(x0, dtype=float)
    bar = _Barrier(prog)
    f_start = float(prog.objective(x)[0])
    if not bar.inside(x):
        return SolveReport(x, f_start, np.inf, 0, INFEASIBLE_START, violated=prog.violations(x))
    A = prog.A_eq
    if A is not None and np.max(np.abs(A @ x - prog.b_eq)) > 1e-9 * (1 + np.max(np.abs(prog.b_eq))):
        return SolveReport(x, f_start, np.inf, 0, INFEASIBLE_START, violated=["A x = b"])

    m = bar.m
    mu = mu0
    iterations = 0
    history = []
    status = MAX_ITER
    for _ in range(max_outer):
        val = bar.value(x, mu)
        for _ in range(max_inner):
            _, grad, hess = bar.derivatives(x, mu)
            dx = _newton_direction(grad, hess, A)
            slope = float(grad @ dx)
            iterations += 1
            if -slope / 2 <= 1e-14 * max(1.0, abs(val)):
                # Quadratic region: one undamped step sharpens the gradient
                # even when F can no longer resolve the decrease.
                if bar.inside(x + dx):
                    x = x + dx
                    val = bar.value(x, mu)
                break
            s = 1.0
            while not bar.inside(x + s * dx) and s > 1e-20:
                s *= backtrack
            new = bar.value(x + s * dx, mu)
            while new > val + armijo * s * slope and s > 1e-20:
                s *= backtrack
                new = bar.value(x + s * dx, mu)
            if new >= val:
                break
            x = x + s * dx
            val = new
        history.append(float(prog.objective(x)[0]))
        if m * mu <= tol:
            status = OPTIMAL
            break
        if m == 0:
            status = OPTIMAL
            break
        mu *= mu_factor

    lam, lam_lo, lam_up = bar.duals(x, mu)
    resid, nu = kkt_residual(prog, x, lam, lam_lo, lam_up)
    if status == OPTIMAL and resid > kkt_tol:
        status = MAX_ITER
    obj = history[-1]
    if obj > f_start:
        # The start point is feasible, so it is tol-optimal whenever this happens.
        x, obj = np.array(x0, dtype=float), f_start
    return SolveReport(x, obj, resid, iterations, status, lam, nu, lam_lo, lam_up, history)
