"""SQP with an l1-merit line search and a feasible-start fallback contract.

The solver never returns an iterate worse than a supplied feasible start:
whenever ``feasible_start`` is set and anything goes wrong (infeasible
subproblem, stalled line search, iteration cap without improvement), the
start is returned with status ``fallback_to_start``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .qp import hinge_newton, qp_solve

__all__ = [
    "NlpProblem",
    "SolverResult",
    "NlpNumericsError",
    "sqp_solve",
    "restore_feasibility",
]


class NlpNumericsError(RuntimeError):
    """A callback produced non-finite values."""


@dataclass
class NlpProblem:
    """Inequality-constrained NLP ``min cost(y) s.t. cons(y) <= 0``.

    ``hess_model`` may supply a positive-semidefinite cost-curvature model
    (Gauss-Newton); otherwise a damped BFGS approximation is used.
    Callbacks must be deterministic for fixed inputs.
    """

    dim: int
    cost: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    cons: Callable[[np.ndarray], np.ndarray] | None = None
    jac: Callable[[np.ndarray], np.ndarray] | None = None
    hess_model: Callable[[np.ndarray], np.ndarray] | None = None
    feas_tol: float = 1e-6
    opt_tol: float = 1e-6
    max_iter: int = 200
    max_ls: int = 60


@dataclass
class SolverResult:
    y: np.ndarray
    cost: float
    status: str  # optimal | max_iter | infeasible | fallback_to_start
    kkt_residual: float
    constraint_violation: float
    iterations: int
    merit_steps: list[tuple[float, float]] = field(default_factory=list)

    @property
    def y_star(self) -> np.ndarray:
        return self.y

    @property
    def cost_star(self) -> float:
        return self.cost


def _check_finite(name: str, value, it: int):
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise NlpNumericsError(f"{name} returned non-finite values at iteration {it}")
    return arr


def _eval_cons(problem: NlpProblem, y: np.ndarray, it: int) -> np.ndarray:
    if problem.cons is None:
        return np.zeros(0)
    return _check_finite("cons", problem.cons(y), it)


def _violation(gv: np.ndarray) -> float:
    return float(np.max(gv, initial=0.0))


def _l1_violation(gv: np.ndarray) -> float:
    return float(np.sum(np.maximum(gv, 0.0)))


def _regularize(b: np.ndarray) -> np.ndarray:
    lam = 0.0
    attempt = b
    for _ in range(60):
        try:
            np.linalg.cholesky(attempt)
            return attempt
        except np.linalg.LinAlgError:
            lam = 1e-8 if lam == 0.0 else 2.0 * lam
            attempt = b + lam * np.eye(b.shape[0])
    raise NlpNumericsError("could not regularize the Hessian model to positive definite")


def sqp_solve(problem: NlpProblem, y0, feasible_start: bool = False) -> SolverResult:
    y = np.asarray(y0, dtype=float).copy()
    if not np.all(np.isfinite(y)):
        raise ValueError("start point has non-finite entries")
    gv0 = _eval_cons(problem, y, 0)
    viol0 = _violation(gv0)
    cost0 = float(_check_finite("cost", problem.cost(y), 0))
    if feasible_start and viol0 > problem.feas_tol:
        raise ValueError(
            f"feasible_start set but start violates constraints by {viol0:.3e}"
        )

    def finalize(yv, cv, vv, status, kkt, iters, merit_steps):
        if feasible_start:
            worse = vv > problem.feas_tol or cv > cost0 + 1e-9
            improved = vv <= problem.feas_tol and cv < cost0
            if worse or (status != "optimal" and not improved):
                return SolverResult(
                    y=np.asarray(y0, dtype=float).copy(),
                    cost=cost0,
                    status="fallback_to_start",
                    kkt_residual=float("nan"),
                    constraint_violation=viol0,
                    iterations=iters,
                    merit_steps=merit_steps,
                )
        return SolverResult(
            y=yv,
            cost=cv,
            status=status,
            kkt_residual=kkt,
            constraint_violation=vv,
            iterations=iters,
            merit_steps=merit_steps,
        )

    best_y, best_cost, best_viol = (y.copy(), cost0, viol0) if viol0 <= problem.feas_tol else (None, np.inf, np.inf)
    bfgs = np.eye(problem.dim)
    nu = 1.0
    merit_steps: list[tuple[float, float]] = []
    kkt = float("inf")
    status = "max_iter"
    it = 0
    while it < problem.max_iter:
        it += 1
        c = float(_check_finite("cost", problem.cost(y), it))
        g = _check_finite("grad", problem.grad(y), it)
        gv = _eval_cons(problem, y, it)
        jac = (
            _check_finite("jac", problem.jac(y), it)
            if problem.cons is not None
            else np.zeros((0, problem.dim))
        )
        viol = _violation(gv)
        if viol <= problem.feas_tol and c < best_cost:
            best_y, best_cost, best_viol = y.copy(), c, viol

        if problem.hess_model is not None:
            b = _regularize(np.asarray(problem.hess_model(y), dtype=float))
        else:
            b = _regularize(bfgs)

        qp = qp_solve(
            b,
            g,
            a_ineq=jac if jac.shape[0] else None,
            b_ineq=-gv if jac.shape[0] else None,
            y0=np.zeros(problem.dim),
        )
        if qp.status == "infeasible":
            status = "infeasible"
            break
        d = qp.y
        lam = qp.lam_ineq
        stat_res = float(np.max(np.abs(g + (jac.T @ lam if jac.shape[0] else 0.0)), initial=0.0))
        comp = float(np.max(np.abs(lam * gv), initial=0.0)) if jac.shape[0] else 0.0
        kkt = max(stat_res, comp, viol)
        if kkt <= problem.opt_tol and viol <= problem.feas_tol:
            status = "optimal"
            break
        step_norm = float(np.max(np.abs(d), initial=0.0))
        if step_norm <= 1e-12 * max(1.0, float(np.max(np.abs(y)))):
            # no usable direction left at this point
            status = "optimal" if (kkt <= 10 * problem.opt_tol and viol <= problem.feas_tol) else "max_iter"
            break

        nu = max(nu, 1.5 * float(np.max(np.abs(lam), initial=0.0)) + 0.1)
        psi = _l1_violation(gv)
        merit0 = c + nu * psi
        deriv = float(g @ d) - nu * psi
        alpha = 1.0
        accepted = False
        for _ in range(problem.max_ls):
            cand = y + alpha * d
            try:
                cc = float(_check_finite("cost", problem.cost(cand), it))
                cg = _eval_cons(problem, cand, it)
            except NlpNumericsError:
                alpha *= 0.5
                continue
            merit_c = cc + nu * _l1_violation(cg)
            if merit_c <= merit0 + 1e-4 * alpha * min(deriv, 0.0) and merit_c <= merit0 + 1e-12 * max(1.0, abs(merit0)):
                merit_steps.append((merit0, merit_c))
                y = cand
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            status = "max_iter"
            break

        if problem.hess_model is None:
            gn = _check_finite("grad", problem.grad(y), it)
            jn = (
                _check_finite("jac", problem.jac(y), it)
                if problem.cons is not None
                else np.zeros((0, problem.dim))
            )
            s = alpha * d
            yvec = (gn + (jn.T @ lam if jn.shape[0] else 0.0)) - (
                g + (jac.T @ lam if jac.shape[0] else 0.0)
            )
            bfgs = _damped_bfgs_update(bfgs, s, yvec)

    c_fin = float(_check_finite("cost", problem.cost(y), it))
    gv_fin = _eval_cons(problem, y, it)
    v_fin = _violation(gv_fin)
    if best_y is not None and (v_fin > problem.feas_tol or c_fin > best_cost):
        y, c_fin, v_fin = best_y, best_cost, best_viol
    return finalize(y, c_fin, v_fin, status, kkt, it, merit_steps)


def _damped_bfgs_update(b: np.ndarray, s: np.ndarray, yvec: np.ndarray) -> np.ndarray:
    sbs = float(s @ b @ s)
    if sbs <= 1e-16:
        return b
    sy = float(s @ yvec)
    if sy < 0.2 * sbs:
        theta = 0.8 * sbs / (sbs - sy)
        yvec = theta * yvec + (1.0 - theta) * (b @ s)
        sy = float(s @ yvec)
    if sy <= 1e-16:
        return b
    bs = b @ s
    return b - np.outer(bs, bs) / sbs + np.outer(yvec, yvec) / sy


def restore_feasibility(
    problem: NlpProblem,
    y0,
    max_outer: int = 80,
    stall_ratio: float = 1e-3,
    stall_steps: int = 5,
) -> tuple[np.ndarray, bool, int]:
    """Drive the l1 constraint violation of ``problem`` below tolerance.

    Successive linearizations; each step minimizes the squared-hinge
    violation of the linearized system with a small proximal term, followed
    by a line search on the true l1 violation.  Declares infeasibility when
    the violation stalls above tolerance.  Returns ``(y, feasible, iters)``.
    """
    y = np.asarray(y0, dtype=float).copy()
    if problem.cons is None:
        return y, True, 0
    tol = problem.feas_tol
    gv = _check_finite("cons", problem.cons(y), 0)
    stalled = 0
    it = 0
    for it in range(1, max_outer + 1):
        if _violation(gv) <= tol:
            return y, True, it - 1
        jac = _check_finite("jac", problem.jac(y), it)
        d, _, _ = hinge_newton(
            jac,
            -gv,
            np.zeros((0, problem.dim)),
            np.zeros(0),
            np.zeros(problem.dim),
            sigma=1e-8 * max(1.0, float(np.max(np.abs(jac)) ** 2)),
            tol=0.1 * tol,
        )
        base = _l1_violation(gv)
        alpha = 1.0
        improved = False
        for _ in range(40):
            cand = y + alpha * d
            try:
                gc = _check_finite("cons", problem.cons(cand), it)
            except NlpNumericsError:
                alpha *= 0.5
                continue
            if _l1_violation(gc) <= base * (1.0 - 1e-4 * alpha):
                y, gv = cand, gc
                improved = True
                break
            alpha *= 0.5
        if improved:
            rel_drop = 1.0 - _l1_violation(gv) / max(base, 1e-300)
            stalled = stalled + 1 if rel_drop < stall_ratio else 0
        else:
            stalled += 1
        if stalled >= stall_steps:
            return y, _violation(gv) <= tol, it
    return y, _violation(gv) <= tol, it
