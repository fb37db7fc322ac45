"""Dense convex QP solver: primal active set with Bland-style anti-cycling.

Solves ``min 0.5 y'Hy + f'y  s.t.  A y <= b, A_eq y = b_eq`` for symmetric
positive-definite ``H`` (callers regularize PSD Hessians).  A feasible start
is used directly; otherwise a phase-one pass minimizes a squared-hinge
penalty with weight continuation to either produce a feasible point or an
(approximate) Farkas certificate of infeasibility.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["QpResult", "qp_solve", "hinge_newton"]


@dataclass
class QpResult:
    y: np.ndarray
    obj: float
    status: str  # optimal | infeasible | max_iter
    lam_ineq: np.ndarray
    lam_eq: np.ndarray
    iterations: int
    kkt_residual: float
    certificate: np.ndarray | None = None  # nonnegative row weights proving emptiness


def _as_rows(a, b, n):
    if a is None or b is None or (hasattr(b, "__len__") and len(b) == 0):
        return np.zeros((0, n)), np.zeros(0)
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float)).ravel()
    return a, b


def hinge_newton(
    a: np.ndarray,
    b: np.ndarray,
    a_eq: np.ndarray,
    b_eq: np.ndarray,
    y0: np.ndarray,
    sigma: float = 1e-8,
    tol: float = 1e-10,
    rho_max: float = 1e12,
    max_newton: int = 200,
) -> tuple[np.ndarray, float, np.ndarray]:
    """Minimize squared-hinge infeasibility of a linear system from ``y0``.

    Returns ``(y, violation, weights)`` where ``violation`` is the final
    max violation and ``weights`` are the nonnegative penalty multipliers of
    the inequality rows (an approximate Farkas certificate when the system
    is infeasible).
    """
    y = np.asarray(y0, dtype=float).copy()
    n = y.size
    rho = 1.0
    lam = np.zeros(a.shape[0])

    def viol(yv):
        parts = []
        if a.shape[0]:
            parts.append(np.max(a @ yv - b, initial=0.0))
        if a_eq.shape[0]:
            parts.append(np.max(np.abs(a_eq @ yv - b_eq), initial=0.0))
        return max(parts, default=0.0)

    def phi(yv):
        val = 0.5 * sigma * float((yv - y0) @ (yv - y0))
        if a.shape[0]:
            r = np.maximum(a @ yv - b, 0.0)
            val += 0.5 * rho * float(r @ r)
        if a_eq.shape[0]:
            re = a_eq @ yv - b_eq
            val += 0.5 * rho * float(re @ re)
        return val

    while rho <= rho_max:
        for _ in range(max_newton):
            r = a @ y - b if a.shape[0] else np.zeros(0)
            act = r > 0.0
            grad = sigma * (y - y0)
            hess = sigma * np.eye(n)
            if np.any(act):
                ap = a[act]
                grad = grad + rho * ap.T @ r[act]
                hess = hess + rho * ap.T @ ap
            if a_eq.shape[0]:
                re = a_eq @ y - b_eq
                grad = grad + rho * a_eq.T @ re
                hess = hess + rho * a_eq.T @ a_eq
            try:
                step = -np.linalg.solve(hess, grad)
            except np.linalg.LinAlgError:
                step = -np.linalg.lstsq(hess, grad, rcond=None)[0]
            if np.max(np.abs(step), initial=0.0) <= 1e-14 * max(1.0, float(np.max(np.abs(y)))):
                break
            base = phi(y)
            alpha = 1.0
            for _ in range(40):
                cand = y + alpha * step
                if phi(cand) <= base - 1e-12 * alpha * abs(base) or phi(cand) < base:
                    y = cand
                    break
                alpha *= 0.5
            else:
                break
        lam = rho * np.maximum(a @ y - b, 0.0) if a.shape[0] else np.zeros(0)
        v = viol(y)
        if v <= tol:
            return y, v, lam
        rho *= 100.0
    return y, viol(y), lam


def qp_solve(
    h,
    f,
    a_ineq=None,
    b_ineq=None,
    a_eq=None,
    b_eq=None,
    y0=None,
    feas_tol: float = 1e-9,
    max_iter: int | None = None,
) -> QpResult:
    """Primal active-set QP.  Ties in blocking/dropping use lowest row index."""
    h = np.asarray(h, dtype=float)
    f = np.asarray(f, dtype=float).ravel()
    n = f.size
    a, b = _as_rows(a_ineq, b_ineq, n)
    ae, be = _as_rows(a_eq, b_eq, n)
    if max_iter is None:
        max_iter = 100 + 10 * (n + ae.shape[0])

    try:
        chol = np.linalg.cholesky(h)
    except np.linalg.LinAlgError as exc:
        raise ValueError("QP Hessian must be positive definite (regularize first)") from exc

    def h_solve(rhs):
        z = np.linalg.solve(chol, rhs)
        return np.linalg.solve(chol.T, z)

    # phase one: find a feasible start if none was supplied
    if y0 is None:
        y = np.zeros(n)
    else:
        y = np.asarray(y0, dtype=float).copy()
    start_viol = 0.0
    if a.shape[0]:
        start_viol = max(start_viol, float(np.max(a @ y - b, initial=0.0)))
    if ae.shape[0]:
        start_viol = max(start_viol, float(np.max(np.abs(ae @ y - be), initial=0.0)))
    if start_viol > feas_tol:
        y, v, weights = hinge_newton(a, b, ae, be, y, tol=feas_tol * 0.1)
        if v > feas_tol:
            scale = np.max(weights) if weights.size and np.max(weights) > 0 else 1.0
            return QpResult(
                y=y,
                obj=float(0.5 * y @ h @ y + f @ y),
                status="infeasible",
                lam_ineq=np.zeros(a.shape[0]),
                lam_eq=np.zeros(ae.shape[0]),
                iterations=0,
                kkt_residual=v,
                certificate=weights / scale,
            )

    work: list[int] = [i for i in range(a.shape[0]) if a[i] @ y - b[i] >= -feas_tol]
    # keep the working set independent: greedily drop rows that add no rank
    work = _independent_subset(a, work)

    lam_w = np.zeros(0)
    status = "max_iter"
    iters = 0
    for iters in range(1, max_iter + 1):
        g = h @ y + f
        c_rows = [ae] if ae.shape[0] else []
        r_parts = [be - ae @ y] if ae.shape[0] else []
        if work:
            c_rows.append(a[work])
            r_parts.append(b[np.array(work)] - a[work] @ y)
        if c_rows:
            # direct saddle solve; stays well-conditioned for near-singular H
            c = np.vstack(c_rows)
            rr = np.concatenate(r_parts)
            k = c.shape[0]
            kkt_mat = np.block([[h, c.T], [c, np.zeros((k, k))]])
            rhs = np.concatenate([-g, rr])
            try:
                sol = np.linalg.solve(kkt_mat, rhs)
            except np.linalg.LinAlgError:
                sol = np.linalg.lstsq(kkt_mat, rhs, rcond=None)[0]
            d = sol[:n]
            mu = sol[n:]
        else:
            mu = np.zeros(0)
            d = -h_solve(g)
        lam_eq = mu[: ae.shape[0]]
        lam_w = mu[ae.shape[0] :]

        if np.max(np.abs(d), initial=0.0) <= 1e-11 * max(1.0, float(np.max(np.abs(y), initial=0.0))):
            neg = [j for j, idx in enumerate(work) if lam_w[j] < -1e-9]
            if not neg:
                status = "optimal"
                break
            # Bland: drop the lowest constraint index among negative multipliers
            j = min(neg, key=lambda jj: work[jj])
            work.pop(j)
            continue

        alpha = 1.0
        blocking = -1
        if a.shape[0]:
            in_work = np.zeros(a.shape[0], dtype=bool)
            if work:
                in_work[np.array(work)] = True
            ad = a @ d
            slack = b - a @ y
            for i in range(a.shape[0]):
                if in_work[i] or ad[i] <= 1e-13:
                    continue
                ratio = max(slack[i], 0.0) / ad[i]
                if ratio < alpha - 1e-14:
                    alpha = ratio
                    blocking = i
        y = y + alpha * d
        if blocking >= 0:
            work = _independent_subset(a, sorted(work + [blocking]))

    lam_full = np.zeros(a.shape[0])
    for j, idx in enumerate(work):
        if j < lam_w.size:
            lam_full[idx] = max(lam_w[j], 0.0) if status == "optimal" else lam_w[j]
    g = h @ y + f
    stat = g + (a.T @ lam_full if a.shape[0] else 0.0)
    if ae.shape[0]:
        stat = stat + ae.T @ (mu[: ae.shape[0]] if mu.size else np.zeros(ae.shape[0]))
    viol = 0.0
    if a.shape[0]:
        viol = max(viol, float(np.max(a @ y - b, initial=0.0)))
    if ae.shape[0]:
        viol = max(viol, float(np.max(np.abs(ae @ y - be), initial=0.0)))
    kkt = max(float(np.max(np.abs(stat), initial=0.0)), viol)
    return QpResult(
        y=y,
        obj=float(0.5 * y @ h @ y + f @ y),
        status=status,
        lam_ineq=lam_full,
        lam_eq=mu[: ae.shape[0]] if mu.size else np.zeros(ae.shape[0]),
        iterations=iters,
        kkt_residual=kkt,
    )


def _independent_subset(a: np.ndarray, idx: list[int]) -> list[int]:
    """Greedily keep rows of ``a[idx]`` that grow the span, preserving order."""
    kept: list[int] = []
    basis: list[np.ndarray] = []
    for i in idx:
        v = a[i].astype(float).copy()
        for u in basis:
            v -= (v @ u) * u
        nv = np.linalg.norm(v)
        if nv > 1e-10 * max(1.0, np.linalg.norm(a[i])):
            basis.append(v / nv)
            kept.append(i)
    return kept
