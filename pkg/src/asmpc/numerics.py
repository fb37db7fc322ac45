"""Dense linear-algebra and control-theoretic primitives.

Symmetric matrices are plain float ndarrays that pass through
:func:`symmetrize` on construction; polyhedra are inequality systems
``{x : A x <= b}``.  Everything here is a pure function on immutable
inputs, so values can be shared freely between threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "NumericsError",
    "DareConvergenceError",
    "MpiIterationError",
    "Polyhedron",
    "RiccatiSolution",
    "symmetrize",
    "sym_eig_desc",
    "dare_solve",
    "dare_residual",
    "spectral_radius",
    "mpi_set",
]


class NumericsError(RuntimeError):
    """Base class for numerical failures in this module."""


class DareConvergenceError(NumericsError):
    """Riccati iteration did not reach the residual target within the cap."""

    def __init__(self, iterations: int, residual: float):
        super().__init__(
            f"Riccati iteration did not converge within {iterations} iterations "
            f"(residual {residual:.3e})"
        )
        self.iterations = iterations
        self.residual = residual


class MpiIterationError(NumericsError):
    """Invariant-set iteration hit its cap before reaching a fixpoint.

    Carries the last iterate, which is a conservative inner approximation
    of the true maximal invariant set.
    """

    def __init__(self, iterations: int, last_iterate: "Polyhedron"):
        super().__init__(
            f"invariant-set iteration reached the cap of {iterations} steps "
            "without a fixpoint; last iterate attached"
        )
        self.iterations = iterations
        self.last_iterate = last_iterate


def symmetrize(m, atol: float = 1e-12) -> np.ndarray:
    """Validate that ``m`` is symmetric to ``atol`` and return 0.5*(M+M^T).

    Raises ``ValueError`` for non-square, non-finite, or visibly
    asymmetric input.
    """
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    skew = np.max(np.abs(a - a.T)) if a.size else 0.0
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if skew > atol * scale:
        raise ValueError(f"matrix is not symmetric (max asymmetry {skew:.3e})")
    return 0.5 * (a + a.T)


def sym_eig_desc(m, sweep_cap: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix, eigenvalues non-increasing.

    Uses cyclic Jacobi rotations, which keep the eigenvector matrix
    orthonormal by construction.  Ties between equal eigenvalues are broken
    by a stable sort on the original column index together with a sign
    convention (largest-magnitude entry of each eigenvector positive), so a
    diagonal input returns the corresponding permutation of the canonical
    basis and the identity returns T = I.
    """
    a = symmetrize(m)
    n = a.shape[0]
    t = np.eye(n)
    if n == 0:
        return t, np.zeros(0)
    scale = max(1.0, float(np.max(np.abs(a))))
    stop = 1e-15 * scale
    for _ in range(sweep_cap):
        off = _max_offdiag(a)
        if off <= stop:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= stop:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                sign = 1.0 if theta >= 0.0 else -1.0
                tau = sign / (abs(theta) + math.hypot(theta, 1.0))
                c = 1.0 / math.sqrt(tau * tau + 1.0)
                s = tau * c
                _rotate(a, t, p, q, c, s)
    else:
        raise NumericsError(
            f"Jacobi sweeps did not converge within {sweep_cap} sweeps "
            f"(off-diagonal {_max_offdiag(a):.3e})"
        )
    sigma = np.diag(a).copy()
    order = np.argsort(-sigma, kind="stable")
    sigma = sigma[order]
    t = t[:, order]
    # deterministic sign: the largest-magnitude entry of each column is positive
    for j in range(n):
        col = t[:, j]
        k = int(np.argmax(np.abs(col)))
        if col[k] < 0.0:
            t[:, j] = -col
    return t, sigma


def _max_offdiag(a: np.ndarray) -> float:
    masked = a - np.diag(np.diag(a))
    return float(np.max(np.abs(masked))) if a.size else 0.0


def _rotate(a: np.ndarray, t: np.ndarray, p: int, q: int, c: float, s: float) -> None:
    # two-sided Jacobi rotation on rows/cols (p, q) of a; right-apply to t
    ap = a[p, :].copy()
    aq = a[q, :].copy()
    a[p, :] = c * ap - s * aq
    a[q, :] = s * ap + c * aq
    ap = a[:, p].copy()
    aq = a[:, q].copy()
    a[:, p] = c * ap - s * aq
    a[:, q] = s * ap + c * aq
    a[p, q] = 0.0
    a[q, p] = 0.0
    tp = t[:, p].copy()
    tq = t[:, q].copy()
    t[:, p] = c * tp - s * tq
    t[:, q] = s * tp + c * tq


def spectral_radius(a) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(np.asarray(a, dtype=float)))))


@dataclass(frozen=True)
class RiccatiSolution:
    """Stabilizing solution P of the discrete Riccati equation and LQR gain K.

    The gain is for the feedback ``u = K x``; the closed loop ``A + B K``
    has spectral radius below one.
    """

    p: np.ndarray
    k: np.ndarray
    residual: float
    iterations: int


def dare_residual(a, b, q, r, p) -> float:
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    s = r + b.T @ p @ b
    rhs = q + a.T @ p @ a - a.T @ p @ b @ np.linalg.solve(s, b.T @ p @ a)
    return float(np.max(np.abs(p - rhs)))


def dare_solve(a, b, q, r, tol: float = 1e-12, max_iter: int = 100) -> RiccatiSolution:
    """Solve ``P = Q + A'PA - A'PB (R + B'PB)^-1 B'PA`` by structured doubling.

    Requires (A, B) stabilizable; the iteration failing to converge within
    ``max_iter`` doublings raises :class:`DareConvergenceError`.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    q = symmetrize(q)
    r = symmetrize(r)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("system matrices have non-finite entries")
    n = a.shape[0]
    a_k = a.copy()
    g_k = b @ np.linalg.solve(r, b.T)
    h_k = q.copy()
    eye = np.eye(n)
    it = 0
    for it in range(1, max_iter + 1):
        try:
            m = np.linalg.solve(eye + g_k @ h_k, np.hstack([a_k, g_k]))
        except np.linalg.LinAlgError:
            raise DareConvergenceError(it, float("inf")) from None
        ma = m[:, :n]
        mg = m[:, n:]
        with np.errstate(over="ignore", invalid="ignore"):
            a_next = a_k @ ma
            g_next = g_k + a_k @ mg @ a_k.T
            h_next = h_k + ma.T @ h_k @ a_k
        if not (
            np.all(np.isfinite(a_next))
            and np.all(np.isfinite(g_next))
            and np.all(np.isfinite(h_next))
        ):
            raise DareConvergenceError(it, float("inf"))
        step = float(np.max(np.abs(h_next - h_k)))
        a_k, g_k, h_k = a_next, 0.5 * (g_next + g_next.T), 0.5 * (h_next + h_next.T)
        if step <= tol * max(1.0, float(np.max(np.abs(h_k)))):
            break
    p = 0.5 * (h_k + h_k.T)
    res = dare_residual(a, b, q, r, p)
    if not np.isfinite(res) or res > 1e-8:
        raise DareConvergenceError(it, res)
    s = r + b.T @ p @ b
    k = -np.linalg.solve(s, b.T @ p @ a)
    if spectral_radius(a + b @ k) >= 1.0:
        raise DareConvergenceError(it, res)
    return RiccatiSolution(p=p, k=k, residual=res, iterations=it)


@dataclass(frozen=True)
class Polyhedron:
    """Inequality system ``{x : A x <= b}``.

    Trivially empty rows (zero normal with negative offset) are rejected at
    construction; zero rows with non-negative offset are dropped.
    """

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float)).ravel()
        if a.shape[0] != b.shape[0]:
            raise ValueError(f"row mismatch: A has {a.shape[0]} rows, b has {b.shape[0]}")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("polyhedron data has non-finite entries")
        norms = np.max(np.abs(a), axis=1) if a.size else np.zeros(0)
        zero = norms <= 0.0
        if np.any(zero & (b < 0.0)):
            raise ValueError("row with zero normal and negative offset is trivially empty")
        if np.any(zero):
            a = a[~zero]
            b = b[~zero]
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def n_rows(self) -> int:
        return self.a.shape[0]

    @property
    def dim(self) -> int:
        return self.a.shape[1]

    @classmethod
    def from_box(cls, lo, hi) -> "Polyhedron":
        lo = np.asarray(lo, dtype=float).ravel()
        hi = np.asarray(hi, dtype=float).ravel()
        n = lo.size
        rows = []
        offs = []
        for i in range(n):
            if np.isfinite(hi[i]):
                e = np.zeros(n)
                e[i] = 1.0
                rows.append(e)
                offs.append(hi[i])
            if np.isfinite(lo[i]):
                e = np.zeros(n)
                e[i] = -1.0
                rows.append(e)
                offs.append(-lo[i])
        return cls(np.array(rows), np.array(offs))

    def contains(self, x, tol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=float).ravel()
        return bool(np.all(self.a @ x - self.b <= tol))

    def violation(self, x) -> float:
        x = np.asarray(x, dtype=float).ravel()
        return float(np.max(self.a @ x - self.b, initial=0.0))

    def intersect(self, other: "Polyhedron") -> "Polyhedron":
        return Polyhedron(np.vstack([self.a, other.a]), np.concatenate([self.b, other.b]))

    def normalized(self) -> "Polyhedron":
        norms = np.linalg.norm(self.a, axis=1)
        return Polyhedron(self.a / norms[:, None], self.b / norms)


def _support(poly: Polyhedron, c: np.ndarray, x_feasible: np.ndarray) -> float:
    """max c'x over the polyhedron, via the regularized QP in :mod:`asmpc.nlp`."""
    from .nlp import qp_solve

    n = poly.dim
    h = 2e-10 * np.eye(n)
    res = qp_solve(h, -c, a_ineq=poly.a, b_ineq=poly.b, y0=x_feasible)
    if res.status != "optimal":
        raise NumericsError(f"support LP failed with status {res.status}")
    return float(c @ res.y)


def _drop_redundant(poly: Polyhedron, tol: float = 1e-9) -> Polyhedron:
    """Remove rows implied by the others (one support LP per candidate row)."""
    a, b = poly.a.copy(), poly.b.copy()
    keep = np.ones(a.shape[0], dtype=bool)
    origin = np.zeros(poly.dim)
    for i in range(a.shape[0]):
        trial = keep.copy()
        trial[i] = False
        if not np.any(trial):
            continue
        rest = Polyhedron(a[trial], b[trial])
        if _support(rest, a[i], origin) <= b[i] + tol:
            keep[i] = False
    return Polyhedron(a[keep], b[keep])


def mpi_set(a_cl, base: Polyhedron, max_iter: int = 60, tol: float = 1e-9) -> Polyhedron:
    """Maximal positive invariant subset of ``base`` for ``x+ = A_cl x``.

    Iterates the pre-set intersection ``O_{k+1} = O_k ∩ {x : A_cl x ∈ O_k}``
    with LP-based redundant-row removal and stops at the fixpoint.  Requires
    a Schur-stable ``A_cl`` and a bounded ``base`` containing the origin in
    its interior.
    """
    a_cl = np.asarray(a_cl, dtype=float)
    if spectral_radius(a_cl) >= 1.0:
        raise ValueError("closed-loop matrix must have spectral radius below one")
    if np.any(base.b <= 0.0):
        raise ValueError("base polyhedron must contain the origin in its interior")
    origin = np.zeros(base.dim)
    for i in range(base.dim):
        e = np.zeros(base.dim)
        e[i] = 1.0
        for c in (e, -e):
            if abs(_support(base, c, origin)) > 1e9:
                raise ValueError("base polyhedron must be bounded")

    omega = base
    for _ in range(max_iter):
        pre_a = omega.a @ a_cl
        pre_b = omega.b
        fresh_a = []
        fresh_b = []
        for i in range(pre_a.shape[0]):
            row = pre_a[i]
            if np.max(np.abs(row)) <= tol:
                continue
            if _support(omega, row, origin) > pre_b[i] + tol:
                fresh_a.append(row)
                fresh_b.append(pre_b[i])
        if not fresh_a:
            return _drop_redundant(omega, tol)
        omega = _drop_redundant(
            omega.intersect(Polyhedron(np.array(fresh_a), np.array(fresh_b))), tol
        )
    raise MpiIterationError(max_iter, omega)
