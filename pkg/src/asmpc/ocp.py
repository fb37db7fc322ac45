"""Horizon-N optimal control problem in condensed, input-only form.

``condense`` eliminates the predicted states by recursive substitution,
leaving the stacked (transformed) inputs as the only decision variables.
Objective gradients come from a backward adjoint sweep through the
discrete-time step map; constraint Jacobians from forward sensitivity
propagation.  Finite differences appear only in tests, as the oracle.

Constraint row order (documented contract, fixed for a given spec):
  1. input-box rows, stages 0..N-1; per stage, per input coordinate with a
     finite bound: upper row then lower row;
  2. state-box rows for predicted states 1..N-1, same sub-order over state
     coordinates;
  3. terminal rows: polyhedron rows in stored order, or for a terminal
     equality per coordinate the pair (+ row, - row) with the equality
     tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .models.core import (
    DiscreteModel,
    EconomicCostData,
    InputTransform,
    IntegrationBlowUpError,
    QuadraticCostData,
    apply_transform,
    transform_state_gain,
)
from .nlp import NlpProblem, SolverResult, restore_feasibility, sqp_solve
from .numerics import Polyhedron

__all__ = [
    "FEAS_TOL",
    "EQUALITY_TOL",
    "TerminalSet",
    "OcpSpec",
    "CondensedOcp",
    "InfeasibleProblemError",
    "condense",
    "grad_cost",
    "feasible_seed",
    "try_feasible_seed",
    "solve_ocp",
    "check_terminal_ingredients",
]

FEAS_TOL = 1e-6
EQUALITY_TOL = 1e-6


class InfeasibleProblemError(RuntimeError):
    """The constraint system admits no solution within tolerance."""


@dataclass(frozen=True)
class TerminalSet:
    """Terminal constraint: nothing, a polyhedron, or an equality point."""

    kind: str = "none"  # none | polyhedron | equality
    polyhedron: Polyhedron | None = None
    x_target: np.ndarray | None = None
    tol: float = EQUALITY_TOL

    def __post_init__(self):
        if self.kind not in ("none", "polyhedron", "equality"):
            raise ValueError(f"unknown terminal set kind {self.kind!r}")
        if self.kind == "polyhedron" and self.polyhedron is None:
            raise ValueError("polyhedron terminal set needs a polyhedron")
        if self.kind == "equality" and self.x_target is None:
            raise ValueError("equality terminal set needs a target state")


@dataclass(frozen=True)
class OcpSpec:
    """Everything defining the horizon-N problem for one plant.

    ``terminal_p``/``terminal_x_ref`` give the quadratic terminal penalty
    0.5 |x - x_ref|_P^2 (None for no terminal cost).  ``kappa`` maps a
    terminal state to an admissible physical input and backs the
    shift-and-append guess constructor.
    """

    model: DiscreteModel
    n: int
    stage_cost: QuadraticCostData | EconomicCostData
    terminal_set: TerminalSet
    transform: InputTransform
    terminal_p: np.ndarray | None = None
    terminal_x_ref: np.ndarray | None = None
    kappa: Callable[[np.ndarray], np.ndarray] | None = None

    @property
    def dim_u(self) -> int:
        return self.n * self.model.nu

    @property
    def is_quadratic(self) -> bool:
        return isinstance(self.stage_cost, QuadraticCostData)

    def stage_value(self, x, u_phys) -> float:
        c = self.stage_cost
        if isinstance(c, QuadraticCostData):
            dx = x - c.x_ref
            du = u_phys - c.u_ref
            return 0.5 * float(dx @ c.q @ dx + du @ c.r @ du)
        return float(c.value(x, u_phys))

    def stage_grads(self, x, u_phys):
        c = self.stage_cost
        if isinstance(c, QuadraticCostData):
            return c.q @ (x - c.x_ref), c.r @ (u_phys - c.u_ref)
        return np.asarray(c.grad_x(x, u_phys)), np.asarray(c.grad_u(x, u_phys))

    def terminal_value(self, x) -> float:
        if self.terminal_p is None:
            return 0.0
        dx = x - self.terminal_x_ref
        return 0.5 * float(dx @ self.terminal_p @ dx)

    def terminal_grad(self, x) -> np.ndarray:
        if self.terminal_p is None:
            return np.zeros(self.model.nx)
        return self.terminal_p @ (x - self.terminal_x_ref)

    def equilibrium_stack(self) -> np.ndarray:
        """Decision-coordinate stack that holds the equilibrium input."""
        if self.transform.kind == "none":
            return np.tile(self.model.u_eq, self.n)
        return np.zeros(self.dim_u)


class _Workspace:
    """Forward pass at one decision stack, with lazily built derivatives."""

    def __init__(self, spec: OcpSpec, x0: np.ndarray, u: np.ndarray):
        self.spec = spec
        model = spec.model
        n, nx, nu = spec.n, model.nx, model.nu
        self.u = u
        u_stages = u.reshape(n, nu)
        self.states = np.zeros((n + 1, nx))
        self.states[0] = x0
        self.u_phys = np.zeros((n, nu))
        for i in range(n):
            self.u_phys[i] = apply_transform(spec.transform, u_stages[i], self.states[i])
            nxt = model.step_fn(self.states[i], self.u_phys[i])
            if not np.all(np.isfinite(nxt)) or np.max(np.abs(nxt)) > 1e6:
                raise IntegrationBlowUpError(self.states[i], self.u_phys[i], stage=i)
            self.states[i + 1] = nxt
        self._jacs = None
        self._sens = None

    def jacs(self):
        """Per-stage decision-coordinate Jacobians (F_x, F_u, dU_phys/dx)."""
        if self._jacs is None:
            spec, model = self.spec, self.spec.model
            n = spec.n
            k_gain = transform_state_gain(spec.transform, model.nx, model.nu)
            fx_list, fu_list = [], []
            for i in range(n):
                _, fx, fu = model.step_with_jac(self.states[i], self.u_phys[i])
                fx_list.append(fx + fu @ k_gain)
                fu_list.append(fu)
            self._jacs = (fx_list, fu_list, k_gain)
        return self._jacs

    def sensitivities(self):
        """S_i = d x_i / d u for i = 0..N (forward propagation)."""
        if self._sens is None:
            spec = self.spec
            n, nx, nu = spec.n, spec.model.nx, spec.model.nu
            fx_list, fu_list, _ = self.jacs()
            sens = np.zeros((n + 1, nx, spec.dim_u))
            for i in range(n):
                sens[i + 1] = fx_list[i] @ sens[i]
                sens[i + 1][:, i * nu : (i + 1) * nu] += fu_list[i]
            self._sens = sens
        return self._sens

    def input_jacobian(self, i: int) -> np.ndarray:
        """d u_phys_i / d u (accounts for state feedback in the transform)."""
        spec = self.spec
        nu = spec.model.nu
        _, _, k_gain = self.jacs()
        block = np.zeros((nu, spec.dim_u))
        block[:, i * nu : (i + 1) * nu] = np.eye(nu)
        if spec.transform.kind == "prestabilize":
            block = block + k_gain @ self.sensitivities()[i]
        return block


@dataclass
class CondensedOcp:
    """Input-only form of the horizon problem at a fixed initial state.

    ``cost``/``cons``/``grad``/``jac`` are pure in the decision stack; the
    forward pass at the most recent stack is cached.
    """

    spec: OcpSpec
    x0: np.ndarray
    dim_u: int
    n_g: int
    row_blocks: list[tuple[str, int, int]]

    def __post_init__(self):
        self._cache_key: bytes | None = None
        self._cache: _Workspace | None = None

    def _ws(self, u) -> _Workspace:
        u = np.asarray(u, dtype=float).ravel()
        if u.size != self.dim_u:
            raise ValueError(f"expected stack of length {self.dim_u}, got {u.size}")
        key = u.tobytes()
        if key != self._cache_key:
            self._cache = _Workspace(self.spec, self.x0, u)
            self._cache_key = key
        return self._cache

    def states(self, u) -> np.ndarray:
        return self._ws(u).states.copy()

    def physical_inputs(self, u) -> np.ndarray:
        return self._ws(u).u_phys.copy()

    def cost(self, u) -> float:
        ws = self._ws(u)
        spec = self.spec
        total = 0.0
        for i in range(spec.n):
            total += spec.stage_value(ws.states[i], ws.u_phys[i])
        return total + spec.terminal_value(ws.states[spec.n])

    def grad(self, u) -> np.ndarray:
        ws = self._ws(u)
        spec = self.spec
        n, nu = spec.n, spec.model.nu
        fx_list, fu_list, k_gain = ws.jacs()
        grad = np.zeros(self.dim_u)
        lam = spec.terminal_grad(ws.states[n])
        for i in range(n - 1, -1, -1):
            gx, gu = spec.stage_grads(ws.states[i], ws.u_phys[i])
            grad[i * nu : (i + 1) * nu] = gu + fu_list[i].T @ lam
            lam = gx + k_gain.T @ gu + fx_list[i].T @ lam
        return grad

    def cons(self, u) -> np.ndarray:
        ws = self._ws(u)
        spec = self.spec
        rows = np.zeros(self.n_g)
        pos = 0
        u_box = spec.model.u_box
        for i in range(spec.n):
            for j in range(spec.model.nu):
                if np.isfinite(u_box.hi[j]):
                    rows[pos] = ws.u_phys[i][j] - u_box.hi[j]
                    pos += 1
                if np.isfinite(u_box.lo[j]):
                    rows[pos] = u_box.lo[j] - ws.u_phys[i][j]
                    pos += 1
        x_box = spec.model.x_box
        for i in range(1, spec.n):
            for j in range(spec.model.nx):
                if np.isfinite(x_box.hi[j]):
                    rows[pos] = ws.states[i][j] - x_box.hi[j]
                    pos += 1
                if np.isfinite(x_box.lo[j]):
                    rows[pos] = x_box.lo[j] - ws.states[i][j]
                    pos += 1
        term = spec.terminal_set
        x_n = ws.states[spec.n]
        if term.kind == "polyhedron":
            count = term.polyhedron.n_rows
            rows[pos : pos + count] = term.polyhedron.a @ x_n - term.polyhedron.b
            pos += count
        elif term.kind == "equality":
            for j in range(spec.model.nx):
                rows[pos] = x_n[j] - term.x_target[j] - term.tol
                rows[pos + 1] = term.x_target[j] - x_n[j] - term.tol
                pos += 2
        return rows

    def jac(self, u) -> np.ndarray:
        ws = self._ws(u)
        spec = self.spec
        sens = ws.sensitivities()
        jac = np.zeros((self.n_g, self.dim_u))
        pos = 0
        u_box = spec.model.u_box
        for i in range(spec.n):
            u_jac = ws.input_jacobian(i)
            for j in range(spec.model.nu):
                if np.isfinite(u_box.hi[j]):
                    jac[pos] = u_jac[j]
                    pos += 1
                if np.isfinite(u_box.lo[j]):
                    jac[pos] = -u_jac[j]
                    pos += 1
        x_box = spec.model.x_box
        for i in range(1, spec.n):
            for j in range(spec.model.nx):
                if np.isfinite(x_box.hi[j]):
                    jac[pos] = sens[i][j]
                    pos += 1
                if np.isfinite(x_box.lo[j]):
                    jac[pos] = -sens[i][j]
                    pos += 1
        term = spec.terminal_set
        if term.kind == "polyhedron":
            count = term.polyhedron.n_rows
            jac[pos : pos + count] = term.polyhedron.a @ sens[spec.n]
            pos += count
        elif term.kind == "equality":
            for j in range(spec.model.nx):
                jac[pos] = sens[spec.n][j]
                jac[pos + 1] = -sens[spec.n][j]
                pos += 2
        return jac

    def gn_hess(self, u) -> np.ndarray | None:
        """Gauss-Newton cost curvature; exact for linear-quadratic problems."""
        spec = self.spec
        if not spec.is_quadratic:
            return None
        ws = self._ws(u)
        sens = ws.sensitivities()
        cost = spec.stage_cost
        h = np.zeros((self.dim_u, self.dim_u))
        for i in range(spec.n):
            s = sens[i]
            h += s.T @ cost.q @ s
            u_jac = ws.input_jacobian(i)
            h += u_jac.T @ cost.r @ u_jac
        if spec.terminal_p is not None:
            s = sens[spec.n]
            h += s.T @ spec.terminal_p @ s
        return 0.5 * (h + h.T)

    def max_violation(self, u) -> float:
        return float(np.max(self.cons(u), initial=0.0))

    def as_nlp(
        self,
        constant_objective: bool = False,
        feas_tol: float = FEAS_TOL,
        opt_tol: float = 1e-6,
        max_iter: int = 200,
    ) -> NlpProblem:
        if constant_objective:
            return NlpProblem(
                dim=self.dim_u,
                cost=lambda y: 0.0,
                grad=lambda y: np.zeros(self.dim_u),
                cons=self.cons,
                jac=self.jac,
                feas_tol=feas_tol,
                opt_tol=opt_tol,
                max_iter=max_iter,
            )
        return NlpProblem(
            dim=self.dim_u,
            cost=self.cost,
            grad=self.grad,
            cons=self.cons,
            jac=self.jac,
            hess_model=self.gn_hess if self.spec.is_quadratic else None,
            feas_tol=feas_tol,
            opt_tol=opt_tol,
            max_iter=max_iter,
        )


def condense(spec: OcpSpec, x0) -> CondensedOcp:
    """Build the input-only problem at ``x0`` (row order documented above)."""
    x0 = np.asarray(x0, dtype=float).ravel()
    model = spec.model
    if x0.size != model.nx:
        raise ValueError(f"x0 has dimension {x0.size}, expected {model.nx}")
    n_input = int(np.isfinite(model.u_box.lo).sum() + np.isfinite(model.u_box.hi).sum())
    n_state = int(np.isfinite(model.x_box.lo).sum() + np.isfinite(model.x_box.hi).sum())
    blocks: list[tuple[str, int, int]] = []
    pos = 0
    blocks.append(("input_box", pos, pos + spec.n * n_input))
    pos += spec.n * n_input
    blocks.append(("state_box", pos, pos + (spec.n - 1) * n_state))
    pos += (spec.n - 1) * n_state
    if spec.terminal_set.kind == "polyhedron":
        count = spec.terminal_set.polyhedron.n_rows
    elif spec.terminal_set.kind == "equality":
        count = 2 * model.nx
    else:
        count = 0
    blocks.append(("terminal", pos, pos + count))
    pos += count
    return CondensedOcp(spec=spec, x0=x0, dim_u=spec.dim_u, n_g=pos, row_blocks=blocks)


def grad_cost(condensed: CondensedOcp, u) -> np.ndarray:
    """Exact objective gradient via the backward adjoint sweep."""
    return condensed.grad(u)


def try_feasible_seed(
    spec: OcpSpec, x0, u_init=None, feas_tol: float = FEAS_TOL
) -> np.ndarray | None:
    """Constraint-only solve (constant objective); None when infeasible."""
    cond = condense(spec, x0)
    u = spec.equilibrium_stack() if u_init is None else np.asarray(u_init, dtype=float).copy()
    if cond.max_violation(u) <= feas_tol:
        return u
    problem = cond.as_nlp(constant_objective=True, feas_tol=feas_tol)
    y, ok, _ = restore_feasibility(problem, u)
    return y if ok else None


def feasible_seed(spec: OcpSpec, x0, u_init=None, feas_tol: float = FEAS_TOL) -> np.ndarray:
    """Like :func:`try_feasible_seed` but raising on infeasibility."""
    seed = try_feasible_seed(spec, x0, u_init=u_init, feas_tol=feas_tol)
    if seed is None:
        raise InfeasibleProblemError(
            "no feasible input stack found (initial state outside the region of attraction)"
        )
    return seed


def solve_ocp(
    spec: OcpSpec,
    x0,
    u_start=None,
    feas_tol: float = FEAS_TOL,
    opt_tol: float = 1e-6,
    max_iter: int = 200,
) -> tuple[SolverResult, CondensedOcp]:
    """Solve the full condensed problem from a feasible start.

    When ``u_start`` is None a feasible seed is computed first; raises
    :class:`InfeasibleProblemError` if none exists.
    """
    cond = condense(spec, x0)
    if u_start is None:
        u_start = feasible_seed(spec, x0, feas_tol=feas_tol)
    problem = cond.as_nlp(feas_tol=feas_tol, opt_tol=opt_tol, max_iter=max_iter)
    result = sqp_solve(problem, u_start, feasible_start=True)
    return result, cond


def check_terminal_ingredients(spec: OcpSpec, n_samples: int = 200, seed: int = 0) -> None:
    """Sample the terminal set and verify the terminal feedback is admissible."""
    if spec.kappa is None or spec.terminal_set.kind == "none":
        return
    model = spec.model
    rng = np.random.default_rng(seed)
    if spec.terminal_set.kind == "equality":
        points = [np.asarray(spec.terminal_set.x_target, dtype=float)]
    else:
        poly = spec.terminal_set.polyhedron
        lo = np.where(np.isfinite(model.x_box.lo), model.x_box.lo, -1.0)
        hi = np.where(np.isfinite(model.x_box.hi), model.x_box.hi, 1.0)
        points = []
        attempts = 0
        while len(points) < n_samples and attempts < 200 * n_samples:
            x = rng.uniform(lo, hi)
            attempts += 1
            if poly.contains(x):
                points.append(x)
        if not points:
            raise ValueError("could not sample the terminal polyhedron")
    for x in points:
        u = np.asarray(spec.kappa(x), dtype=float)
        if not model.u_box.contains(u, tol=1e-9):
            raise ValueError("terminal feedback leaves the input box on the terminal set")
