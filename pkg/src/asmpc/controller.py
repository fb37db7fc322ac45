"""Receding-horizon controller optimizing in a reduced input subspace.

Each step solves the reduced problem over ``(v, mu)`` — the active
coordinates plus a scalar scaling of the inactive component of the current
feasible guess — re-evaluates the candidate's full cost, and adopts it only
if it does not exceed the guess cost; otherwise the guess itself is
applied.  The guess for the next step is constructed from the adopted
stack, either by shift-and-append with the terminal feedback or by the
steady-input insertion used for problems without terminal ingredients.
The controller therefore carries memory ``(u_tilde, w_tilde)`` and acts as
a dynamic feedback.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .models.core import apply_transform, invert_transform, step as model_step
from .nlp import NlpProblem, SolverResult, restore_feasibility, sqp_solve
from .ocp import CondensedOcp, FEAS_TOL, InfeasibleProblemError, OcpSpec, condense, feasible_seed
from .subspace import Projector

__all__ = [
    "ControllerOptions",
    "ControllerState",
    "GuessConstructor",
    "StepOutcome",
    "RecursiveFeasibilityError",
    "ConstructorContractError",
    "initialize",
    "build_reduced",
    "build_naive_reduced",
    "make_guess",
    "controller_step",
    "guess_cost_shortcut",
]


class RecursiveFeasibilityError(RuntimeError):
    """A constructed guess violated the constraints beyond tolerance."""

    def __init__(self, step_index: int, violation: float, tol: float):
        super().__init__(
            f"guess at step {step_index} violates constraints by {violation:.3e} "
            f"(tolerance {tol:.1e})"
        )
        self.step_index = step_index
        self.violation = violation


class ConstructorContractError(RuntimeError):
    """The terminal feedback produced an inadmissible input."""


@dataclass(frozen=True)
class ControllerOptions:
    """Tolerances and caps for one closed-loop configuration.

    ``solver_feas_tol`` is kept a couple of orders tighter than
    ``guess_tol`` so that adopted stacks leave slack for the one-step
    amplification a shifted guess can pick up at the terminal rows.
    ``guess_tol`` is 1e-6 for terminal-ingredient plants and loosened for
    the terminal-free economic setup whose constructor is only
    approximately feasible (restoration then pulls it back).
    """

    solver_feas_tol: float = 1e-8
    guess_tol: float = FEAS_TOL
    opt_tol: float = 1e-6
    max_sqp_iter: int = 60
    restore_bad_guess: bool = False


@dataclass
class ControllerState:
    """Controller memory: current feasible guess and its inactive image."""

    u_tilde: np.ndarray
    w_tilde: np.ndarray
    k: int
    u_prev: np.ndarray | None = None


@dataclass(frozen=True)
class GuessConstructor:
    """shift_terminal: drop the first stage, append the terminal feedback.
    turnpike_insert: drop the first stage and insert the steady input at
    ``insert_index`` (default mid-horizon), keeping the tail in place."""

    kind: str = "shift_terminal"
    insert_index: int | None = None

    def __post_init__(self):
        if self.kind not in ("shift_terminal", "turnpike_insert"):
            raise ValueError(f"unknown constructor kind {self.kind!r}")


@dataclass
class StepOutcome:
    applied_u: np.ndarray  # physical first-stage input
    u_stack: np.ndarray  # adopted decision stack
    mode: str  # reduced_optimal | fallback_guess
    cost_guess: float
    cost_solution: float
    guess_violation: float
    solution_violation: float
    x_next: np.ndarray
    solver: SolverResult | None = None


def initialize(
    spec: OcpSpec, proj: Projector, x0, opts: ControllerOptions = ControllerOptions()
) -> ControllerState:
    """Solve the constant-objective problem at ``x0`` for the first guess.

    Raises :class:`~asmpc.ocp.InfeasibleProblemError` when the full problem
    is infeasible (initial state outside the region of attraction).
    """
    u0 = feasible_seed(spec, x0, feas_tol=min(opts.guess_tol, FEAS_TOL))
    w0 = proj.t2.T @ u0 if proj.t2.shape[1] else np.zeros(0)
    return ControllerState(u_tilde=u0, w_tilde=w0, k=0)


def _reduced_problem(
    spec: OcpSpec,
    proj: Projector,
    cond: CondensedOcp,
    base: np.ndarray | None,
    opts: ControllerOptions,
) -> tuple[NlpProblem, callable]:
    """Shared construction for the reduced and naive-reduced problems.

    ``base`` is the frozen inactive component ``T2 w_tilde`` (None for the
    naive problem, which has no scaling variable)."""
    t1 = proj.t1
    q = proj.q
    if base is None:
        mix = t1
        dim = q
    else:
        mix = np.hstack([t1, base[:, None]])
        dim = q + 1

    def decode(y):
        return mix @ y

    problem = NlpProblem(
        dim=dim,
        cost=lambda y: cond.cost(decode(y)),
        grad=lambda y: mix.T @ cond.grad(decode(y)),
        cons=lambda y: cond.cons(decode(y)),
        jac=lambda y: cond.jac(decode(y)) @ mix,
        hess_model=(lambda y: mix.T @ cond.gn_hess(decode(y)) @ mix)
        if spec.is_quadratic
        else None,
        feas_tol=opts.solver_feas_tol,
        opt_tol=opts.opt_tol,
        max_iter=opts.max_sqp_iter,
    )
    return problem, decode


def build_reduced(
    spec: OcpSpec,
    proj: Projector,
    x_k,
    w_tilde,
    opts: ControllerOptions = ControllerOptions(),
) -> tuple[NlpProblem, callable]:
    """Reduced problem over ``(v, mu)``; the decode closure rebuilds stacks."""
    cond = condense(spec, x_k)
    base = proj.t2 @ np.asarray(w_tilde, dtype=float) if proj.t2.shape[1] else np.zeros(spec.dim_u)
    return _reduced_problem(spec, proj, cond, base, opts)


def build_naive_reduced(
    spec: OcpSpec,
    proj: Projector,
    x_k,
    opts: ControllerOptions = ControllerOptions(),
) -> tuple[NlpProblem, callable]:
    """Reduced problem with the inactive component pinned to zero."""
    cond = condense(spec, x_k)
    return _reduced_problem(spec, proj, cond, None, opts)


def make_guess(ctor: GuessConstructor, spec: OcpSpec, u_prev, x_next) -> np.ndarray:
    """Feasible guess for the next step from the last adopted stack.

    Inputs are emitted in-box by construction; the shifted block reuses the
    previous stages (whose physical inputs and predicted states reproduce
    bit-identically in the nominal loop), and the appended element is
    checked against the input box rather than clipped.
    """
    model = spec.model
    nu, n = model.nu, spec.n
    u_prev = np.asarray(u_prev, dtype=float).ravel()
    if u_prev.size != spec.dim_u:
        raise ValueError("previous stack has the wrong length")
    shifted = u_prev[nu:]
    if ctor.kind == "turnpike_insert":
        insert_at = ctor.insert_index if ctor.insert_index is not None else n // 2
        if not 1 <= insert_at <= n:
            raise ValueError(f"insert index must be in [1, {n}]")
        u_bar = spec.equilibrium_stack()[:nu]
        head = shifted[: (insert_at - 1) * nu]
        tail = shifted[(insert_at - 1) * nu :]
        return np.concatenate([head, u_bar, tail])
    # shift_terminal: re-roll the shifted stages from the measured state and
    # append the terminal feedback at the final predicted state
    if spec.kappa is None:
        raise ValueError("shift_terminal needs a terminal feedback in the spec")
    x = np.asarray(x_next, dtype=float).ravel()
    stages = shifted.reshape(n - 1, nu)
    for i in range(n - 1):
        u_phys = apply_transform(spec.transform, stages[i], x)
        x = model.step_fn(x, u_phys)
    kappa_u = np.asarray(spec.kappa(x), dtype=float).ravel()
    if not model.u_box.contains(kappa_u, tol=1e-9):
        raise ConstructorContractError(
            "terminal feedback output leaves the input box; terminal ingredients are inconsistent"
        )
    last = invert_transform(spec.transform, kappa_u, x)
    return np.concatenate([shifted, last])


def guess_cost_shortcut(
    spec: OcpSpec, cond_prev: CondensedOcp, u_prev, cost_prev: float, guess: np.ndarray, x_next
) -> float:
    """Time-coupled estimate of the guess cost at the next step.

    Reuses the previous open-loop cost: drop the first stage cost, swap the
    old terminal cost for the appended stage plus new terminal cost.  The
    full re-evaluation in :func:`controller_step` remains authoritative;
    this is a cross-check / fast path.
    """
    states = cond_prev.states(u_prev)
    u_phys = cond_prev.physical_inputs(u_prev)
    first_stage = spec.stage_value(states[0], u_phys[0])
    x_term_old = states[spec.n]
    cond_next = condense(spec, np.asarray(x_next, dtype=float))
    g_states = cond_next.states(guess)
    g_phys = cond_next.physical_inputs(guess)
    appended = spec.stage_value(g_states[spec.n - 1], g_phys[spec.n - 1])
    return (
        cost_prev
        - first_stage
        - spec.terminal_value(x_term_old)
        + appended
        + spec.terminal_value(g_states[spec.n])
    )


def controller_step(
    state: ControllerState,
    spec: OcpSpec,
    proj: Projector,
    x_k,
    ctor: GuessConstructor = GuessConstructor(),
    opts: ControllerOptions = ControllerOptions(),
) -> tuple[StepOutcome, ControllerState]:
    """One closed-loop step: solve, cost-decrease check, apply, re-guess."""
    x_k = np.asarray(x_k, dtype=float).ravel()
    cond = condense(spec, x_k)
    u_tilde = state.u_tilde
    viol_guess = cond.max_violation(u_tilde)
    if viol_guess > opts.guess_tol:
        if opts.restore_bad_guess:
            restored, ok, _ = restore_feasibility(
                cond.as_nlp(constant_objective=True, feas_tol=opts.guess_tol), u_tilde
            )
            if ok:
                u_tilde = restored
                viol_guess = cond.max_violation(u_tilde)
        if viol_guess > opts.guess_tol:
            raise RecursiveFeasibilityError(state.k, viol_guess, opts.guess_tol)
    cost_guess = cond.cost(u_tilde)

    base = proj.t2 @ state.w_tilde if proj.t2.shape[1] else np.zeros(spec.dim_u)
    problem, decode = _reduced_problem(spec, proj, cond, base, opts)
    y0 = np.concatenate([proj.t1.T @ u_tilde, [1.0]])
    feasible_flag = viol_guess <= opts.solver_feas_tol
    solver = sqp_solve(problem, y0, feasible_start=feasible_flag)

    u_cand = decode(solver.y)
    cost_cand = cond.cost(u_cand)
    viol_cand = cond.max_violation(u_cand)
    accept = (
        solver.status != "fallback_to_start"
        and cost_cand <= cost_guess
        and viol_cand <= max(opts.solver_feas_tol, viol_guess)
    )
    if accept:
        u_k = u_cand
        mode = "reduced_optimal"
        cost_k, viol_k = cost_cand, viol_cand
    else:
        u_k = u_tilde
        mode = "fallback_guess"
        cost_k, viol_k = cost_guess, viol_guess

    u_phys = apply_transform(spec.transform, u_k[: spec.model.nu], x_k)
    x_next = model_step(spec.model, x_k, u_phys)
    u_next = make_guess(ctor, spec, u_k, x_next)
    w_next = proj.t2.T @ u_next if proj.t2.shape[1] else np.zeros(0)
    outcome = StepOutcome(
        applied_u=u_phys,
        u_stack=u_k,
        mode=mode,
        cost_guess=cost_guess,
        cost_solution=cost_k,
        guess_violation=viol_guess,
        solution_violation=viol_k,
        x_next=x_next,
        solver=solver,
    )
    next_state = ControllerState(u_tilde=u_next, w_tilde=w_next, k=state.k + 1, u_prev=u_k)
    return outcome, next_state
