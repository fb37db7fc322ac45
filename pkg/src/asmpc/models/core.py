"""Discrete-time plant models, input re-parameterizations, and sampling.

Models are immutable after construction; stepping and rollout are pure, so
they are safe to share between concurrent closed-loop runs.  Continuous-time
plants are discretized with one classical 4th-order Runge-Kutta step per
sample interval, with analytic Jacobians chained through the stages.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "Box",
    "DiscreteModel",
    "LinearModel",
    "Rk4Model",
    "InputTransform",
    "InitialConditionSet",
    "IntegrationBlowUpError",
    "QuadraticCostData",
    "EconomicCostData",
    "step",
    "rollout",
    "apply_transform",
    "invert_transform",
    "sample_initial_conditions",
]

BLOWUP_LIMIT = 1e6


class IntegrationBlowUpError(RuntimeError):
    """A step produced a non-finite or absurdly large state."""

    def __init__(self, x, u, stage: int | None = None):
        where = "" if stage is None else f" at rollout stage {stage}"
        super().__init__(f"integration blow-up{where}")
        self.x = np.asarray(x, dtype=float)
        self.u = np.asarray(u, dtype=float)
        self.stage = stage


@dataclass(frozen=True)
class Box:
    """Axis-aligned interval bounds; entries may be +-inf (unconstrained)."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).ravel()
        hi = np.asarray(self.hi, dtype=float).ravel()
        if lo.shape != hi.shape:
            raise ValueError("box bounds must have matching shapes")
        if np.any(lo > hi):
            raise ValueError("box has lo > hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.size

    def contains(self, x, tol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=float).ravel()
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))

    def violation(self, x) -> float:
        x = np.asarray(x, dtype=float).ravel()
        lower = np.where(np.isfinite(self.lo), self.lo - x, -np.inf)
        upper = np.where(np.isfinite(self.hi), x - self.hi, -np.inf)
        return float(max(np.max(lower, initial=0.0), np.max(upper, initial=0.0)))

    def shrink(self, factor: float) -> "Box":
        mid = np.where(np.isfinite(self.lo) & np.isfinite(self.hi), 0.5 * (self.lo + self.hi), 0.0)
        lo = np.where(np.isfinite(self.lo), mid + factor * (self.lo - mid), self.lo)
        hi = np.where(np.isfinite(self.hi), mid + factor * (self.hi - mid), self.hi)
        return Box(lo, hi)


class DiscreteModel:
    """State-transition map with constraint boxes and equilibrium data."""

    def __init__(self, name: str, nx: int, nu: int, x_box: Box, u_box: Box,
                 x_eq, u_eq, sample_time: float):
        self.name = name
        self.nx = nx
        self.nu = nu
        self.x_box = x_box
        self.u_box = u_box
        self.x_eq = np.asarray(x_eq, dtype=float).ravel()
        self.u_eq = np.asarray(u_eq, dtype=float).ravel()
        self.sample_time = float(sample_time)
        if not x_box.contains(self.x_eq):
            raise ValueError(f"{name}: state box does not contain the equilibrium")
        if not u_box.contains(self.u_eq):
            raise ValueError(f"{name}: input box does not contain the equilibrium input")

    def step_fn(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def step_with_jac(self, x: np.ndarray, u: np.ndarray):
        raise NotImplementedError


class LinearModel(DiscreteModel):
    """Exact linear update ``x+ = A x + B u`` (no integrator involved)."""

    def __init__(self, name, a, b, x_box, u_box, sample_time, x_eq=None, u_eq=None):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        nx, nu = b.shape
        super().__init__(
            name, nx, nu, x_box, u_box,
            np.zeros(nx) if x_eq is None else x_eq,
            np.zeros(nu) if u_eq is None else u_eq,
            sample_time,
        )
        self.a = a
        self.b = b

    def step_fn(self, x, u):
        return self.a @ x + self.b @ u

    def step_with_jac(self, x, u):
        return self.a @ x + self.b @ u, self.a, self.b


class Rk4Model(DiscreteModel):
    """One classical RK4 step of ``xdot = ode(x, u)`` per sample interval.

    ``ode_jac(x, u)`` must return ``(f, df/dx, df/du)``; the discrete-step
    Jacobians are chained through the four stages analytically.
    """

    def __init__(self, name, ode, ode_jac, x_box, u_box, x_eq, u_eq, sample_time,
                 substeps: int = 1):
        super().__init__(name, len(np.ravel(x_eq)), len(np.ravel(u_eq)),
                         x_box, u_box, x_eq, u_eq, sample_time)
        self.ode = ode
        self.ode_jac = ode_jac
        self.substeps = int(substeps)

    def step_fn(self, x, u):
        h = self.sample_time / self.substeps
        z = np.asarray(x, dtype=float)
        for _ in range(self.substeps):
            k1 = self.ode(z, u)
            k2 = self.ode(z + 0.5 * h * k1, u)
            k3 = self.ode(z + 0.5 * h * k2, u)
            k4 = self.ode(z + h * k3, u)
            z = z + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        return z

    def step_with_jac(self, x, u):
        h = self.sample_time / self.substeps
        z = np.asarray(x, dtype=float)
        fx = np.eye(self.nx)
        fu = np.zeros((self.nx, self.nu))
        for _ in range(self.substeps):
            f1, a1, b1 = self.ode_jac(z, u)
            k1 = h * f1
            k1x = h * a1
            k1u = h * b1
            f2, a2, b2 = self.ode_jac(z + 0.5 * k1, u)
            k2 = h * f2
            k2x = h * a2 @ (np.eye(self.nx) + 0.5 * k1x)
            k2u = h * (0.5 * a2 @ k1u + b2)
            f3, a3, b3 = self.ode_jac(z + 0.5 * k2, u)
            k3 = h * f3
            k3x = h * a3 @ (np.eye(self.nx) + 0.5 * k2x)
            k3u = h * (0.5 * a3 @ k2u + b3)
            f4, a4, b4 = self.ode_jac(z + k3, u)
            k4 = h * f4
            k4x = h * a4 @ (np.eye(self.nx) + k3x)
            k4u = h * (a4 @ k3u + b4)
            z = z + (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
            step_x = np.eye(self.nx) + (k1x + 2.0 * k2x + 2.0 * k3x + k4x) / 6.0
            step_u = (k1u + 2.0 * k2u + 2.0 * k3u + k4u) / 6.0
            fu = step_x @ fu + step_u
            fx = step_x @ fx
        return z, fx, fu


def step(model: DiscreteModel, x, u) -> np.ndarray:
    """Advance one sample interval, guarding against integrator blow-up."""
    x = np.asarray(x, dtype=float).ravel()
    u = np.asarray(u, dtype=float).ravel()
    if x.size != model.nx or u.size != model.nu:
        raise ValueError(
            f"dimension mismatch: expected ({model.nx}, {model.nu}), got ({x.size}, {u.size})"
        )
    nxt = model.step_fn(x, u)
    if not np.all(np.isfinite(nxt)) or np.max(np.abs(nxt)) > BLOWUP_LIMIT:
        raise IntegrationBlowUpError(x, u)
    return nxt


def rollout(model: DiscreteModel, x0, u_seq) -> np.ndarray:
    """States ``x_0..x_N`` under the input sequence (shape (N, nu))."""
    u_seq = np.atleast_2d(np.asarray(u_seq, dtype=float))
    if u_seq.size == 0:
        u_seq = u_seq.reshape(0, model.nu)
    if not np.all(np.isfinite(u_seq)):
        raise ValueError("rollout inputs must be finite")
    states = np.zeros((u_seq.shape[0] + 1, model.nx))
    states[0] = np.asarray(x0, dtype=float).ravel()
    for i in range(u_seq.shape[0]):
        try:
            states[i + 1] = step(model, states[i], u_seq[i])
        except IntegrationBlowUpError as exc:
            raise IntegrationBlowUpError(exc.x, exc.u, stage=i) from None
    return states


@dataclass(frozen=True)
class InputTransform:
    """Map from transformed decision inputs ``u_c`` to physical inputs.

    kinds: ``none`` (identity), ``prestabilize`` (u = u_ref + K(x - x_ref)
    + u_c), ``steady_shift`` (u = u_ref + u_c).  The round trip through
    :func:`invert_transform` is exact.
    """

    kind: str = "none"
    gain: np.ndarray | None = None
    x_ref: np.ndarray | None = None
    u_ref: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("none", "prestabilize", "steady_shift"):
            raise ValueError(f"unknown transform kind {self.kind!r}")
        if self.kind == "prestabilize" and (self.gain is None or self.x_ref is None or self.u_ref is None):
            raise ValueError("prestabilize requires gain, x_ref, u_ref")
        if self.kind == "steady_shift" and self.u_ref is None:
            raise ValueError("steady_shift requires u_ref")


def apply_transform(t: InputTransform, u_c, x) -> np.ndarray:
    u_c = np.asarray(u_c, dtype=float).ravel()
    if t.kind == "none":
        return u_c
    if t.kind == "steady_shift":
        return np.asarray(t.u_ref) + u_c
    x = np.asarray(x, dtype=float).ravel()
    return np.asarray(t.u_ref) + np.asarray(t.gain) @ (x - np.asarray(t.x_ref)) + u_c


def invert_transform(t: InputTransform, u_phys, x) -> np.ndarray:
    u_phys = np.asarray(u_phys, dtype=float).ravel()
    if t.kind == "none":
        return u_phys
    if t.kind == "steady_shift":
        return u_phys - np.asarray(t.u_ref)
    x = np.asarray(x, dtype=float).ravel()
    return u_phys - np.asarray(t.u_ref) - np.asarray(t.gain) @ (x - np.asarray(t.x_ref))


def transform_state_gain(t: InputTransform, nx: int, nu: int) -> np.ndarray:
    """d(physical input)/d(state) for a fixed decision input."""
    if t.kind == "prestabilize":
        return np.asarray(t.gain, dtype=float)
    return np.zeros((nu, nx))


@dataclass(frozen=True)
class InitialConditionSet:
    """Uniform sampling box or an explicit list of initial states."""

    box: Box | None = None
    points: np.ndarray | None = None

    def __post_init__(self):
        if (self.box is None) == (self.points is None):
            raise ValueError("provide exactly one of box or points")
        if self.points is not None:
            object.__setattr__(self, "points", np.atleast_2d(np.asarray(self.points, dtype=float)))


def sample_initial_conditions(ics: InitialConditionSet, n: int, seed: int,
                              x_box: Box | None = None) -> np.ndarray:
    """Deterministic set of ``n`` initial states; membership in the plant
    state box is validated when one is given."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if ics.points is not None:
        if n > ics.points.shape[0]:
            raise ValueError(f"requested {n} points but only {ics.points.shape[0]} configured")
        samples = ics.points[:n].copy()
    else:
        box = ics.box
        if not (np.all(np.isfinite(box.lo)) and np.all(np.isfinite(box.hi))):
            raise ValueError("sampling box must be bounded")
        rng = np.random.default_rng(seed)
        samples = rng.uniform(box.lo, box.hi, size=(n, box.dim))
        degenerate = box.hi == box.lo
        if np.any(degenerate):
            samples[:, degenerate] = box.lo[degenerate]
    if x_box is not None:
        for i, x in enumerate(samples):
            if not x_box.contains(x):
                raise ValueError(f"sampled initial condition {i} violates the state box")
    return samples


@dataclass(frozen=True)
class QuadraticCostData:
    """Stage cost 0.5(|x - x_ref|_Q^2 + |u - u_ref|_R^2) in matrix form."""

    q: np.ndarray
    r: np.ndarray
    x_ref: np.ndarray
    u_ref: np.ndarray


@dataclass(frozen=True)
class EconomicCostData:
    """Generic smooth stage cost given by value/gradient callbacks."""

    value: Callable[[np.ndarray, np.ndarray], float]
    grad_x: Callable[[np.ndarray, np.ndarray], np.ndarray]
    grad_u: Callable[[np.ndarray, np.ndarray], np.ndarray]
