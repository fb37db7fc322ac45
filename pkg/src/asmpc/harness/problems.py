"""Assemble per-plant OCP specs: costs, transforms, terminal ingredients.

The linear plant is prestabilized with its LQR gain (which also serves as
terminal feedback inside the invariant terminal set), the arm uses a
terminal equality at the upright equilibrium with the steady input as
terminal feedback, and the reaction tank runs without terminal ingredients
but with inputs shifted by the optimal steady state.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from ..models import InputTransform, PlantBundle, make_plant
from ..numerics import Polyhedron, dare_solve, mpi_set
from ..ocp import OcpSpec, TerminalSet

__all__ = ["build_ocp_spec", "terminal_region", "lqr_gain"]


@lru_cache(maxsize=None)
def _cached_lqr(plant_name: str):
    bundle = make_plant(plant_name)
    model = bundle.model
    return dare_solve(model.a, model.b, bundle.cost.q, bundle.cost.r)


def lqr_gain(plant_name: str):
    """Riccati solution for a linear plant (terminal cost and feedback)."""
    return _cached_lqr(plant_name)


@lru_cache(maxsize=None)
def terminal_region(plant_name: str) -> Polyhedron:
    """Maximal positive invariant set of the LQR loop within the boxes."""
    bundle = make_plant(plant_name)
    model = bundle.model
    sol = _cached_lqr(plant_name)
    state_rows = Polyhedron.from_box(model.x_box.lo, model.x_box.hi)
    input_rows = Polyhedron(
        np.vstack([sol.k, -sol.k]),
        np.concatenate([model.u_box.hi, -model.u_box.lo]),
    )
    return mpi_set(model.a + model.b @ sol.k, state_rows.intersect(input_rows))


def _synchrotron_spec(bundle: PlantBundle, n: int) -> OcpSpec:
    sol = _cached_lqr(bundle.name)
    k = sol.k

    def kappa(x):
        return k @ np.asarray(x, dtype=float)

    return OcpSpec(
        model=bundle.model,
        n=n,
        stage_cost=bundle.cost,
        terminal_set=TerminalSet(kind="polyhedron", polyhedron=terminal_region(bundle.name)),
        transform=InputTransform(
            kind="prestabilize",
            gain=k,
            x_ref=bundle.model.x_eq,
            u_ref=bundle.model.u_eq,
        ),
        terminal_p=sol.p,
        terminal_x_ref=bundle.model.x_eq,
        kappa=kappa,
    )


def _equality_spec(bundle: PlantBundle, n: int) -> OcpSpec:
    u_eq = bundle.model.u_eq.copy()
    return OcpSpec(
        model=bundle.model,
        n=n,
        stage_cost=bundle.cost,
        terminal_set=TerminalSet(kind="equality", x_target=bundle.model.x_eq),
        transform=InputTransform(kind="none"),
        kappa=lambda x: u_eq,
    )


def _cstr_spec(bundle: PlantBundle, n: int) -> OcpSpec:
    return OcpSpec(
        model=bundle.model,
        n=n,
        stage_cost=bundle.cost,
        terminal_set=TerminalSet(kind="none"),
        transform=InputTransform(kind="steady_shift", u_ref=bundle.model.u_eq),
    )


def build_ocp_spec(plant_name: str, n: int | None = None) -> OcpSpec:
    """OCP spec for one of the benchmark plants (or the demo system)."""
    bundle = make_plant(plant_name)
    horizon = bundle.default_horizon if n is None else int(n)
    if bundle.name == "synchrotron":
        return _synchrotron_spec(bundle, horizon)
    if bundle.name in ("robot", "example1"):
        return _equality_spec(bundle, horizon)
    if bundle.name == "cstr":
        return _cstr_spec(bundle, horizon)
    raise ValueError(f"no spec builder for plant {bundle.name!r}")
