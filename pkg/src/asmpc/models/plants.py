"""Benchmark plants: linear synchrotron, planar 2-DoF arm, reaction tank.

Each plant loads its constants from a key/value parameter file shipped with
the package (see README for the schema) and is returned as a
:class:`PlantBundle` grouping the model, stage-cost data, default transform
and terminal-ingredient kinds, and the initial-condition sampling box.

The reaction tank works internally in scaled units (concentrations x 1e-3,
temperatures x 1e-2, flow x 1e-1); ``cstr_scale`` converts between raw and
scaled coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    Box,
    DiscreteModel,
    EconomicCostData,
    LinearModel,
    QuadraticCostData,
    Rk4Model,
)

__all__ = [
    "PlantBundle",
    "load_params",
    "make_synchrotron",
    "make_robot",
    "make_cstr",
    "make_example1",
    "make_plant",
    "cstr_scale",
    "PLANT_NAMES",
]

_DATA_DIR = Path(__file__).parent / "data"

PLANT_NAMES = ("synchrotron", "robot", "cstr")


@dataclass(frozen=True)
class PlantBundle:
    """A plant plus the configuration the benchmark problems build on."""

    name: str
    model: DiscreteModel
    cost: QuadraticCostData | EconomicCostData
    transform_kind: str  # none | prestabilize | steady_shift
    terminal_kind: str  # mpi | equality | none
    default_horizon: int
    x0_box: Box
    params: dict


def _parse_value(text: str):
    text = text.strip()
    if ";" in text:
        return np.array([[float(v) for v in row.split(",")] for row in text.split(";")])
    if "," in text:
        return np.array([float(v) for v in text.split(",")])
    return float(text)


def load_params(name: str) -> dict:
    """Parse one of the shipped ``key = value`` plant parameter files."""
    path = _DATA_DIR / f"{name}.params"
    params: dict = {}
    for raw_line in path.read_text().splitlines():
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path.name}: malformed line {raw_line!r}")
        key, value = line.split("=", 1)
        params[key.strip()] = _parse_value(value)
    return params


def make_synchrotron() -> PlantBundle:
    p = load_params("synchrotron")
    model = LinearModel(
        "synchrotron",
        p["a"],
        p["b"],
        Box(p["x_lo"], p["x_hi"]),
        Box(p["u_lo"], p["u_hi"]),
        p["sample_time"],
    )
    cost = QuadraticCostData(
        q=np.diag(p["q_diag"]), r=np.diag(p["r_diag"]),
        x_ref=np.zeros(4), u_ref=np.zeros(2),
    )
    return PlantBundle(
        name="synchrotron",
        model=model,
        cost=cost,
        transform_kind="prestabilize",
        terminal_kind="mpi",
        default_horizon=int(p["horizon"]),
        x0_box=Box(p["x0_lo"], p["x0_hi"]),
        params=p,
    )


def make_robot() -> PlantBundle:
    p = load_params("robot_2dof")
    m1, m2 = p["m1"], p["m2"]
    l1, lc1, lc2 = p["l1"], p["lc1"], p["lc2"]
    i1, i2, grav = p["i1"], p["i2"], p["gravity"]
    a1 = i1 + i2 + m1 * lc1**2 + m2 * (l1**2 + lc2**2)
    a2 = m2 * l1 * lc2
    a3 = i2 + m2 * lc2**2
    g1 = (m1 * lc1 + m2 * l1) * grav
    g2 = m2 * lc2 * grav

    def inertia(c2):
        return np.array([[a1 + 2.0 * a2 * c2, a3 + a2 * c2], [a3 + a2 * c2, a3]])

    def ode(x, u):
        th2 = x[1]
        w = x[2:]
        s2, c2 = math.sin(th2), math.cos(th2)
        c1 = math.cos(x[0])
        c12 = math.cos(x[0] + th2)
        cor = a2 * s2 * np.array([-2.0 * w[0] * w[1] - w[1] ** 2, w[0] ** 2])
        grav_vec = np.array([g1 * c1 + g2 * c12, g2 * c12])
        acc = np.linalg.solve(inertia(c2), u - cor - grav_vec)
        return np.concatenate([w, acc])

    def ode_jac(x, u):
        th1, th2 = x[0], x[1]
        w = x[2:]
        s1 = math.sin(th1)
        s2, c2 = math.sin(th2), math.cos(th2)
        s12 = math.sin(th1 + th2)
        c1 = math.cos(th1)
        c12 = math.cos(th1 + th2)
        b_mat = inertia(c2)
        cor = a2 * s2 * np.array([-2.0 * w[0] * w[1] - w[1] ** 2, w[0] ** 2])
        grav_vec = np.array([g1 * c1 + g2 * c12, g2 * c12])
        rhs = u - cor - grav_vec
        b_inv = np.linalg.inv(b_mat)
        acc = b_inv @ rhs
        # partials of the torque balance
        dcor_dw = a2 * s2 * np.array([[-2.0 * w[1], -2.0 * w[0] - 2.0 * w[1]], [2.0 * w[0], 0.0]])
        dcor_dth2 = a2 * c2 * np.array([-2.0 * w[0] * w[1] - w[1] ** 2, w[0] ** 2])
        dgrav = np.array(
            [[-g1 * s1 - g2 * s12, -g2 * s12], [-g2 * s12, -g2 * s12]]
        )
        db_dth2 = np.array([[-2.0 * a2 * s2, -a2 * s2], [-a2 * s2, 0.0]])
        dacc_dth = np.zeros((2, 2))
        dacc_dth[:, 0] = b_inv @ (-dgrav[:, 0])
        dacc_dth[:, 1] = b_inv @ (-dcor_dth2 - dgrav[:, 1] - db_dth2 @ acc)
        dacc_dw = b_inv @ (-dcor_dw)
        fx = np.zeros((4, 4))
        fx[0:2, 2:4] = np.eye(2)
        fx[2:4, 0:2] = dacc_dth
        fx[2:4, 2:4] = dacc_dw
        fu = np.zeros((4, 2))
        fu[2:4, :] = b_inv
        return np.concatenate([w, acc]), fx, fu

    wb = p["omega_bound"]
    tb = p["torque_bound"]
    x_eq = np.concatenate([p["theta_eq"], np.zeros(2)])
    model = Rk4Model(
        "robot",
        ode,
        ode_jac,
        Box([-np.inf, -np.inf, -wb, -wb], [np.inf, np.inf, wb, wb]),
        Box([-tb, -tb], [tb, tb]),
        x_eq,
        np.zeros(2),
        p["sample_time"],
    )
    cost = QuadraticCostData(
        q=np.diag(p["q_diag"]), r=np.diag(p["r_diag"]), x_ref=x_eq, u_ref=np.zeros(2)
    )
    return PlantBundle(
        name="robot",
        model=model,
        cost=cost,
        transform_kind="none",
        terminal_kind="equality",
        default_horizon=int(p["horizon"]),
        x0_box=Box(p["x0_lo"], p["x0_hi"]),
        params=p,
    )


def cstr_scale() -> np.ndarray:
    """Per-coordinate factors mapping raw (mol/m^3, degC, 1/h) to scaled units."""
    return np.array([1e-3, 1e-3, 1e-2]), np.array([1e-1, 1e-2])


def make_cstr() -> PlantBundle:
    p = load_params("cstr")
    k10, k20, k30 = p["k10"], p["k20"], p["k30"]
    e1, e2, e3, t_abs = p["e1"], p["e2"], p["e3"], p["t_abs"]
    dh = np.array([p["dh_ab"], p["dh_bc"], p["dh_ad"]])
    delta, alpha = p["delta"], p["alpha"]
    c_in_scaled = p["c_in"] * 1e-3
    t_in = p["t_in"]
    eps_reg = p["eps_reg"]

    def rates(temp_c):
        inv = 1.0 / (temp_c + t_abs)
        return (
            k10 * math.exp(-e1 * inv),
            k20 * math.exp(-e2 * inv),
            k30 * math.exp(-e3 * inv),
        )

    def ode(x, u):
        ca, cb, th = x
        temp = 100.0 * th
        q = 10.0 * u[0]
        k1, k2, k3 = rates(temp)
        dca = -k1 * ca - 2.0 * k3 * ca * ca + (c_in_scaled - ca) * q
        dcb = k1 * ca - k2 * cb - cb * q
        heat = -delta * (k1 * ca * dh[0] + k2 * cb * dh[1] + 2.0 * k3 * ca * ca * dh[2])
        dtemp = heat + alpha * (100.0 * u[1] - temp) + (t_in - temp) * q
        return np.array([dca, dcb, dtemp / 100.0])

    def ode_jac(x, u):
        ca, cb, th = x
        temp = 100.0 * th
        q = 10.0 * u[0]
        k1, k2, k3 = rates(temp)
        inv = 1.0 / (temp + t_abs)
        # d k_i / d th = 100 * k_i * e_i / (T + t_abs)^2
        dk1 = 100.0 * k1 * e1 * inv * inv
        dk2 = 100.0 * k2 * e2 * inv * inv
        dk3 = 100.0 * k3 * e3 * inv * inv
        f = ode(x, u)
        fx = np.zeros((3, 3))
        fx[0, 0] = -k1 - 4.0 * k3 * ca - q
        fx[0, 2] = -dk1 * ca - 2.0 * dk3 * ca * ca
        fx[1, 0] = k1
        fx[1, 1] = -k2 - q
        fx[1, 2] = dk1 * ca - dk2 * cb
        heat_th = -delta * (dk1 * ca * dh[0] + dk2 * cb * dh[1] + 2.0 * dk3 * ca * ca * dh[2])
        fx[2, 0] = -delta * (k1 * dh[0] + 4.0 * k3 * ca * dh[2]) / 100.0
        fx[2, 1] = -delta * k2 * dh[1] / 100.0
        fx[2, 2] = (heat_th - 100.0 * alpha - 100.0 * q) / 100.0
        fu = np.zeros((3, 2))
        fu[0, 0] = 10.0 * (c_in_scaled - ca)
        fu[1, 0] = -10.0 * cb
        fu[2, 0] = 10.0 * (t_in - temp) / 100.0
        fu[2, 1] = alpha
        return f, fx, fu

    x_scale, u_scale = cstr_scale()
    model = Rk4Model(
        "cstr",
        ode,
        ode_jac,
        Box(p["x_lo"] * x_scale, p["x_hi"] * x_scale),
        Box(p["u_lo"] * u_scale, p["u_hi"] * u_scale),
        p["x_ss"],
        p["u_ss"],
        p["sample_time"],
    )

    def econ_value(x, u):
        return float(-x[1] * u[0] + eps_reg * (u @ u))

    def econ_grad_x(x, u):
        return np.array([0.0, -u[0], 0.0])

    def econ_grad_u(x, u):
        return np.array([-x[1] + 2.0 * eps_reg * u[0], 2.0 * eps_reg * u[1]])

    cost = EconomicCostData(value=econ_value, grad_x=econ_grad_x, grad_u=econ_grad_u)
    return PlantBundle(
        name="cstr",
        model=model,
        cost=cost,
        transform_kind="steady_shift",
        terminal_kind="none",
        default_horizon=int(p["horizon"]),
        x0_box=Box(p["x0_lo"], p["x0_hi"]),
        params=p,
    )


def make_example1() -> PlantBundle:
    """Controllable 2-state single-input system for the infeasibility demo.

    Unconstrained apart from a terminal equality at the origin; freezing all
    but the first decision entry leaves too few degrees of freedom for the
    two terminal equations.
    """
    model = LinearModel(
        "example1",
        np.array([[1.0, 1.0], [0.0, 1.0]]),
        np.array([[0.5], [1.0]]),
        Box([-np.inf, -np.inf], [np.inf, np.inf]),
        Box([-np.inf], [np.inf]),
        1.0,
    )
    cost = QuadraticCostData(
        q=2.0 * np.eye(2), r=2.0 * np.eye(1), x_ref=np.zeros(2), u_ref=np.zeros(1)
    )
    return PlantBundle(
        name="example1",
        model=model,
        cost=cost,
        transform_kind="none",
        terminal_kind="equality",
        default_horizon=5,
        x0_box=Box([-1.0, -1.0], [1.0, 1.0]),
        params={},
    )


def make_plant(name: str) -> PlantBundle:
    makers = {
        "synchrotron": make_synchrotron,
        "robot": make_robot,
        "cstr": make_cstr,
        "example1": make_example1,
    }
    if name not in makers:
        raise ValueError(f"unknown plant {name!r}; choose from {sorted(makers)}")
    return makers[name]()
