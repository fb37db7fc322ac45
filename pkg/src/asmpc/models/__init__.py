"""Plant models, input transforms, integrator, and initial-condition sampling."""

from .core import (
    Box,
    DiscreteModel,
    EconomicCostData,
    InitialConditionSet,
    InputTransform,
    IntegrationBlowUpError,
    LinearModel,
    QuadraticCostData,
    Rk4Model,
    apply_transform,
    invert_transform,
    rollout,
    sample_initial_conditions,
    step,
    transform_state_gain,
)
from .plants import (
    PLANT_NAMES,
    PlantBundle,
    cstr_scale,
    load_params,
    make_cstr,
    make_example1,
    make_plant,
    make_robot,
    make_synchrotron,
)

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
    "transform_state_gain",
    "sample_initial_conditions",
    "PLANT_NAMES",
    "PlantBundle",
    "cstr_scale",
    "load_params",
    "make_plant",
    "make_synchrotron",
    "make_robot",
    "make_cstr",
    "make_example1",
]
