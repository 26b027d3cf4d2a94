"""Planar walker with a rigid or stabilised head.

Submodules
----------
body      parameters, gains and state containers
dynamics  actuation laws, simulation and the cart model
gait      limit cycles, limit kernels and cycle traces
terrain   rough-ground slopes and first-passage estimation
linear    linearised upper body on a cart, frequency and impulse responses
sweep     randomised parameter sweeps
io        delimited output writers
cli       command-line entry point
"""
from .body import (MODEL_A, MODEL_B, REFERENCE_STATES, BodyParams, ControlGains,
                   ModelKind, WalkerState)
from .dynamics import IntegratorConfig, SimulationError, simulate

__version__ = "0.1.0"

__all__ = [
    "MODEL_A", "MODEL_B", "REFERENCE_STATES", "BodyParams", "ControlGains",
    "ModelKind", "WalkerState", "IntegratorConfig", "SimulationError", "simulate",
    "__version__",
]
