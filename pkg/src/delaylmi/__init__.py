"""Exponential stability and stabilization of linear systems with distributed delays."""

import os

__version__ = "0.1.0"

from .systems import (  # noqa: E402
    ControlledSystem,
    DelaySystem,
    EpsilonProfile,
    EPS_NEQ_ONE,
    EPS_ONE,
    example_controlled,
    example_system1,
    example_system2,
)
from .stability import certify, feasibility, is_feasible, exp_factor  # noqa: E402


def data_path(name):
    """Path of a bundled example file (``system1.json``, ``system2.json``, ``controlled.json``)."""
    return os.path.join(os.path.dirname(__file__), "data", name)
