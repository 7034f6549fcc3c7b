"""Linear-quadratic mean field control and games."""

import json

import numpy as np

from . import _core
from ._core import (
    CflViolation,
    DimensionMismatch,
    InvalidModel,
    MasterLQError,
    NonConvergence,
    NumericalFailure,
    RiccatiBlowUp,
    run_cli,
    worker_count,
)

__all__ = [
    "CflViolation",
    "DimensionMismatch",
    "InvalidModel",
    "MasterLQError",
    "NonConvergence",
    "NumericalFailure",
    "RiccatiBlowUp",
    "hjbfp_cross_validation",
    "lift_identities",
    "riccati",
    "run_cli",
    "simulate_cost",
    "worker_count",
]


def _model_text(model):
    return model if isinstance(model, str) else json.dumps(model)


def riccati(model, steps=1000, kind="mfc"):
    """Nodal Riccati solution as numpy arrays; P has shape (steps + 1, n, n)."""
    out = _core.riccati(_model_text(model), steps, kind)
    return {k: np.asarray(v) for k, v in out.items()}


def lift_identities():
    return json.loads(_core.lift_identities())


def simulate_cost(model, particles=10000, steps=1000, seed=1, mean=1.0, std=1.0):
    return _core.simulate_cost(_model_text(model), particles, steps, seed, mean, std)


def hjbfp_cross_validation(model, **kwargs):
    return json.loads(_core.hjbfp_cross_validation(_model_text(model), **kwargs))[0]
