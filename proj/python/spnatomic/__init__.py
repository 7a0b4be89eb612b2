"""Exact solvers, simulation and atomic PPO for stochastic processing networks."""

from ._core import (
    Error,
    FormatError,
    IoError,
    Network,
    ResourceLimitError,
    evaluate,
    from_json,
    load,
    scenario_names,
    solve,
    train,
    validate,
    verify,
)

__all__ = [
    "Error",
    "FormatError",
    "IoError",
    "Network",
    "ResourceLimitError",
    "evaluate",
    "from_json",
    "load",
    "scenario_names",
    "solve",
    "train",
    "validate",
    "verify",
]
