"""Ride-pooling fleet simulation with learned regional dispatch.

Per decision epoch the pipeline is: batch incoming requests, pick a dispatch
region per vehicle with a learned (or baseline) policy, enumerate the feasible
shared trips inside each vehicle's region under pickup and detour promises,
and commit the value-maximizing assignment with an exact matcher.  An
optional intrinsic reward ties the fleet's regional distribution to demand
through a variational mutual-information bound.
"""
from .demand import Batch, PricingParams, Request
from .dispatch import QFunction, TrainConfig
from .fleet import SimState, Vehicle
from .harness import RunConfig, ScenarioConfig, run_variant
from .hexgrid import ActionSet, HexGrid
from .matching import Assignment, MatchingInstance, TripChoice
from .network import Route, StreetNetwork
from .trips import DelayParams, Trip

__version__ = "0.1.0"

__all__ = [
    "ActionSet",
    "Assignment",
    "Batch",
    "DelayParams",
    "HexGrid",
    "MatchingInstance",
    "PricingParams",
    "QFunction",
    "Request",
    "Route",
    "RunConfig",
    "ScenarioConfig",
    "SimState",
    "StreetNetwork",
    "TrainConfig",
    "Trip",
    "TripChoice",
    "Vehicle",
    "run_variant",
    "__version__",
]
