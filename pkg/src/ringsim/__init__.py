"""Virtual-time simulator for asynchronous SGD with heavy-tailed gradient noise."""

from .algorithms import (
    DelayAdaptiveASGD,
    GradientMessage,
    RANSGDm,
    Rennala,
    RingmasterASGD,
    ServerState,
    TheoryParams,
    VanillaASGD,
    make_policy,
    theory_params,
)
from .numkit import NoiseModel, RngStream
from .problems import NoisyOracle, QuadraticProblem, quad_build
from .simulator import FixedDeterministic, FixedStochastic, RunTrace, Universal, simulate

__version__ = "0.1.0"

__all__ = [
    "DelayAdaptiveASGD", "GradientMessage", "RANSGDm", "Rennala", "RingmasterASGD", "ServerState",
    "TheoryParams", "VanillaASGD", "make_policy", "theory_params", "NoiseModel", "RngStream",
    "NoisyOracle", "QuadraticProblem", "quad_build", "FixedDeterministic", "FixedStochastic",
    "RunTrace", "Universal", "simulate",
]
