"""Server update rules for asynchronous parameter-server optimisation.

Each policy is a small frozen dataclass with an ``on_gradient(state, msg)``
method that mutates the :class:`ServerState` in place and reports whether the
message was accepted.  The event loop in :mod:`ringsim.simulator` is the only
caller in normal use.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError
from .numkit import snap_ceil

POLICY_NAMES = ("ransgdm", "ringmaster_asgd", "vanilla_asgd", "delay_adaptive_asgd", "rennala")


@dataclass(frozen=True)
class TheoryParams:
    alpha: float
    R: int
    eta: float
    beta: float
    K: int


def theory_alpha(sigma: float, p: float, eps: float) -> float:
    if sigma == 0:
        return 1.0
    base = eps / (3.0 * 2.0 ** ((p + 1.0) / p) * sigma)
    if base >= 1.0:
        return 1.0
    return base ** (p / (p - 1.0))


def theory_params(L: float, delta: float, sigma: float, p: float, eps: float) -> TheoryParams:
    """Threshold, step size, momentum and round count that guarantee E||grad f|| <= eps."""
    if not 1.0 < p <= 2.0:
        raise InvalidParameterError(f"p must lie in (1, 2], got {p}")
    if min(L, delta, eps) <= 0 or sigma < 0:
        raise InvalidParameterError("L, Delta, eps must be > 0 and sigma >= 0")
    alpha = theory_alpha(sigma, p, eps)
    return TheoryParams(
        alpha=alpha,
        R=snap_ceil(1.0 / alpha),
        eta=alpha * eps / (24.0 * L),
        beta=1.0 - alpha,
        K=snap_ceil(72.0 * L * delta / (alpha * eps**2)),
    )


@dataclass(frozen=True)
class GradientMessage:
    g: np.ndarray
    stamp: int
    worker: int
    time: float


@dataclass
class ServerState:
    x: np.ndarray
    v: np.ndarray
    k: int = 0
    accepted: int = 0
    discarded: int = 0
    zero_steps: int = 0
    buffer: np.ndarray | None = None
    buffer_count: int = 0
    last_delay: int = 0

    @classmethod
    def start(cls, x0) -> "ServerState":
        x0 = np.array(x0, dtype=np.float64)
        return cls(x=x0, v=np.zeros_like(x0))


def _delay(state: ServerState, msg: GradientMessage) -> int:
    delay = state.k - msg.stamp
    if delay < 0:
        raise InvalidParameterError(f"message stamped {msg.stamp} arrived before iteration {msg.stamp} existed (k={state.k})")
    state.last_delay = delay
    return delay


def _discard(state: ServerState) -> bool:
    state.discarded += 1
    return False


def _step(state: ServerState, direction: np.ndarray, eta: float) -> bool:
    state.x = state.x - eta * direction
    state.k += 1
    state.accepted += 1
    return True


def ransgdm_on_gradient(state: ServerState, msg: GradientMessage, eta: float, beta: float, R: float) -> bool:
    delay = _delay(state, msg)
    if delay >= R:
        return _discard(state)
    beta_k = 0.0 if state.k <= 1 else beta
    state.v = beta_k * state.v + (1.0 - beta) * msg.g
    vnorm = float(np.sqrt(state.v @ state.v))
    if vnorm == 0.0:
        # degenerate direction: count the round but do not move
        state.zero_steps += 1
        state.k += 1
        state.accepted += 1
        return True
    return _step(state, state.v / vnorm, eta)


def ringmaster_asgd_on_gradient(state: ServerState, msg: GradientMessage, eta: float, R: float) -> bool:
    if _delay(state, msg) >= R:
        return _discard(state)
    return _step(state, msg.g, eta)


def vanilla_asgd_on_gradient(state: ServerState, msg: GradientMessage, eta: float) -> bool:
    _delay(state, msg)
    return _step(state, msg.g, eta)


def delay_adaptive_asgd_on_gradient(state: ServerState, msg: GradientMessage, eta0: float) -> bool:
    delay = _delay(state, msg)
    return _step(state, msg.g, eta0 / (1.0 + delay))


def rennala_on_gradient(state: ServerState, msg: GradientMessage, eta: float, batch: int) -> bool:
    """Average ``batch`` gradients computed at the current iterate, then step.

    Returns True only on the message that completes a batch and moves x.
    """
    if _delay(state, msg) > 0:
        return _discard(state)
    if state.buffer is None:
        state.buffer = np.zeros_like(state.x)
    state.buffer += msg.g
    state.buffer_count += 1
    if state.buffer_count < batch:
        return False
    mean = state.buffer / state.buffer_count
    state.buffer = np.zeros_like(state.x)
    state.buffer_count = 0
    return _step(state, mean, eta)


@dataclass(frozen=True)
class RANSGDm:
    eta: float
    R: float
    beta: float = 0.9
    name: str = field(default="ransgdm", init=False)

    def __post_init__(self):
        _positive(eta=self.eta, R=self.R)
        if not 0.0 <= self.beta < 1.0:
            raise InvalidParameterError(f"beta must lie in [0, 1), got {self.beta}")

    @classmethod
    def from_theory(cls, params: TheoryParams) -> "RANSGDm":
        return cls(eta=params.eta, R=params.R, beta=params.beta)

    def on_gradient(self, state, msg):
        return ransgdm_on_gradient(state, msg, self.eta, self.beta, self.R)


@dataclass(frozen=True)
class RingmasterASGD:
    eta: float
    R: float
    name: str = field(default="ringmaster_asgd", init=False)

    def __post_init__(self):
        _positive(eta=self.eta, R=self.R)

    def on_gradient(self, state, msg):
        return ringmaster_asgd_on_gradient(state, msg, self.eta, self.R)


@dataclass(frozen=True)
class VanillaASGD:
    eta: float
    name: str = field(default="vanilla_asgd", init=False)

    def __post_init__(self):
        _positive(eta=self.eta)

    def on_gradient(self, state, msg):
        return vanilla_asgd_on_gradient(state, msg, self.eta)


@dataclass(frozen=True)
class DelayAdaptiveASGD:
    eta: float
    name: str = field(default="delay_adaptive_asgd", init=False)

    def __post_init__(self):
        _positive(eta=self.eta)

    def on_gradient(self, state, msg):
        return delay_adaptive_asgd_on_gradient(state, msg, self.eta)


@dataclass(frozen=True)
class Rennala:
    eta: float
    batch: int = 6
    name: str = field(default="rennala", init=False)

    def __post_init__(self):
        _positive(eta=self.eta)
        if self.batch < 1:
            raise InvalidParameterError("batch must be >= 1")

    def on_gradient(self, state, msg):
        return rennala_on_gradient(state, msg, self.eta, self.batch)


def _positive(**kwargs) -> None:
    for key, val in kwargs.items():
        if not val > 0:
            raise InvalidParameterError(f"{key} must be > 0, got {val}")


def make_policy(name: str, eta: float, R: float = math.inf, beta: float = 0.9, batch: int = 6):
    if name == "ransgdm":
        return RANSGDm(eta=eta, R=R, beta=beta)
    if name == "ringmaster_asgd":
        return RingmasterASGD(eta=eta, R=R)
    if name == "vanilla_asgd":
        return VanillaASGD(eta=eta)
    if name == "delay_adaptive_asgd":
        return DelayAdaptiveASGD(eta=eta)
    if name == "rennala":
        return Rennala(eta=eta, batch=batch)
    raise InvalidParameterError(f"unknown policy {name!r}; expected one of {POLICY_NAMES}")
