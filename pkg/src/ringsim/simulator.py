"""Deterministic discrete-event engine for asynchronous parameter-server runs.

Workers loop forever: request the current iterate, compute one stochastic
gradient (taking virtual time according to their profile), send it back.
Communication is free.  Events at the same instant are ordered as
(time, gradient-before-request, worker id, sequence number), so a run is a pure
function of its inputs and seeds.
"""
from __future__ import annotations

import csv
import heapq
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .algorithms import GradientMessage, ServerState
from .errors import InvalidParameterError, SimulationGuardError
from .numkit import RngStream, sample_exponential, sample_pareto

GRADIENT, REQUEST = 0, 1

TRACE_COLUMNS = ("time_s", "k", "grad_norm", "f_gap", "accepted", "discarded", "policy", "seed")


class PiecewisePower:
    """Nonnegative piecewise-constant rate on [0, inf), held in exact rationals.

    ``segments`` is a list of ``(start_time, rate)`` with the first start at 0;
    the last rate persists forever.
    """

    def __init__(self, segments):
        segs = [(Fraction(t), Fraction(r)) for t, r in segments]
        if not segs or segs[0][0] != 0:
            raise InvalidParameterError("power segments must start at t = 0")
        for (t0, _), (t1, _) in zip(segs, segs[1:]):
            if t1 <= t0:
                raise InvalidParameterError("segment start times must be strictly increasing")
        if any(r < 0 for _, r in segs):
            raise InvalidParameterError("computation power must be nonnegative")
        self.starts = [t for t, _ in segs]
        self.rates = [r for _, r in segs]

    def _segment(self, t: Fraction) -> int:
        lo, hi = 0, len(self.starts) - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if self.starts[mid] <= t:
                lo = mid
            else:
                hi = mid - 1
        return lo

    def work(self, t) -> Fraction:
        """V(t) = integral of the rate over [0, t]."""
        t = Fraction(t)
        total = Fraction(0)
        for j, (a, r) in enumerate(zip(self.starts, self.rates)):
            if a >= t:
                break
            b = self.starts[j + 1] if j + 1 < len(self.starts) else t
            total += r * (min(b, t) - a)
        return total

    def solve(self, start, work) -> Fraction | None:
        """Least T >= start with V(T) - V(start) >= work; None if never reached."""
        s = Fraction(start)
        need = Fraction(work)
        if need <= 0:
            return s
        j = self._segment(s)
        while True:
            r = self.rates[j]
            end = self.starts[j + 1] if j + 1 < len(self.starts) else None
            if end is None:
                return s + need / r if r > 0 else None
            cap = r * (end - s)
            if r > 0 and cap >= need:
                return s + need / r
            need -= cap
            s = end
            j += 1

    def __add__(self, other: "PiecewisePower") -> "PiecewisePower":
        starts = sorted(set(self.starts) | set(other.starts))
        return PiecewisePower([(t, self.rates[self._segment(t)] + other.rates[other._segment(t)]) for t in starts])

    def scaled(self, c) -> "PiecewisePower":
        c = Fraction(c)
        return PiecewisePower([(t, r * c) for t, r in zip(self.starts, self.rates)])


@dataclass(frozen=True)
class FixedDeterministic:
    tau: float

    def __post_init__(self):
        if not self.tau > 0:
            raise InvalidParameterError(f"tau must be > 0, got {self.tau}")

    def completion_time(self, start: float, rng: RngStream) -> float:
        return start + self.tau

    def typical_duration(self) -> float:
        return self.tau


@dataclass(frozen=True)
class FixedStochastic:
    """Per-gradient durations drawn from an exponential or Pareto law."""

    law: str
    mean: float
    shape: float | None = None
    cap: float | None = None

    def __post_init__(self):
        if self.law not in ("exponential", "pareto"):
            raise InvalidParameterError(f"unknown delay law {self.law!r}")
        if not self.mean > 0:
            raise InvalidParameterError("mean delay must be > 0")
        if self.law == "pareto" and (self.shape is None or not self.shape > 1):
            raise InvalidParameterError("pareto delays need shape > 1 for a finite mean")

    def completion_time(self, start: float, rng: RngStream) -> float:
        if self.law == "exponential":
            dur = sample_exponential(rng, self.mean)
        else:
            dur = float(sample_pareto(rng, self.shape, self.mean * (self.shape - 1.0) / self.shape))
        if self.cap is not None:
            dur = min(dur, self.cap)
        return start + dur

    def typical_duration(self) -> float:
        return self.mean


class Universal:
    """Worker whose gradient finishes once its accumulated power reaches 1."""

    def __init__(self, segments):
        self.power = segments if isinstance(segments, PiecewisePower) else PiecewisePower(segments)

    @classmethod
    def from_tau(cls, tau: float) -> "Universal":
        """Constant power 1/tau, represented exactly."""
        return cls([(0, 1 / Fraction(tau))])

    def completion_time(self, start: float, rng: RngStream | None = None) -> float:
        return universal_completion_time(self, start)

    def typical_duration(self) -> float:
        peak = max(self.power.rates)
        return float(1 / peak) if peak > 0 else math.inf

    def __repr__(self) -> str:
        segs = ", ".join(f"({t}, {r})" for t, r in zip(self.power.starts, self.power.rates))
        return f"Universal([{segs}])"


def universal_completion_time(profile: Universal, start: float) -> float:
    if start < 0:
        raise InvalidParameterError("start must be >= 0")
    t = profile.power.solve(start, 1)
    return math.inf if t is None else float(t)


def as_universal(profile) -> Universal:
    if isinstance(profile, Universal):
        return profile
    if isinstance(profile, FixedDeterministic):
        return Universal.from_tau(profile.tau)
    raise InvalidParameterError(f"cannot lift {profile!r} to a computation-power profile")


@dataclass
class RunTrace:
    time_s: list = field(default_factory=list)
    k: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    f_gap: list = field(default_factory=list)
    accepted: list = field(default_factory=list)
    discarded: list = field(default_factory=list)

    def append(self, t, k, gnorm, gap, acc, disc):
        self.time_s.append(t)
        self.k.append(k)
        self.grad_norm.append(gnorm)
        self.f_gap.append(gap)
        self.accepted.append(acc)
        self.discarded.append(disc)

    def __len__(self) -> int:
        return len(self.time_s)

    def rows(self):
        return zip(self.time_s, self.k, self.grad_norm, self.f_gap, self.accepted, self.discarded)

    def to_csv(self, path_or_buf=None, policy: str = "", seed: int | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for t, k, gn, gap, acc, disc in self.rows():
            w.writerow([repr(float(t)), k, repr(float(gn)), repr(float(gap)), acc, disc, policy, "" if seed is None else seed])
        text = buf.getvalue()
        if path_or_buf is not None:
            with open(path_or_buf, "w", newline="") as fh:
                fh.write(text)
        return text


@dataclass(frozen=True)
class MessageRecord:
    time: float
    worker: int
    stamp: int
    k_on_arrival: int
    accepted: bool
    gate: int | None


@dataclass
class SimulationResult:
    trace: RunTrace
    state: ServerState
    messages: list
    iterates: list | None
    iterate_times: list | None
    final_time: float
    stop_reason: str
    processed_times: list | None = None


def simulate(
    problem,
    oracles: Sequence,
    policy,
    workers: Sequence,
    *,
    x0=None,
    max_k: int | None = None,
    max_time: float | None = None,
    seed: int = 0,
    trace_stride: int = 1,
    record_messages: bool = False,
    record_iterates: bool = False,
    record_event_times: bool = False,
    time_cap: float | None = None,
) -> SimulationResult:
    """Run one asynchronous optimisation on the virtual clock.

    Stops once ``max_k`` updates are accepted or the clock passes ``max_time``
    (whichever comes first).  Worker i draws its durations from stream
    ``(seed, 2 + 2*i)``; its oracle should own stream ``(seed, 1 + 2*i)``.
    """
    n = len(workers)
    if n < 1:
        raise InvalidParameterError("need at least one worker")
    if len(oracles) != n:
        raise InvalidParameterError("need exactly one oracle per worker")
    if max_k is None and max_time is None:
        raise InvalidParameterError("give a horizon: max_k and/or max_time")
    if max_k is not None and max_k < 1 or max_time is not None and not max_time > 0:
        raise InvalidParameterError("horizon must be positive")
    if trace_stride < 1:
        raise InvalidParameterError("trace_stride must be >= 1")

    if time_cap is None:
        if max_time is not None:
            time_cap = 1e6 * max_time
        else:
            finite = [w.typical_duration() for w in workers if math.isfinite(w.typical_duration())]
            time_cap = 1e6 * max_k * (max(finite) if finite else 1.0)

    x_init = np.zeros(problem.dim) if x0 is None else np.array(x0, dtype=np.float64)
    state = ServerState.start(x_init)
    delay_rngs = [RngStream(seed, 2 + 2 * i) for i in range(n)]
    f_star = problem.f_star
    trace = RunTrace()
    messages = [] if record_messages else None
    iterates = [state.x] if record_iterates else None
    iterate_times = [0.0] if record_iterates else None
    processed = [] if record_event_times else None

    def log_row(t):
        f, g = problem.value_and_grad(state.x)
        trace.append(t, state.k, float(np.sqrt(g @ g)), f - f_star, state.accepted, state.discarded)

    log_row(0.0)
    heap: list = []
    seq = 0
    for i in range(n):
        heap.append((0.0, REQUEST, i, seq, None))
        seq += 1
    heapq.heapify(heap)
    gates = [None] * n

    now = 0.0
    stop_reason = "exhausted"
    while heap:
        t, kind, i, _, msg = heap[0]
        if max_time is not None and t > max_time:
            stop_reason = "max_time"
            break
        if t > time_cap:
            raise SimulationGuardError(
                f"virtual time passed the cap {time_cap:g} at k={state.k}; a worker's computation power may never "
                "complete a gradient"
            )
        heapq.heappop(heap)
        now = t
        if processed is not None:
            processed.append(t)
        if kind == REQUEST:
            oracle = oracles[i]
            g = oracle.sample(state.x)
            gates[i] = getattr(oracle, "last_gate", None)
            done = workers[i].completion_time(t, delay_rngs[i])
            heapq.heappush(heap, (done, GRADIENT, i, seq, GradientMessage(g, state.k, i, done)))
            seq += 1
            continue

        k_before = state.k
        accepted = policy.on_gradient(state, msg)
        if messages is not None:
            messages.append(MessageRecord(t, i, msg.stamp, k_before, accepted, gates[i]))
        if state.k != k_before:
            if record_iterates:
                iterates.append(state.x)
                iterate_times.append(t)
            if state.accepted % trace_stride == 0:
                log_row(t)
        heapq.heappush(heap, (t, REQUEST, i, seq, None))
        seq += 1
        if max_k is not None and state.k >= max_k:
            stop_reason = "max_k"
            break

    if not heap and stop_reason == "exhausted":
        raise SimulationGuardError("event queue drained: no worker can ever complete a gradient")
    final_t = max_time if stop_reason == "max_time" else now
    if trace.time_s[-1] != final_t or trace.k[-1] != state.k:
        log_row(final_t)
    return SimulationResult(
        trace=trace,
        state=state,
        messages=messages,
        iterates=iterates,
        iterate_times=iterate_times,
        final_time=final_t,
        stop_reason=stop_reason,
        processed_times=processed,
    )
