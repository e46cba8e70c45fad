"""Closed-form time-complexity calculators for the fixed and universal models.

Worker times are sorted ascending before every min over m, so the min runs
over the m fastest workers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .algorithms import theory_params
from .errors import InvalidParameterError, RegimeError
from .hardinstance import lb_params, max_eps_for_lower_bound
from .numkit import snap_ceil, snap_floor
from .simulator import PiecewisePower, as_universal


def _sorted_taus(taus: Sequence[float]) -> list[float]:
    if len(taus) == 0:
        raise InvalidParameterError("need at least one worker time")
    if any(not t > 0 for t in taus):
        raise InvalidParameterError("worker times must be > 0")
    return sorted(float(t) for t in taus)


def _prefix_rates(taus: Sequence[float]) -> list[float]:
    out, acc = [], 0.0
    for t in _sorted_taus(taus):
        acc += 1.0 / t
        out.append(acc)
    return out


def t_of_R(taus: Sequence[float], R: int) -> float:
    """Worst-case virtual time for any R consecutive accepted updates."""
    if R < 1:
        raise InvalidParameterError("R must be >= 1")
    rates = _prefix_rates(taus)
    return 2.0 * min((m / s) * (1.0 + R / m) for m, s in enumerate(rates, start=1))


def kbar(L: float, delta: float, eps: float) -> int:
    return snap_ceil(74.0 * L * delta / eps**2)


def check_upper_regime(L: float, delta: float, eps: float) -> None:
    limit = math.sqrt(2.0 * L * delta)
    if eps > limit:
        raise RegimeError(
            f"eps={eps:g} > sqrt(2 L Delta)={limit:g}: trivial regime, x0 is already an eps-stationary point"
        )


def time_upper_bound_fixed(L, delta, sigma, p, eps, taus) -> float:
    check_upper_regime(L, delta, eps)
    alpha = theory_params(L, delta, sigma, p, eps).alpha
    rates = _prefix_rates(taus)
    base = L * delta / eps**2
    return 2.0 * min((m / s) * (78.0 * base / (m * alpha) + 76.0 * base) for m, s in enumerate(rates, start=1))


def lower_bound_fixed_from(d: int, q: float, taus: Sequence[float]) -> float:
    rates = _prefix_rates(taus)
    return min((1.0 / s) * (1.0 / q + m) for m, s in enumerate(rates, start=1)) * (d / 2.0 + math.log(0.5)) / 24.0


def lower_bound_fixed(L, delta, sigma, p, eps, taus) -> float:
    """Time below which the gated zero-chain keeps every iterate non-stationary w.p. >= 1/2."""
    params = lb_params(L, delta, sigma, p, eps)
    return lower_bound_fixed_from(params.d, params.q, taus)


def _aggregate(profiles) -> PiecewisePower:
    if len(profiles) == 0:
        raise InvalidParameterError("need at least one worker profile")
    total = None
    for prof in profiles:
        power = as_universal(prof).power
        total = power if total is None else total + power
    return total


def _recursion(total: PiecewisePower, target, count: int) -> list[float]:
    out = []
    t = Fraction(0)
    for _ in range(count):
        nxt = total.solve(t, target)
        if nxt is None:
            out.extend([math.inf] * (count - len(out)))
            break
        t = nxt
        out.append(float(t))
    return out


def time_recursion_universal(profiles, R: int, count: int) -> list[float]:
    """T_1..T_count with T_K the first time the pooled work since T_{K-1} reaches 4R.

    Entries are ``inf`` from the first block the workers can never finish.
    """
    if R < 1 or count < 1:
        raise InvalidParameterError("R and count must be >= 1")
    return _recursion(_aggregate(profiles), 4 * R, count)


def lb_gate_probability(sigma: float, p: float, eps: float) -> float:
    if sigma <= 0:
        return 1.0
    base = 92.0 * 2.0 ** (1.0 / p) * eps / sigma
    return 1.0 if base >= 1.0 else min(base ** (p / (p - 1.0)), 1.0)


def ktilde(L: float, delta: float, eps: float) -> int:
    return math.floor(0.5 * snap_floor(L * delta / (29184.0 * eps**2)) + math.log(0.5))


@dataclass(frozen=True)
class UniversalLowerBound:
    K: int
    T: float
    q: float
    work_per_epoch: int


def lower_bound_universal(profiles, L, delta, sigma, p, eps) -> UniversalLowerBound:
    if not 1.0 < p <= 2.0:
        raise InvalidParameterError(f"p must lie in (1, 2], got {p}")
    if eps > max_eps_for_lower_bound(L, delta):
        raise RegimeError(f"eps={eps:g} exceeds sqrt(L*Delta/87552)={max_eps_for_lower_bound(L, delta):g}")
    q = lb_gate_probability(sigma, p, eps)
    target = snap_ceil(1.0 / (4.0 * q))
    K = ktilde(L, delta, eps)
    T = 0.0 if K <= 0 else _recursion(_aggregate(profiles), target, K)[-1]
    return UniversalLowerBound(K=K, T=T, q=q, work_per_epoch=target)
