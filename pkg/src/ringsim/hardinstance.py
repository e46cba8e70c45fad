"""Zero-chain hard instance with a Bernoulli-gated stochastic gradient oracle.

The chain function

    H_d(u) = -Psi(1) Phi(u_1) + sum_{i=2}^{d} [Psi(-u_{i-1}) Phi(-u_i) - Psi(u_{i-1}) Phi(u_i)]

only exposes a nonzero gradient on coordinate ``j+1`` once ``|u_j| > 1/2``, so any
method that builds iterates from observed gradient supports discovers at most
one new coordinate per oracle call.  The gated oracle additionally hides that new
coordinate unless a Bernoulli(q) coin comes up heads.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InvalidParameterError, RegimeError
from .numkit import (
    RngStream,
    gauss_tail_integral,
    gauss_tail_integral_prime,
    psi,
    psi_prime,
    sample_bernoulli,
    snap_floor,
)

# coordinates of a computed gradient below this are treated as exact zeros
ZERO_TOL = 1e-14

CHAIN_SMOOTHNESS = 152.0
CHAIN_GRAD_INF_BOUND = 23.0


def prog_alpha(x, alpha: float = 0.0, zero_tol: float = 0.0) -> int:
    """Largest 1-based index i with |x_i| > alpha (0 if there is none)."""
    if alpha < 0:
        raise InvalidParameterError("alpha must be >= 0")
    idx = np.flatnonzero(np.abs(np.asarray(x)) > max(alpha, zero_tol))
    return int(idx[-1]) + 1 if idx.size else 0


def prog(x) -> int:
    return prog_alpha(x, 0.0)


@dataclass(frozen=True)
class ZeroChain:
    """The scaled instance f(x) = (L lam^2 / 152) H_d(x / lam)."""

    d: int
    L: float = 1.0
    lam: float = 1.0

    def __post_init__(self):
        if self.d < 1:
            raise InvalidParameterError("chain length d must be >= 1")
        if not (self.L > 0 and self.lam > 0):
            raise InvalidParameterError("L and lam must be > 0")

    @property
    def dim(self) -> int:
        return self.d

    # the minimum value of H_d has no closed form
    f_star = float("nan")

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.d,):
            raise DimensionError(f"expected shape ({self.d},), got {x.shape}")
        return x

    def value(self, x) -> float:
        x = self._check(x)
        return self.L * self.lam**2 / CHAIN_SMOOTHNESS * hd_value(self, x / self.lam)

    def grad(self, x) -> np.ndarray:
        return scaled_grad(self, x)

    def value_and_grad(self, x):
        return self.value(x), self.grad(x)


def hd_value(chain: ZeroChain, u) -> float:
    u = chain._check(u)
    val = -psi(1.0) * gauss_tail_integral(u[0])
    if chain.d > 1:
        prev, cur = u[:-1], u[1:]
        val += float(np.sum(psi(-prev) * gauss_tail_integral(-cur) - psi(prev) * gauss_tail_integral(cur)))
    return float(val)


def hd_grad(chain: ZeroChain, u) -> np.ndarray:
    """Analytic gradient of the unscaled chain H_d."""
    u = chain._check(u)
    g = np.zeros(chain.d)
    g[0] = -psi(1.0) * gauss_tail_integral_prime(u[0])
    if chain.d > 1:
        prev, cur = u[:-1], u[1:]
        # d/du_i of the i-th link term
        g[1:] += -psi(-prev) * gauss_tail_integral_prime(-cur) - psi(prev) * gauss_tail_integral_prime(cur)
        # d/du_{i-1} of the same term
        g[:-1] += -psi_prime(-prev) * gauss_tail_integral(-cur) - psi_prime(prev) * gauss_tail_integral(cur)
    return g


def scaled_grad(chain: ZeroChain, x) -> np.ndarray:
    x = chain._check(x)
    return (chain.L * chain.lam / CHAIN_SMOOTHNESS) * hd_grad(chain, x / chain.lam)


class GatedOracle:
    """Unbiased oracle that reveals coordinates past prog(x) with probability q.

    One coin xi ~ Bernoulli(q) is drawn per call; every coordinate j > prog(x)
    of the true gradient is multiplied by xi / q.  ``last_gate`` holds the most
    recent coin for inspection.
    """

    def __init__(self, chain: ZeroChain, q: float, rng: RngStream, sigma: float | None = None, p: float | None = None):
        if not 0 < q <= 1:
            raise InvalidParameterError(f"q must lie in (0, 1], got {q}")
        self.chain = chain
        self.problem = chain
        self.q = float(q)
        self.sigma = sigma
        self.p = p
        self.rng = rng
        self.last_gate: int | None = None

    @classmethod
    def from_recipe(cls, chain: ZeroChain, sigma: float, p: float, rng: RngStream) -> "GatedOracle":
        return cls(chain, gate_probability(chain.L, chain.lam, sigma, p), rng, sigma=sigma, p=p)

    def sample(self, x) -> np.ndarray:
        return gated_sample(self, x)

    def sample_batch(self, x, n: int) -> np.ndarray:
        """``n`` independent draws at one point, as rows; consumes n coins."""
        g = scaled_grad(self.chain, x)
        xi = (self.rng.gen.random(n) < self.q).astype(np.float64)
        out = np.tile(g, (n, 1))
        k = prog(x)
        out[:, k:] *= (xi / self.q)[:, None]
        self.last_gate = int(xi[-1]) if n else self.last_gate
        return out


def gated_sample(oracle: GatedOracle, x) -> np.ndarray:
    g = scaled_grad(oracle.chain, x)
    xi = sample_bernoulli(oracle.rng, oracle.q)
    oracle.last_gate = xi
    k = prog(x)
    if k < g.shape[0]:
        g[k:] *= xi / oracle.q
    return g


def gate_probability(L: float, lam: float, sigma: float, p: float) -> float:
    """q = min{(2^(1/p) * 23 L lam / (152 sigma))^(p/(p-1)), 1}."""
    _check_p(p)
    if sigma <= 0:
        return 1.0
    base = 2.0 ** (1.0 / p) * CHAIN_GRAD_INF_BOUND * L * lam / (CHAIN_SMOOTHNESS * sigma)
    if base >= 1.0:
        return 1.0
    return min(base ** (p / (p - 1.0)), 1.0)


def _check_p(p: float) -> None:
    if not 1.0 < p <= 2.0:
        raise InvalidParameterError(f"p must lie in (1, 2], got {p}")


def chain_length(L: float, delta: float, eps: float) -> int:
    """d = floor(L Delta / (29184 eps^2))."""
    return snap_floor(L * delta / (29184.0 * eps**2))


def max_eps_for_lower_bound(L: float, delta: float) -> float:
    return math.sqrt(L * delta / 87552.0)


@dataclass(frozen=True)
class LowerBoundParams:
    lam: float
    d: int
    q: float


def lb_params(L: float, delta: float, sigma: float, p: float, eps: float) -> LowerBoundParams:
    """Scale, chain length and gate probability of the lower-bound construction."""
    if min(L, delta, eps) <= 0 or sigma < 0:
        raise InvalidParameterError("L, Delta, eps must be > 0 and sigma >= 0")
    _check_p(p)
    eps_max = max_eps_for_lower_bound(L, delta)
    d = chain_length(L, delta, eps)
    if eps > eps_max or d < 3:
        raise RegimeError(
            f"eps={eps:g} exceeds sqrt(L*Delta/87552)={eps_max:g}; the construction needs a chain of length d >= 3 "
            f"but floor(L*Delta/(29184*eps^2)) = {d}"
        )
    lam = 608.0 * eps / L
    return LowerBoundParams(lam=lam, d=d, q=gate_probability(L, lam, sigma, p))
