"""Vector helpers, seedable random streams and the scalar functions of the zero-chain.

Vectors are plain 1-d ``float64`` numpy arrays. All randomness goes through an
explicitly passed :class:`RngStream`; nothing here touches a global generator.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import DimensionError, InvalidConfigurationError, InvalidParameterError

SQRT_E = math.sqrt(math.e)
SQRT_2PI_E = math.sqrt(2.0 * math.pi * math.e)

NOISE_KINDS = ("none", "gaussian", "student_t", "pareto", "bernoulli_gate")


def snap_ceil(x: float, rtol: float = 1e-9) -> int:
    """ceil(x), except values within rtol of an integer round to it.

    Recipe quantities such as 1/alpha are exact integers in real arithmetic
    but can land a few ulps above one in floating point.
    """
    r = round(x)
    return int(r) if abs(x - r) <= rtol * max(1.0, abs(x)) else math.ceil(x)


def snap_floor(x: float, rtol: float = 1e-9) -> int:
    r = round(x)
    return int(r) if abs(x - r) <= rtol * max(1.0, abs(x)) else math.floor(x)


def as_vector(v) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise DimensionError(f"expected a non-empty 1-d vector, got shape {arr.shape}")
    return arr


def norm2(v) -> float:
    """Euclidean norm."""
    return float(np.sqrt(np.dot(v, v)))


def axpby(a: float, x, b: float, y) -> np.ndarray:
    """Return ``a*x + b*y`` componentwise."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionError(f"length mismatch: {x.shape} vs {y.shape}")
    return a * x + b * y


class RngStream:
    """Independent, replayable random stream keyed by ``(seed, stream_id)``.

    Streams with the same key produce identical draws on every platform (PCG64
    seeded through ``SeedSequence``); different ``stream_id`` values are spawned
    as independent children of the same root seed.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        if seed < 0 or stream_id < 0:
            raise InvalidParameterError("seed and stream_id must be non-negative")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self.gen = np.random.Generator(np.random.PCG64(ss))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


def sample_gaussian(rng: RngStream, dim: int, scale: float = 1.0) -> np.ndarray:
    return scale * rng.gen.standard_normal(dim)


def sample_student_t(rng: RngStream, nu: float, dim: int) -> np.ndarray:
    """``dim`` i.i.d. Student-t(nu) draws, generated as Z / sqrt(W / nu)."""
    if not nu > 1:
        raise InvalidParameterError(f"Student-t needs nu > 1 for a finite mean, got {nu}")
    z = rng.gen.standard_normal(dim)
    w = rng.gen.chisquare(nu, dim)
    return z / np.sqrt(w / nu)


def sample_pareto(rng: RngStream, shape: float, scale: float, size=None):
    """Classical Pareto(shape, scale): support [scale, inf), tail index ``shape``."""
    if shape <= 0 or scale <= 0:
        raise InvalidParameterError("Pareto shape and scale must be positive")
    return scale * (1.0 + rng.gen.pareto(shape, size))


def sample_exponential(rng: RngStream, mean: float) -> float:
    if mean <= 0:
        raise InvalidParameterError("exponential mean must be positive")
    return float(rng.gen.exponential(mean))


def sample_bernoulli(rng: RngStream, q: float) -> int:
    if not 0.0 < q <= 1.0:
        raise InvalidParameterError(f"Bernoulli probability must lie in (0, 1], got {q}")
    return int(rng.gen.random() < q)


@dataclass(frozen=True)
class NoiseModel:
    """Additive gradient noise law, one independent draw per coordinate.

    ``kind`` is one of ``none``, ``gaussian``, ``student_t`` (needs ``nu``),
    ``pareto`` (symmetrised classical Pareto, needs ``shape``) and
    ``bernoulli_gate`` (needs ``q``; only meaningful for the gated hard-instance
    oracle).
    """

    kind: str = "none"
    scale: float = 1.0
    nu: float | None = None
    shape: float | None = None
    q: float | None = None

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise InvalidParameterError(f"unknown noise kind {self.kind!r}; expected one of {NOISE_KINDS}")
        if self.scale < 0:
            raise InvalidParameterError("noise scale must be >= 0")
        if self.kind == "student_t" and (self.nu is None or not self.nu > 1):
            raise InvalidParameterError(f"student_t noise needs nu > 1, got {self.nu}")
        if self.kind == "pareto" and (self.shape is None or not self.shape > 1):
            raise InvalidParameterError(f"pareto noise needs shape > 1 for a finite mean, got {self.shape}")
        if self.kind == "bernoulli_gate" and (self.q is None or not 0 < self.q <= 1):
            raise InvalidParameterError(f"bernoulli_gate needs q in (0, 1], got {self.q}")

    def draw(self, rng: RngStream, dim: int) -> np.ndarray:
        if self.kind == "none":
            return np.zeros(dim)
        if self.kind == "gaussian":
            return sample_gaussian(rng, dim, self.scale)
        if self.kind == "student_t":
            return self.scale * sample_student_t(rng, self.nu, dim)
        if self.kind == "pareto":
            # random sign makes the law symmetric, hence zero-mean
            mag = sample_pareto(rng, self.shape, 1.0, dim)
            sign = np.where(rng.gen.random(dim) < 0.5, -1.0, 1.0)
            return self.scale * sign * mag
        raise InvalidConfigurationError("bernoulli_gate noise only exists inside the gated hard-instance oracle")


def psi(t):
    """Smooth step: 0 for t <= 1/2, exp(1 - 1/(2t-1)^2) beyond."""
    t = np.asarray(t, dtype=np.float64)
    out = np.zeros_like(t)
    m = t > 0.5
    out[m] = np.exp(1.0 - 1.0 / (2.0 * t[m] - 1.0) ** 2)
    return out if out.ndim else float(out)


def psi_prime(t):
    t = np.asarray(t, dtype=np.float64)
    out = np.zeros_like(t)
    m = t > 0.5
    s = 2.0 * t[m] - 1.0
    out[m] = np.exp(1.0 - 1.0 / s**2) * 4.0 / s**3
    return out if out.ndim else float(out)


def gauss_tail_integral(t):
    """sqrt(e) * integral_{-inf}^{t} exp(-s^2/2) ds, via the normal CDF."""
    val = SQRT_2PI_E * ndtr(t)
    return val if np.ndim(val) else float(val)


def gauss_tail_integral_prime(t):
    val = SQRT_E * np.exp(-0.5 * np.square(t))
    return val if np.ndim(val) else float(val)
