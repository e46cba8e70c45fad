"""Test objectives with exact value/gradient and stochastic gradient oracles."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import cg

from .errors import DimensionError, InvalidConfigurationError, InvalidParameterError
from .numkit import NoiseModel, RngStream, as_vector


def power_iteration(A: np.ndarray, tol: float = 1e-6, max_iter: int = 200_000, seed: int = 0) -> float:
    """Upper estimate of the largest eigenvalue of a symmetric PSD matrix.

    Returns the Rayleigh quotient plus its residual norm (an eigenvalue lies
    within that distance) inflated by the relative tolerance ``tol``.
    """
    v = np.random.default_rng(seed).standard_normal(A.shape[0])
    v /= np.linalg.norm(v)
    rho = 0.0
    for _ in range(max_iter):
        w = A @ v
        rho_new = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        resid = float(np.linalg.norm(w - rho_new * v))
        v = w / nw
        if abs(rho_new - rho) <= 1e-3 * tol * abs(rho_new) and resid <= tol * abs(rho_new):
            return (rho_new + resid) * (1.0 + tol)
        rho = rho_new
    return (rho + resid) * (1.0 + tol)


@dataclass(frozen=True)
class QuadraticProblem:
    """f(x) = 1/2 x^T A x - b^T x with A symmetric positive definite."""

    A: np.ndarray
    b: np.ndarray
    x_star: np.ndarray
    L: float
    f_star: float

    @property
    def dim(self) -> int:
        return self.b.shape[0]

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.b.shape:
            raise DimensionError(f"expected shape {self.b.shape}, got {x.shape}")
        return x

    def value(self, x) -> float:
        x = self._check(x)
        return float(0.5 * x @ (self.A @ x) - self.b @ x)

    def grad(self, x) -> np.ndarray:
        x = self._check(x)
        return self.A @ x - self.b

    def value_and_grad(self, x):
        Ax = self.A @ x
        return float(0.5 * x @ Ax - self.b @ x), Ax - self.b


def quad_build(
    d: int,
    rows: int,
    ridge: float,
    rng: RngStream,
    *,
    scale: float = 1.0,
    data: np.ndarray | None = None,
) -> QuadraticProblem:
    """Random quadratic A = scale/rows * X^T X + ridge*I, b = A x_star.

    ``data`` replaces the Gaussian design matrix X (used to pin small cases).
    """
    if d < 1 or rows < 1:
        raise InvalidParameterError("d and rows must be >= 1")
    if not ridge > 0:
        raise InvalidParameterError("ridge must be > 0")
    if data is None:
        X = rng.gen.standard_normal((rows, d))
    else:
        X = np.asarray(data, dtype=np.float64)
        if X.shape != (rows, d):
            raise DimensionError(f"data must have shape {(rows, d)}, got {X.shape}")
    A = (scale / rows) * (X.T @ X) + ridge * np.eye(d)
    A = 0.5 * (A + A.T)
    x_star = rng.gen.standard_normal(d)
    b = A @ x_star
    L = power_iteration(A)
    # the minimiser is re-derived from (A, b) so f_star does not depend on x_star's rounding
    x_opt, info = cg(A, b, x0=x_star.copy(), rtol=0.0, atol=1e-10, maxiter=10 * d)
    if info != 0:
        x_opt = np.linalg.solve(A, b)
    f_star = float(0.5 * x_opt @ (A @ x_opt) - b @ x_opt)
    return QuadraticProblem(A=A, b=b, x_star=x_star, L=L, f_star=f_star)


def grad_exact(problem, x) -> np.ndarray:
    return problem.grad(x)


class NoisyOracle:
    """Stochastic gradient ``grad f(x) + zeta`` with fresh i.i.d. noise per call.

    Owns its random stream; give each simulated worker its own instance.
    """

    def __init__(self, problem, noise: NoiseModel, rng: RngStream):
        if noise.kind == "bernoulli_gate":
            raise InvalidConfigurationError(
                "bernoulli_gate noise requires the progress-aware GatedOracle, not an additive oracle"
            )
        self.problem = problem
        self.noise = noise
        self.rng = rng

    def sample(self, x) -> np.ndarray:
        g = self.problem.grad(x)
        if self.noise.kind == "none":
            return g
        return g + self.noise.draw(self.rng, g.shape[0])


def grad_noisy(oracle: NoisyOracle, x) -> np.ndarray:
    return oracle.sample(as_vector(x))
