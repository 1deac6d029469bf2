"""Null and alternative density models.

Everything is evaluated on the log scale; ``-inf`` stands for a zero density.
Models may be unnormalized: downstream quantities are ratios of orbit masses,
in which constants cancel.  Operations that do need a normalized density say
so in their docstrings.

Log-density evaluators are *batch* callables: they map an ``(m, n)`` array of
points to an ``(m,)`` array.  Use :meth:`DensityModel.from_pointwise` to wrap a
function written for a single vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy import linalg

from .errors import DimensionMismatch, InputError, MissingSampler, NotPositiveDefinite

__all__ = [
    "PD_PIVOT_TOL",
    "DensityModel",
    "GaussianSpec",
    "VcCovarianceSpec",
    "MCEstimate",
    "cholesky",
    "mvn_log_density",
    "gaussian_model",
    "linear_exp_model",
    "build_vc_covariance",
    "mvn_sampler",
    "ar1_covariance",
    "l1_distance_estimate",
]

PD_PIVOT_TOL = 1e-12

BatchLogDensity = Callable[[np.ndarray], np.ndarray]
Sampler = Callable[[np.random.Generator, int], np.ndarray]


@dataclass(frozen=True)
class DensityModel:
    """Unnormalized log-density on R^n with an optional sampler.

    Parameters
    ----------
    log_eval : callable
        Maps an ``(m, n)`` array to ``(m,)`` log-density values.
    dim : int
        Dimension n.
    sampler : callable, optional
        ``sampler(rng, size)`` returns a ``(size, n)`` array of draws from the
        normalized density proportional to ``exp(log_eval)``.
    normalized : bool
        Whether ``exp(log_eval)`` integrates to one.
    """

    log_eval: BatchLogDensity
    dim: int
    sampler: Optional[Sampler] = None
    normalized: bool = False
    name: str = "density"

    @classmethod
    def from_pointwise(cls, fn: Callable[[np.ndarray], float], dim: int, **kw) -> "DensityModel":
        def batch(X):
            X = np.atleast_2d(X)
            return np.array([fn(row) for row in X], dtype=float)

        return cls(batch, dim, **kw)

    def log_density(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise DimensionMismatch(f"expected a vector of length {self.dim}, got shape {x.shape}")
        return float(self.log_eval(x[None, :])[0])

    def log_density_many(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise DimensionMismatch(f"expected an (m, {self.dim}) array, got shape {X.shape}")
        return np.asarray(self.log_eval(X), dtype=float).reshape(X.shape[0])

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.sampler is None:
            raise MissingSampler(f"{self.name} has no sampler")
        return np.asarray(self.sampler(rng, size), dtype=float).reshape(size, self.dim)


@dataclass(frozen=True)
class GaussianSpec:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise DimensionMismatch(f"mean of length {mean.size} with covariance of shape {cov.shape}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class VcCovarianceSpec:
    """Variance-component covariance ``sigma2 * (A + lambda2 * I)``."""

    A: np.ndarray
    lambda2: float
    sigma2: float = 1.0

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if A.shape[0] != A.shape[1]:
            raise DimensionMismatch(f"A must be square, got shape {A.shape}")
        if self.lambda2 < 0:
            raise InputError("lambda2 must be nonnegative")
        if self.sigma2 <= 0:
            raise InputError("sigma2 must be positive")
        object.__setattr__(self, "A", A)


class MCEstimate(NamedTuple):
    value: float
    se: float


def cholesky(cov) -> np.ndarray:
    """Lower Cholesky factor, rejecting matrices that are not safely PD.

    A pivot below ``PD_PIVOT_TOL * max(diag(cov))`` counts as singular.
    """
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise DimensionMismatch(f"covariance must be square, got shape {cov.shape}")
    if not np.allclose(cov, cov.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(cov).max(initial=0.0))):
        raise NotPositiveDefinite("covariance is not symmetric")
    scale = np.max(np.diag(cov), initial=0.0)
    if not np.isfinite(scale) or scale <= 0:
        raise NotPositiveDefinite("covariance has no positive diagonal entry")
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    if np.min(np.diag(L)) ** 2 < PD_PIVOT_TOL * scale:
        raise NotPositiveDefinite("covariance is numerically singular")
    return L


def _mvn_logpdf_factored(X, mean, L):
    n = L.shape[0]
    R = np.atleast_2d(X) - mean
    Z = linalg.solve_triangular(L, R.T, lower=True)
    maha = np.sum(Z * Z, axis=0)
    log_det = 2.0 * np.sum(np.log(np.diag(L)))
    return -0.5 * (n * np.log(2 * np.pi) + log_det + maha)


def mvn_log_density(x, spec: GaussianSpec) -> float:
    """Exact log N(x; mean, covariance), normalizing constant included."""
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.dim,):
        raise DimensionMismatch(f"expected a vector of length {spec.dim}, got shape {x.shape}")
    L = cholesky(spec.covariance)
    return float(_mvn_logpdf_factored(x, spec.mean, L)[0])


def mvn_sampler(spec: GaussianSpec) -> Sampler:
    L = cholesky(spec.covariance)
    mean = spec.mean

    def draw(rng: np.random.Generator, size: int) -> np.ndarray:
        return mean + rng.standard_normal((size, mean.size)) @ L.T

    return draw


def gaussian_model(spec: GaussianSpec, name: str = "gaussian") -> DensityModel:
    L = cholesky(spec.covariance)
    mean = spec.mean
    return DensityModel(
        lambda X: _mvn_logpdf_factored(X, mean, L),
        spec.dim,
        sampler=mvn_sampler(spec),
        normalized=True,
        name=name,
    )


def linear_exp_model(coef, name: str = "linear-exp") -> DensityModel:
    """Unnormalized density ``exp(coef . z)``; handy for toy orbits."""
    coef = np.asarray(coef, dtype=float)
    return DensityModel(lambda X: np.atleast_2d(X) @ coef, coef.size, name=name)


def build_vc_covariance(spec: VcCovarianceSpec) -> np.ndarray:
    n = spec.A.shape[0]
    cov = spec.sigma2 * (spec.A + spec.lambda2 * np.eye(n))
    cholesky(cov)
    return cov


def ar1_covariance(n: int, rho: float, var: float = 1.0) -> np.ndarray:
    idx = np.arange(n)
    return var * rho ** np.abs(idx[:, None] - idx[None, :])


def l1_distance_estimate(g: DensityModel, g_tilde: DensityModel, s: int,
                         rng: np.random.Generator) -> MCEstimate:
    """Monte Carlo estimate of the L1 distance between two normalized densities.

    Uses ``int |g - g~| = 2 E_g[(1 - g~/g)_+]``.  The integrand lies in [0, 2],
    and unlike ``E_g|1 - g~/g|`` it also accounts for mass of `g_tilde`
    outside the support of `g`.
    """
    if s < 1:
        raise InputError("sample count must be positive")
    X = g.sample(rng, s)
    log_ratio = g_tilde.log_density_many(X) - g.log_density_many(X)
    vals = 2.0 * np.maximum(0.0, -np.expm1(np.minimum(log_ratio, 0.0)))
    se = float(vals.std(ddof=1) / np.sqrt(s)) if s > 1 else float("inf")
    return MCEstimate(float(vals.mean()), se)
