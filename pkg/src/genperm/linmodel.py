"""Generalized permutation tests for Gaussian linear models.

Under the null ``y ~ N(0, Sigma0)`` and the alternative ``y ~ N(X beta, Sigma1)``
the log likelihood ratio splits as

    S(X, beta, Sigma0, Sigma1) + |beta| V1(y) + log V2(y)

with ``V1 = u' X' Sigma1^-1 y`` (u the direction of beta) and
``log V2 = -y' (Sigma1^-1 - Sigma0^-1) y / 2``.  S does not depend on y, so on a
permutation orbit only V1 and V2 matter.  When ``Sigma0 == Sigma1`` the test is
fixed by the ordering of V1 alone, whatever the size of beta.

The variance-component null ``sigma0^2 (A + lambda^2 I)`` is ordered by the
quadratic form ``q(z) = z' (A + lambda^2 I)^-1 z``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg, stats

from .densities import DensityModel, GaussianSpec, cholesky, gaussian_model
from .errors import DimensionMismatch, InputError, NumericalError
from .exact import (ExactSignificance, RatioOrder, TestDecision, exact_significance, mp_test,
                    scan_orbit)
from .perm import Permutation, apply

__all__ = [
    "LinearModelSpec",
    "VcTestSpec",
    "VcTestResult",
    "NPReport",
    "gls_beta",
    "v1",
    "v2",
    "s_const",
    "lm_log_ratio",
    "v1_order",
    "v2_order",
    "null_model",
    "alt_model",
    "vc_null_model",
    "vc_order",
    "vc_test",
    "np_counterexample_report",
]


def _vec(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise DimensionMismatch(f"expected a vector, got shape {y.shape}")
    return y


def _design(X, n) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] != n:
        raise DimensionMismatch(f"design must have {n} rows, got shape {X.shape}")
    return X


@dataclass(frozen=True)
class LinearModelSpec:
    y: np.ndarray
    X: np.ndarray
    Sigma0: np.ndarray
    Sigma1: np.ndarray
    u: np.ndarray
    beta_norm: Optional[float] = None

    def __post_init__(self):
        y = _vec(self.y)
        n = y.size
        X = _design(self.X, n)
        u = np.atleast_1d(np.asarray(self.u, dtype=float))
        if u.shape != (X.shape[1],):
            raise DimensionMismatch(f"u must have length {X.shape[1]}")
        if abs(np.linalg.norm(u) - 1.0) > 1e-10:
            raise InputError("u must be a unit vector")
        if self.beta_norm is not None and not self.beta_norm > 0:
            raise InputError("beta_norm must be positive")
        for name in ("Sigma0", "Sigma1"):
            S = np.asarray(getattr(self, name), dtype=float)
            if S.shape != (n, n):
                raise DimensionMismatch(f"{name} must be {n}x{n}, got shape {S.shape}")
            cholesky(S)
            object.__setattr__(self, name, S)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "u", u)

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def beta(self) -> np.ndarray:
        if self.beta_norm is None:
            raise InputError("beta_norm is required for the full likelihood ratio")
        return self.beta_norm * self.u


@dataclass(frozen=True)
class VcTestSpec:
    y: np.ndarray
    A: np.ndarray
    lambda2: float
    sigma0_2: float = 1.0
    direction: str = "greater"

    def __post_init__(self):
        y = _vec(self.y)
        A = np.asarray(self.A, dtype=float)
        if A.shape != (y.size, y.size):
            raise DimensionMismatch(f"A must be {y.size}x{y.size}, got shape {A.shape}")
        if self.lambda2 < 0:
            raise InputError("lambda2 must be nonnegative")
        if not self.sigma0_2 > 0:
            raise InputError("sigma0_2 must be positive")
        if self.direction not in ("greater", "less"):
            raise InputError("direction must be 'greater' or 'less'")
        cholesky(A + self.lambda2 * np.eye(y.size))
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "A", A)


def _cho(S):
    return (cholesky(S), True)


def gls_beta(y, X, Sigma1) -> np.ndarray:
    """Generalized least squares estimate ``(X' S^-1 X)^-1 X' S^-1 y``."""
    y = _vec(y)
    X = _design(X, y.size)
    cf = _cho(Sigma1)
    SX = linalg.cho_solve(cf, X)
    normal = X.T @ SX
    try:
        return linalg.solve(normal, SX.T @ y, assume_a="sym")
    except linalg.LinAlgError as exc:
        raise NumericalError(f"singular normal matrix: {exc}") from None


def v1(y, X, Sigma1, u) -> float:
    """``u' X' Sigma1^-1 y``, the y-dependent factor of the mean term."""
    y = _vec(y)
    X = _design(X, y.size)
    return float(np.atleast_1d(u) @ (X.T @ linalg.cho_solve(_cho(Sigma1), y)))


def v2(y, Sigma0, Sigma1) -> float:
    """``log V2 = -y' (Sigma1^-1 - Sigma0^-1) y / 2``."""
    y = _vec(y)
    q1 = y @ linalg.cho_solve(_cho(Sigma1), y)
    q0 = y @ linalg.cho_solve(_cho(Sigma0), y)
    return float(-0.5 * (q1 - q0))


def s_const(X, beta, Sigma0, Sigma1) -> float:
    """y-free part of the log ratio: ``log(|S0| / |S1|) / 2 - b' X' S1^-1 X b / 2``."""
    L0, L1 = cholesky(Sigma0), cholesky(Sigma1)
    X = _design(X, L0.shape[0])
    m = X @ np.atleast_1d(np.asarray(beta, dtype=float))
    half_logdet = np.sum(np.log(np.diag(L0))) - np.sum(np.log(np.diag(L1)))
    z = linalg.solve_triangular(L1, m, lower=True)
    return float(half_logdet - 0.5 * z @ z)


def lm_log_ratio(y, spec: LinearModelSpec) -> float:
    """Full log likelihood ratio ``S + |beta| V1 + log V2`` at `y`."""
    return (s_const(spec.X, spec.beta, spec.Sigma0, spec.Sigma1)
            + spec.beta_norm * v1(y, spec.X, spec.Sigma1, spec.u)
            + v2(y, spec.Sigma0, spec.Sigma1))


def null_model(spec: LinearModelSpec) -> DensityModel:
    return gaussian_model(GaussianSpec(np.zeros(spec.n), spec.Sigma0), name="lm-null")


def alt_model(spec: LinearModelSpec) -> DensityModel:
    return gaussian_model(GaussianSpec(spec.X @ spec.beta, spec.Sigma1), name="lm-alt")


def v1_order(spec: LinearModelSpec) -> RatioOrder:
    """Order orbit images by V1; exact for the ratio when ``Sigma0 == Sigma1``."""
    coef = linalg.cho_solve(_cho(spec.Sigma1), spec.X @ spec.u)
    return RatioOrder.statistic(lambda Y: np.atleast_2d(Y) @ coef, name="v1")


def v2_order(spec: LinearModelSpec) -> RatioOrder:
    """Order orbit images by log V2, the covariance part of the ratio."""
    M = linalg.cho_solve(_cho(spec.Sigma1), np.eye(spec.n)) - linalg.cho_solve(_cho(spec.Sigma0), np.eye(spec.n))
    M = 0.5 * (M + M.T)

    def stat(Y):
        Y = np.atleast_2d(Y)
        return -0.5 * np.einsum("ij,jk,ik->i", Y, M, Y)

    return RatioOrder.statistic(stat, name="v2")


def _vc_quadform(spec: VcTestSpec):
    L = cholesky(spec.A + spec.lambda2 * np.eye(spec.y.size))

    def q(Y):
        Z = linalg.solve_triangular(L, np.atleast_2d(Y).T, lower=True)
        return np.sum(Z * Z, axis=0)

    return q


def vc_null_model(spec: VcTestSpec) -> DensityModel:
    """Null log density ``-q(z) / (2 sigma0^2)`` up to a constant."""
    q = _vc_quadform(spec)
    s2 = spec.sigma0_2
    return DensityModel(lambda Y: -q(Y) / (2.0 * s2), spec.y.size, name="vc-null")


def vc_order(spec: VcTestSpec) -> RatioOrder:
    """q for a larger alternative variance, -q for a smaller one."""
    q = _vc_quadform(spec)
    sign = 1.0 if spec.direction == "greater" else -1.0
    return RatioOrder.statistic(lambda Y: sign * q(Y), name=f"vc-{spec.direction}")


@dataclass(frozen=True)
class VcTestResult:
    decision: TestDecision
    significance: ExactSignificance
    scan: object
    log_ratio: Optional[float] = None


def vc_test(spec: VcTestSpec, alpha: float, limit: Optional[int] = None,
            sigma1_2: Optional[float] = None) -> VcTestResult:
    """Exact variance-component test at the observed y.

    `sigma1_2`, when given, only adds the full log ratio at y to the result;
    the ordering never depends on it.
    """
    scan = scan_orbit(spec.y, vc_order(spec), vc_null_model(spec), limit)
    log_ratio = None
    if sigma1_2 is not None:
        if not sigma1_2 > 0:
            raise InputError("sigma1_2 must be positive")
        B = spec.A + spec.lambda2 * np.eye(spec.y.size)
        g = lambda s2: gaussian_model(GaussianSpec(np.zeros(spec.y.size), s2 * B)).log_density(spec.y)
        log_ratio = g(sigma1_2) - g(spec.sigma0_2)
    return VcTestResult(mp_test(scan, alpha), exact_significance(scan), scan, log_ratio)


@dataclass(frozen=True)
class NPReport:
    delta: float
    alpha: float
    draws: int
    gpt_power: float
    gpt_se: float
    np_power: float
    np_se: float
    np_power_exact: float
    swap_identity_max_error: Optional[float]


def np_counterexample_report(delta: float, alpha: float, draws: int, rng) -> NPReport:
    """Power of the generalized permutation test against Neyman-Pearson in 2D.

    Null ``N(0, I2)``, alternative shifted by `delta` in the second coordinate.
    The unrestricted most powerful region rejects when ``x2 > z_(1-alpha)``.
    At ``alpha = 1/2`` the maximal swap error ``|phi(x1, x2) + phi(x2, x1) - 1|``
    over the draws is reported.
    """
    if draws < 1:
        raise InputError("draws must be positive")
    if not 0 <= alpha <= 1:
        raise InputError("alpha must lie in [0, 1]")
    gen = np.random.default_rng(rng)
    g0 = gaussian_model(GaussianSpec(np.zeros(2), np.eye(2)), name="np-null")
    g1 = gaussian_model(GaussianSpec(np.array([0.0, delta]), np.eye(2)), name="np-alt")
    order = RatioOrder.ratio(g0, g1)
    X = g1.sample(gen, draws)
    swap = Permutation((1, 0))
    phis = np.empty(draws)
    worst = 0.0
    for j, x in enumerate(X):
        phis[j] = mp_test(scan_orbit(x, order, g0), alpha).phi
        if alpha == 0.5:
            phi_sw = mp_test(scan_orbit(apply(swap, x), order, g0), alpha).phi
            worst = max(worst, abs(phis[j] + phi_sw - 1.0))
    crit = stats.norm.ppf(1.0 - alpha) if 0 < alpha < 1 else (np.inf if alpha == 0 else -np.inf)
    rej = (X[:, 1] > crit).astype(float)
    se = lambda v: float(v.std(ddof=1) / np.sqrt(draws)) if draws > 1 else float("inf")
    return NPReport(
        float(delta), float(alpha), int(draws),
        float(phis.mean()), se(phis),
        float(rej.mean()), se(rej),
        float(stats.norm.sf(crit - delta)),
        worst if alpha == 0.5 else None,
    )
