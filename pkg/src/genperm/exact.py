"""Exact generalized permutation tests by full orbit enumeration.

For an observed point ``x`` all n! images ``pi x`` are scanned.  Images are
grouped into classes of equal likelihood ratio (or equal order statistic),
classes are sorted by decreasing ratio, and each class carries the share of
the orbit's null mass that falls on it.  The most powerful test is the
fractional-knapsack solution over those classes: classes with the largest
ratios are rejected outright until the level is nearly spent, and the break
class is rejected with the probability that spends it exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple, Optional

import numpy as np

from .densities import DensityModel, MCEstimate, l1_distance_estimate
from .errors import InputError, OrbitMassZero
from .perm import all_permutations

__all__ = [
    "TIE_RTOL",
    "RatioOrder",
    "LogRatio",
    "OrbitScan",
    "TestDecision",
    "ExactSignificance",
    "CriterionReport",
    "likelihood_ratio",
    "log_ratio_keys",
    "keys_close",
    "group_sorted_keys",
    "scan_orbit",
    "weights",
    "class_test_values",
    "mp_test",
    "exact_significance",
    "bias_bound",
    "mp_criterion_diagnostic",
    "exactness_check",
]

TIE_RTOL = 1e-9


class LogRatio(NamedTuple):
    value: float
    both_zero: bool


def log_ratio_keys(log_g0, log_g1):
    """Vectorized log(g1/g0) with the conventions for zero densities.

    Returns ``(keys, both_zero)``.  ``g0 = 0 < g1`` gives ``+inf``; where both
    vanish the ratio is defined as 0, i.e. a key of ``-inf``, and flagged.
    """
    lg0 = np.asarray(log_g0, dtype=float)
    lg1 = np.asarray(log_g1, dtype=float)
    zero0 = np.isneginf(lg0)
    zero1 = np.isneginf(lg1)
    with np.errstate(invalid="ignore"):
        keys = lg1 - lg0
    keys = np.where(zero0 & ~zero1, np.inf, keys)
    keys = np.where(zero0 & zero1, -np.inf, keys)
    return keys, zero0 & zero1


def likelihood_ratio(x, g0: DensityModel, g1: DensityModel) -> LogRatio:
    keys, both = log_ratio_keys(g0.log_density(x), g1.log_density(x))
    return LogRatio(float(keys), bool(both))


@dataclass(frozen=True, eq=False)
class RatioOrder:
    """How images of a point are ranked.

    Either a pair of densities, ranked by ``log(g1/g0)``, or a statistic whose
    ordering matches the likelihood-ratio ordering (larger means more
    alternative-like).  Only the ordering matters, so a statistic is enough
    when the alternative is known up to a monotone transform.
    """

    g0: Optional[DensityModel] = None
    g1: Optional[DensityModel] = None
    stat: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = "order"

    def __post_init__(self):
        pair = self.g0 is not None and self.g1 is not None
        if pair == (self.stat is not None) or (self.g0 is None) != (self.g1 is None):
            raise InputError("RatioOrder needs exactly one of (g0, g1) or stat")

    @classmethod
    def ratio(cls, g0: DensityModel, g1: DensityModel, name="likelihood-ratio") -> "RatioOrder":
        return cls(g0=g0, g1=g1, name=name)

    @classmethod
    def statistic(cls, fn, vectorized: bool = True, name="statistic") -> "RatioOrder":
        if not vectorized:
            pointwise = fn

            def fn(X):
                return np.array([pointwise(row) for row in np.atleast_2d(X)], dtype=float)

        return cls(stat=fn, name=name)

    @property
    def is_ratio_pair(self) -> bool:
        return self.stat is None

    def keys(self, X, log_g0=None, g0: Optional[DensityModel] = None):
        """Ranking keys for the rows of `X`, and the both-zero mask.

        `log_g0` may be passed to avoid re-evaluating the null density when the
        caller already has it for the same model.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.stat is not None:
            keys = np.asarray(self.stat(X), dtype=float).reshape(X.shape[0])
            return keys, np.zeros(X.shape[0], dtype=bool)
        if log_g0 is None or (g0 is not None and g0 is not self.g0):
            log_g0 = self.g0.log_density_many(X)
        return log_ratio_keys(log_g0, self.g1.log_density_many(X))


def keys_close(a, b, rtol: float = TIE_RTOL):
    """Tie rule: ``|a - b| <= rtol * max(1, |a|, |b|)``; equal infinities tie."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    with np.errstate(invalid="ignore"):
        diff = np.abs(a - b)
        scale = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
        return (a == b) | (diff <= rtol * scale)


def group_sorted_keys(keys, rtol: float = TIE_RTOL):
    """Sort keys descending and split them into tie classes.

    Returns ``(order, class_of, starts)``: `order` sorts the keys (stable, so
    equal keys keep their input order), ``class_of[j]`` is the 0-based class of
    input element j, and `starts` marks class boundaries in sorted order.
    Neighbouring sorted keys within tolerance share a class.
    """
    keys = np.asarray(keys, dtype=float)
    if np.any(np.isnan(keys)):
        raise InputError("ranking key evaluated to NaN")
    order = np.argsort(-keys, kind="stable")
    sk = keys[order]
    starts = np.ones(sk.size, dtype=bool)
    starts[1:] = ~keys_close(sk[:-1], sk[1:], rtol)
    class_of = np.empty(sk.size, dtype=np.intp)
    class_of[order] = np.cumsum(starts) - 1
    return order, class_of, starts


@dataclass(frozen=True, eq=False)
class OrbitScan:
    """Likelihood-ratio class structure of one point's permutation orbit.

    Classes are indexed 0..D-1 in arrays and by 1-based ``r`` in the usual
    notation.  ``class_log_ratio`` holds the ranking key of each class, which
    is the log likelihood ratio for a density pair and the statistic value
    otherwise.  Per-permutation arrays follow the row order of
    :func:`genperm.perm.all_permutations`.
    """

    n: int
    D: int
    class_log_ratio: np.ndarray
    class_log_mass: np.ndarray
    class_size: np.ndarray
    r: int
    log_orbit_mass: float
    class_weight: np.ndarray
    perm_class: np.ndarray
    perm_log_g0: np.ndarray
    perm_key: np.ndarray
    observed_key: float
    n_near_ties: int = 0
    n_both_zero: int = 0
    warnings: tuple = field(default=())

    @property
    def class_mass(self) -> np.ndarray:
        """Class masses rescaled so the largest single g0 value is 1."""
        return np.exp(self.class_log_mass - np.max(self.perm_log_g0))


def _build_scan(n, keys, lg0, both_zero, rtol):
    if np.all(np.isneginf(lg0)):
        raise OrbitMassZero("g0 vanishes on every permutation image of x")
    order, perm_class, starts = group_sorted_keys(keys, rtol)
    D = int(starts.sum())
    sk = keys[order]
    n_near = int(np.sum(~starts[1:] & (sk[:-1] != sk[1:])))
    shift = np.max(lg0)
    e = np.exp(lg0 - shift)
    class_sum = np.bincount(perm_class, weights=e, minlength=D)
    total = class_sum.sum()
    with np.errstate(divide="ignore"):
        class_log_mass = np.log(class_sum) + shift
    warnings = []
    if n_near:
        warnings.append(f"ties merged: {n_near} near-equal ranking keys grouped within tolerance")
    if both_zero.any():
        warnings.append(f"{int(both_zero.sum())} permutation images have g0 = g1 = 0")
    return OrbitScan(
        n=n,
        D=D,
        class_log_ratio=sk[starts],
        class_log_mass=class_log_mass,
        class_size=np.bincount(perm_class, minlength=D),
        r=int(perm_class[0]) + 1,
        log_orbit_mass=float(np.log(total) + shift),
        class_weight=class_sum / total,
        perm_class=perm_class,
        perm_log_g0=lg0,
        perm_key=keys,
        observed_key=float(keys[0]),
        n_near_ties=n_near,
        n_both_zero=int(both_zero.sum()),
        warnings=tuple(warnings),
    )


def scan_orbit(x, order: RatioOrder, g0: Optional[DensityModel] = None,
               limit: Optional[int] = None, rtol: float = TIE_RTOL) -> OrbitScan:
    """Enumerate the orbit of `x` and build its ratio classes.

    `g0` supplies the null masses; when omitted the null density of a ratio
    pair is used.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise InputError("x must be a vector")
    g0 = order.g0 if g0 is None else g0
    if g0 is None:
        raise InputError("a null density is required to weight the orbit")
    P = all_permutations(x.size, limit)
    X = x[P]
    lg0 = g0.log_density_many(X)
    keys, both_zero = order.keys(X, lg0, g0)
    return _build_scan(x.size, keys, lg0, both_zero, rtol)


def weights(scan: OrbitScan) -> np.ndarray:
    """Share of the orbit's null mass carried by each class (sums to 1)."""
    return scan.class_weight.copy()


def class_test_values(w, alpha: float) -> np.ndarray:
    """Test value assigned to every class by the knapsack rule at level `alpha`."""
    w = np.asarray(w, dtype=float)
    if alpha <= 0:
        return np.zeros_like(w)
    if alpha >= 1:
        return np.ones_like(w)
    cum = np.cumsum(w)
    prev = cum - w
    phi = np.zeros_like(w)
    phi[cum < alpha] = 1.0
    brk = (prev < alpha) & (alpha <= cum)
    phi[brk] = (alpha - prev[brk]) / w[brk]
    return np.clip(phi, 0.0, 1.0)


@dataclass(frozen=True, eq=False)
class TestDecision:
    """Randomized test value at the observed point and its knapsack breakdown.

    ``d`` is the 1-based break class, ``vartheta`` the rejection probability
    assigned to it, and ``class_phi`` the test value of every class.
    """

    __test__ = False  # keep pytest from collecting this as a test class

    phi: float
    d: int
    vartheta: float
    weights: np.ndarray
    alpha: float
    r: int
    class_phi: np.ndarray


def _decide(w, r, alpha) -> TestDecision:
    w = np.asarray(w, dtype=float)
    if not 0.0 <= alpha <= 1.0:
        raise InputError(f"alpha must lie in [0, 1], got {alpha}")
    cls_phi = class_test_values(w, alpha)
    cum = np.cumsum(w)
    if alpha <= 0:
        d, vartheta = 1, 0.0
    elif alpha >= 1:
        d, vartheta = int(np.flatnonzero(w > 0)[-1]) + 1, 1.0
    else:
        hit = np.flatnonzero(cum >= alpha)
        d = int(hit[0]) + 1 if hit.size else w.size
        vartheta = float(np.clip((alpha - (cum[d - 1] - w[d - 1])) / w[d - 1], 0.0, 1.0))
    return TestDecision(float(cls_phi[r - 1]), d, vartheta, w, float(alpha), int(r), cls_phi)


def mp_test(scan: OrbitScan, alpha: float) -> TestDecision:
    """Most powerful generalized permutation test at the observed point."""
    return _decide(scan.class_weight, scan.r, alpha)


class ExactSignificance(NamedTuple):
    alpha_strict: float
    alpha_inclusive: float


def exact_significance(scan: OrbitScan) -> ExactSignificance:
    """Null mass of classes ranked above the observed one, without and with it."""
    w = scan.class_weight
    strict = math.fsum(w[: scan.r - 1])
    return ExactSignificance(strict, min(1.0, strict + float(w[scan.r - 1])))


def bias_bound(g: DensityModel, g_tilde: DensityModel, s: int, rng) -> float:
    """Upper bound on ``|E_g[phi~] - alpha|`` for a test built from `g_tilde`."""
    est = l1_distance_estimate(g, g_tilde, s, np.random.default_rng(rng))
    return min(2.0, est.value)


@dataclass(frozen=True)
class CriterionReport:
    l_d: np.ndarray
    min: float
    max: float
    spread: float


def mp_criterion_diagnostic(points: Iterable, order: RatioOrder, g0: Optional[DensityModel],
                            alpha: float, limit: Optional[int] = None) -> CriterionReport:
    """Ratio at the knapsack break class for each point.

    The generalized test is most powerful overall only when this value is
    (almost surely) constant, so a spread well above zero shows power is lost
    relative to the unrestricted Neyman-Pearson test.
    """
    vals = []
    for x in points:
        scan = scan_orbit(x, order, g0, limit)
        dec = mp_test(scan, alpha)
        vals.append(scan.class_log_ratio[dec.d - 1])
    vals = np.asarray(vals, dtype=float)
    if vals.size == 0:
        raise InputError("no points supplied")
    lo, hi = float(vals.min()), float(vals.max())
    spread = 0.0 if lo == hi else hi - lo
    return CriterionReport(vals, lo, hi, spread)


def exactness_check(g0: DensityModel, order: RatioOrder, alpha: float, draws: int, rng,
                    limit: Optional[int] = None) -> MCEstimate:
    """Monte Carlo estimate of ``E_{g0}[phi]``, which must equal `alpha`."""
    if draws < 1:
        raise InputError("draws must be positive")
    rng = np.random.default_rng(rng)
    X = g0.sample(rng, draws)
    phis = np.empty(draws)
    for j in range(draws):
        phis[j] = mp_test(scan_orbit(X[j], order, g0, limit), alpha).phi
    se = float(phis.std(ddof=1) / math.sqrt(draws)) if draws > 1 else float("inf")
    return MCEstimate(float(phis.mean()), se)
