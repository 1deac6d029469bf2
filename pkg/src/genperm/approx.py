"""Sample-based approximations to the most powerful generalized permutation test.

A sample of permutations drawn with replacement replaces the full orbit.  The
probability that a random sample rejects is a multinomial Bernstein polynomial
in the class-selection probabilities ``p``; the functions here evaluate that
polynomial exactly by enumerating compositions of the sample size, together
with the concentration bounds that drive its convergence.

Class masses are taken as the normalized orbit weights, so every quantity is
free of the arbitrary scale of an unnormalized null density.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterator, Optional, Sequence

import numpy as np
from scipy.special import gammaln, xlogy

from .densities import DensityModel
from .errors import (CompositionLimit, DimensionMismatch, DiscontinuityPoint, EmptySample,
                     InputError, OrbitMassZero)
from .exact import OrbitScan, RatioOrder, TestDecision, _decide, group_sorted_keys, TIE_RTOL

__all__ = [
    "DEFAULT_COMPOSITION_LIMIT",
    "SampleScan",
    "ConcentrationTail",
    "as_perm_array",
    "sample_scan",
    "approx_test_from_sample",
    "multinomial_kernel",
    "n_compositions",
    "enumerate_compositions",
    "compositions_array",
    "uniform_class_probabilities",
    "chi",
    "bernstein_test_value",
    "bernstein_generic",
    "concentration_tail",
    "convergence_envelope",
]

DEFAULT_COMPOSITION_LIMIT = 10**6


@dataclass(frozen=True, eq=False)
class SampleScan:
    """Ratio classes observed in a sample of permutations.

    ``k[i]`` counts the draws (with multiplicity) landing in class i and
    ``class_log_mass[i]`` is the log null mass attributed to the class; the
    approximate weights are proportional to ``k * exp(class_log_mass)``.
    """

    Dhat: int
    k: np.ndarray
    class_log_mass: np.ndarray
    class_log_ratio: np.ndarray
    rhat: int
    weights: np.ndarray
    identity_appended: bool


def as_perm_array(S, n: int) -> np.ndarray:
    """Coerce a sequence of Permutation objects or index rows to an int array."""
    rows = [getattr(p, "map", p) for p in S]
    if not rows:
        raise EmptySample("the permutation sample is empty")
    P = np.asarray(rows, dtype=np.intp)
    if P.ndim != 2 or P.shape[1] != n:
        raise DimensionMismatch(f"sample rows must have length {n}")
    return P


def sample_scan(S, x, order: RatioOrder, g0: Optional[DensityModel] = None,
                class_mass: str = "distinct", rtol: float = TIE_RTOL) -> SampleScan:
    """Group a permutation sample into ratio classes.

    `class_mass` selects how a class's null mass is formed from its draws:
    ``"distinct"`` sums g0 over the distinct sampled members and multiplies by
    the class count k_i; ``"draws"`` sums g0 over every draw, duplicates
    included, which reduces to the exact weights for a one-copy-per-permutation
    sample even when tie classes differ in size.
    """
    if class_mass not in ("distinct", "draws"):
        raise InputError(f"unknown class_mass {class_mass!r}")
    x = np.asarray(x, dtype=float)
    n = x.size
    g0 = order.g0 if g0 is None else g0
    if g0 is None:
        raise InputError("a null density is required to weight the sample")
    P = as_perm_array(S, n)
    ident = np.arange(n)
    appended = not np.any(np.all(P == ident, axis=1))
    if appended:
        P = np.vstack([P, ident])
    uniq, counts = np.unique(P, axis=0, return_counts=True)
    X = x[uniq]
    lg0 = g0.log_density_many(X)
    if np.all(np.isneginf(lg0)):
        raise OrbitMassZero("g0 vanishes on every sampled permutation image")
    keys, _ = order.keys(X, lg0, g0)
    srt, cls, starts = group_sorted_keys(keys, rtol)
    D = int(starts.sum())
    shift = np.max(lg0)
    e = np.exp(lg0 - shift)
    k = np.bincount(cls, weights=counts, minlength=D)
    if class_mass == "distinct":
        mass = np.bincount(cls, weights=e, minlength=D)
        raw = k * mass
    else:
        mass = np.bincount(cls, weights=e * counts, minlength=D)
        raw = mass
    with np.errstate(divide="ignore"):
        log_mass = np.log(mass) + shift
    id_row = int(np.flatnonzero(np.all(uniq == ident, axis=1))[0])
    return SampleScan(
        Dhat=D,
        k=k.astype(np.int64),
        class_log_mass=log_mass,
        class_log_ratio=keys[srt][starts],
        rhat=int(cls[id_row]) + 1,
        weights=raw / raw.sum(),
        identity_appended=appended,
    )


def approx_test_from_sample(S, x, order: RatioOrder, g0: Optional[DensityModel], alpha: float,
                            class_mass: str = "distinct") -> TestDecision:
    """Approximate most powerful test computed from a permutation sample `S`.

    The identity permutation is added to `S` when missing so that the observed
    point has a rank among the sampled classes.
    """
    sc = sample_scan(S, x, order, g0, class_mass)
    return _decide(sc.weights, sc.rhat, alpha)


def multinomial_kernel(k, p) -> np.ndarray | float:
    """Multinomial probability of composition(s) `k` under class probabilities `p`.

    `k` may be a single composition or an ``(m, D)`` array of them; ``0**0``
    is taken as 1.
    """
    k = np.asarray(k)
    p = np.asarray(p, dtype=float)
    if k.shape[-1] != p.size:
        raise DimensionMismatch(f"composition of length {k.shape[-1]} with {p.size} probabilities")
    s = k.sum(axis=-1)
    logm = gammaln(s + 1) - gammaln(k + 1).sum(axis=-1) + xlogy(k, p).sum(axis=-1)
    out = np.exp(logm)
    return float(out) if out.ndim == 0 else out


def n_compositions(s: int, D: int) -> int:
    return math.comb(s + D - 1, D - 1)


def _check_compositions(s, D, limit):
    if s < 0 or D < 1:
        raise InputError("need s >= 0 and D >= 1")
    limit = DEFAULT_COMPOSITION_LIMIT if limit is None else limit
    count = n_compositions(s, D)
    if count > limit:
        raise CompositionLimit(f"{count} compositions of {s} into {D} parts exceed the limit {limit}")


def enumerate_compositions(s: int, D: int, limit: Optional[int] = None) -> Iterator[tuple]:
    """Yield every ``k >= 0`` with ``sum(k) == s`` in lexicographic order."""
    _check_compositions(s, D, limit)
    # stars and bars: bar positions in increasing lexicographic order
    for bars in itertools.combinations(range(s + D - 1), D - 1):
        prev = -1
        k = []
        for b in bars:
            k.append(b - prev - 1)
            prev = b
        k.append(s + D - 2 - prev)
        yield tuple(k)


def compositions_array(s: int, D: int, limit: Optional[int] = None) -> np.ndarray:
    _check_compositions(s, D, limit)
    return np.array(list(enumerate_compositions(s, D, limit)), dtype=np.int64).reshape(-1, D)


def uniform_class_probabilities(scan: OrbitScan) -> np.ndarray:
    """Equal selection probability for every class, the point at which the
    class-probability weights coincide with the exact weights."""
    return np.full(scan.D, 1.0 / scan.D)


def _simplex(p, D) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape != (D,):
        raise DimensionMismatch(f"expected {D} class probabilities, got shape {p.shape}")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
        raise InputError("class probabilities must be nonnegative and sum to 1")
    return p


def chi(p, scan: OrbitScan, alpha: float) -> float:
    """Test value the sample test converges to when classes are drawn with probabilities `p`.

    Raises DiscontinuityPoint when ``p_r = 0`` and the mass ranked above the
    observed class equals `alpha` exactly, where the limit from the interior
    of the simplex is not unique.
    """
    p = _simplex(p, scan.D)
    c = scan.class_weight
    denom = float(p @ c)
    if denom <= 0:
        raise InputError("p puts no probability on classes with null mass")
    wstar = p * c / denom
    r = scan.r
    if p[r - 1] == 0:
        above = math.fsum(wstar[: r - 1])
        if above == alpha:
            raise DiscontinuityPoint("p_r = 0 on the boundary of the randomization region")
    return float(_decide(wstar, r, alpha).phi)


def _rule_values(A, B, alpha):
    """Vectorized 1 / theta / 0 rule for mass above (A) and at (B) the observed class."""
    vals = np.zeros_like(A)
    if alpha <= 0:
        return vals
    if alpha >= 1:
        return np.ones_like(A)
    vals[A + B < alpha] = 1.0
    brk = (A < alpha) & (alpha <= A + B)
    if np.any(B[brk] <= 0):
        raise AssertionError("randomization region reached with an empty observed class")
    vals[brk] = (alpha - A[brk]) / B[brk]
    return vals


def bernstein_test_value(scan: OrbitScan, p=None, s: int = 1, alpha: float = 0.05,
                         limit: Optional[int] = None) -> float:
    """Rejection probability of the sample test, by exact enumeration over compositions."""
    p = uniform_class_probabilities(scan) if p is None else _simplex(p, scan.D)
    if s < 1:
        raise InputError("sample size must be positive")
    K = compositions_array(s, scan.D, limit)
    M = multinomial_kernel(K, p)
    c = scan.class_weight
    raw = K * c
    tot = raw.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        w = np.where(tot[:, None] > 0, raw / tot[:, None], 0.0)
    r = scan.r
    A = w[:, : r - 1].sum(axis=1)
    B = w[:, r - 1]
    return float(np.clip(_rule_values(A, B, alpha) @ M, 0.0, 1.0))


def bernstein_generic(f: Callable[[np.ndarray], float], p, s: int,
                      limit: Optional[int] = None) -> float:
    """Multinomial Bernstein polynomial of `f` of degree `s` evaluated at `p`."""
    p = np.asarray(p, dtype=float)
    K = compositions_array(s, p.size, limit)
    M = multinomial_kernel(K, p)
    vals = np.array([f(k / s) for k in K], dtype=float)
    return float(vals @ M)


@dataclass(frozen=True)
class ConcentrationTail:
    """Multinomial tail mass beyond ``delta`` and the two closed-form bounds.

    ``exact_tail`` uses the weighted L1 distance ``sum_i c_i |p_i - k_i/s|``;
    ``exact_tail_signed`` uses ``|sum_i c_i (p_i - k_i/s)|``, the deviation of
    the sample mean of U that the Bernstein and Hoeffding inequalities control.
    """

    exact_tail: Optional[float]
    exact_tail_signed: Optional[float]
    bernstein_bound: float
    hoeffding_bound: float
    sigma2: float
    c: float
    norm_p: float


def concentration_tail(scan: OrbitScan, p, s: int, delta: float,
                       limit: Optional[int] = None) -> ConcentrationTail:
    """Concentration of the multinomial kernel around `p`.

    U takes the value c_i (normalized class mass) with probability p_i; sigma2
    is Var U and c bounds ``|U - E U|``.  Above the composition limit only the
    bounds are returned.
    """
    if delta <= 0:
        raise InputError("delta must be positive")
    p = _simplex(p, scan.D)
    cm = scan.class_weight
    mean = float(p @ cm)
    sigma2 = float(p @ (cm - mean) ** 2)
    c = float(np.max(np.abs(cm - mean)[p > 0]))
    bern = 2.0 * math.exp(-0.5 * s * delta**2 / (sigma2 + c * delta / 3.0))
    hoef = 2.0 * math.exp(-s * delta**2 / (2.0 * c)) if c > 0 else 0.0
    exact = signed = None
    try:
        K = compositions_array(s, scan.D, limit)
    except CompositionLimit:
        K = None
    if K is not None:
        M = multinomial_kernel(K, p)
        dev = p - K / s
        l1 = np.abs(dev) @ cm
        sg = np.abs(dev @ cm)
        # guard against rounding at the boundary
        eps = 1e-12 * max(1.0, delta)
        exact = float(M[l1 >= delta - eps].sum())
        signed = float(M[sg >= delta - eps].sum())
    return ConcentrationTail(exact, signed, bern, hoef, sigma2, c, mean)


def convergence_envelope(scan: OrbitScan, p, s: int, alpha: float, deltas=None) -> float:
    """Upper envelope for ``|E phi_hat_s - chi(p)|`` from continuity plus concentration.

    For each delta, compositions within weighted distance delta of `p` move the
    test value by at most ``(2 delta / |p|) (1 + theta) / (w_r - 2 delta / |p|)``
    and the rest carry at most the Bernstein tail.  The smallest total over the
    delta grid is returned, capped at 1.
    """
    p = _simplex(p, scan.D)
    cm = scan.class_weight
    norm = float(p @ cm)
    wstar = p * cm / norm
    dec = _decide(wstar, scan.r, alpha)
    w_r = float(wstar[scan.r - 1])
    if deltas is None:
        deltas = norm * np.geomspace(1e-4, 0.5, 200)
    best = 1.0
    for d in deltas:
        step = 2.0 * d / norm
        if step >= w_r:
            continue
        lip = step * (1.0 + dec.vartheta) / (w_r - step)
        tail = concentration_tail(scan, p, s, d, limit=0).bernstein_bound
        best = min(best, lip + min(1.0, tail))
    return best
