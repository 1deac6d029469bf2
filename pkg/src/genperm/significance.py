"""p-value estimation for the most powerful generalized permutation test.

The exact significance of an observed point is the null mass of the orbit
classes ranked strictly above it.  Three Monte Carlo estimators are provided:

* direct: uniform permutations, self-normalized ratio of the null mass above
  the observed ratio to the total sampled null mass;
* indirect (class probabilities): classes drawn in proportion to their null
  mass, estimator is the fraction ranked above the observed class;
* geometric: permutations induced by draws from an approximation to the null
  density, so that no orbit enumeration is needed.

Each estimate carries a :class:`BoundReport` of Bernstein and Hoeffding tail
bounds on its deviation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .approx import as_perm_array
from .densities import DensityModel
from .errors import EmptySample, ExhaustiveLimit, InputError, OrbitMassZero
from .exact import (TIE_RTOL, OrbitScan, RatioOrder, exact_significance, keys_close,
                    scan_orbit)
from .perm import Permutation, locate_region, sample_uniform_array

__all__ = [
    "BoundReport",
    "SignificanceEstimate",
    "direct_estimate",
    "direct_bounds",
    "direct_bounds_from_values",
    "indirect_estimate_classprob",
    "indirect_bounds",
    "geometric_estimate",
]

DEFAULT_EPSILONS = (0.05, 0.1)


@dataclass(frozen=True)
class BoundReport:
    """Tail bounds ``P[|alpha_hat - alpha| > eps]`` on a grid of eps.

    Tails are clamped to [0, 1]; the unclamped values are kept in
    ``bernstein_raw`` and ``hoeffding_raw``.  ``constants`` maps each constant
    name to one value per eps.
    """

    epsilon: tuple
    bernstein_tail: tuple
    hoeffding_tail: tuple
    bernstein_raw: tuple
    hoeffding_raw: tuple
    constants: dict
    flags: tuple = ()

    def as_dict(self) -> dict:
        return {
            "epsilon": list(self.epsilon),
            "bernstein_tail": list(self.bernstein_tail),
            "hoeffding_tail": list(self.hoeffding_tail),
            "bernstein_raw": list(self.bernstein_raw),
            "hoeffding_raw": list(self.hoeffding_raw),
            "constants": {k: list(v) for k, v in self.constants.items()},
            "flags": list(self.flags),
        }


@dataclass(frozen=True)
class SignificanceEstimate:
    alpha_hat: float
    s: int
    seed: Optional[int]
    method: str
    bounds: Optional[BoundReport]
    details: dict = field(default_factory=dict)
    warnings: tuple = ()


def _rng(rng):
    seed = int(rng) if isinstance(rng, (int, np.integer)) else None
    return np.random.default_rng(rng), seed


def _eps_grid(epsilon) -> tuple:
    eps = tuple(float(e) for e in np.atleast_1d(epsilon))
    if not eps:
        raise InputError("empty epsilon grid")
    return eps


def _clamp(v):
    return min(1.0, max(0.0, v))


def _report(eps, bern, hoef, consts, flags=()) -> BoundReport:
    return BoundReport(
        epsilon=eps,
        bernstein_tail=tuple(_clamp(b) for b in bern),
        hoeffding_tail=tuple(_clamp(h) for h in hoef),
        bernstein_raw=tuple(bern),
        hoeffding_raw=tuple(hoef),
        constants=consts,
        flags=tuple(flags),
    )


def direct_bounds_from_values(U, V, s: int, epsilon, flags=()) -> BoundReport:
    """Direct-estimator bounds for (U, V) uniform over the given value pairs.

    Each pair is the (numerator, denominator) contribution of one permutation:
    ``V = g0(pi x)`` and ``U = V`` when the image ranks strictly above the
    observed point, else 0.  a and b are the smallest and largest V.
    """
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    scale = V.max()
    if not scale > 0:
        raise OrbitMassZero("all null values are zero")
    U, V = U / scale, V / scale
    ubar, vbar = U.mean(), V.mean()
    a, b = V.min(), V.max()
    alpha = ubar / vbar
    eps = _eps_grid(epsilon)
    for e in eps:
        if not 0 < e < min(alpha, 1 - alpha):
            raise InputError(f"epsilon {e} outside (0, min(alpha, 1 - alpha)) with alpha = {alpha:.6g}")
    names = ["ubar", "vbar", "a", "b", "tau1", "tau1p", "tau2", "tau2p", "c", "cp"]
    consts = {k: [] for k in names}
    bern, hoef = [], []
    for e in eps:
        Z = U * vbar - (ubar + e * vbar) * V
        Zp = U * vbar - (ubar - e * vbar) * V
        tau1 = Z.var() / vbar**2
        tau1p = Zp.var() / vbar**2
        ev2 = e * vbar**2
        c = max((ubar + e * vbar) * b - ev2, vbar * b - (ubar + e * vbar) * a + ev2)
        cp = max((ubar - e * vbar) * b + ev2, vbar * b - (ubar - e * vbar) * a - ev2)
        tau2 = vbar**2 / (ubar * (b - a) + vbar * ((1 + e) * b - e * a))
        tau2p = vbar**2 / (ubar * (b - a) + vbar * ((1 - e) * b + e * a))
        num = 0.5 * s * e**2 * vbar**2
        bern.append(math.exp(-num / (tau1 + c * e / 3)) + math.exp(-num / (tau1p + cp * e / 3)))
        hoef.append(math.exp(-2 * s * e**2 * tau2**2) + math.exp(-2 * s * e**2 * tau2p**2))
        for k, v in zip(names, [ubar, vbar, a, b, tau1, tau1p, tau2, tau2p, c, cp]):
            consts[k].append(float(v))
    consts = {k: tuple(v) for k, v in consts.items()}
    consts["alpha"] = (float(alpha),) * len(eps)
    return _report(eps, bern, hoef, consts, flags)


def direct_bounds(scan: OrbitScan, s: int, epsilon) -> BoundReport:
    """Bernstein and Hoeffding bounds for the direct estimator with `s` draws.

    Moments of (U, V) are those of a single uniformly drawn permutation of the
    scanned orbit; a and b are the minimum and maximum of g0 over the orbit.
    """
    V = np.exp(scan.perm_log_g0 - np.max(scan.perm_log_g0))
    U = np.where(scan.perm_class < scan.r - 1, V, 0.0)
    return direct_bounds_from_values(U, V, s, epsilon)


def _valid_eps(alpha, eps):
    return tuple(e for e in eps if 0 < e < min(alpha, 1 - alpha))


def direct_estimate(x, order: RatioOrder, g0: Optional[DensityModel] = None, s: int = 1000,
                    rng=None, sample=None, epsilon=DEFAULT_EPSILONS,
                    limit: Optional[int] = None, rtol: float = TIE_RTOL) -> SignificanceEstimate:
    """Self-normalized estimate of the exact significance from uniform permutations.

    ``alpha_hat = sum(U) / sum(V)`` with ``V_j = g0(pi_j x)`` and ``U_j = V_j``
    when the ratio key of ``pi_j x`` is strictly greater than that of x (ties
    count in V only).  Passing `sample` replaces the random draws by the given
    permutations.  Bounds use the exact orbit when n is within the exhaustive
    limit and sample-based constants otherwise (flagged).
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    g0 = order.g0 if g0 is None else g0
    if g0 is None:
        raise InputError("a null density is required")
    gen, seed = _rng(rng)
    if sample is not None:
        P = as_perm_array(sample, n)
    else:
        if s < 1:
            raise EmptySample("direct estimation needs at least one permutation")
        P = sample_uniform_array(n, s, gen)
    s = P.shape[0]
    X = x[P]
    lg0 = g0.log_density_many(X)
    if np.all(np.isneginf(lg0)):
        raise OrbitMassZero("sum of sampled null values is zero")
    keys, _ = order.keys(X, lg0, g0)
    obs = order.keys(x[None, :], None, g0)[0][0]
    tied = keys_close(keys, obs, rtol)
    above = (keys > obs) & ~tied
    shift = np.max(lg0)
    e = np.exp(lg0 - shift)
    sum_u = math.fsum(e[above])
    sum_v = math.fsum(e)
    sum_t = math.fsum(e[tied])
    alpha_hat = sum_u / sum_v
    details = {"alpha_hat_mid": (sum_u + 0.5 * sum_t) / sum_v}
    warnings = []
    bounds = None
    eps = _eps_grid(epsilon)
    try:
        scan = scan_orbit(x, order, g0, limit, rtol)
        details["alpha_strict"] = exact_significance(scan).alpha_strict
        ok = _valid_eps(details["alpha_strict"], eps)
        if ok:
            bounds = direct_bounds(scan, s, ok)
    except ExhaustiveLimit:
        U = np.where(above, e, 0.0)
        ok = _valid_eps(alpha_hat, eps)
        if ok:
            bounds = direct_bounds_from_values(U, e, s, ok, flags=("approximate-constants",))
        warnings.append("approximate-constants: bound constants estimated from the sample")
    if bounds is None:
        warnings.append("no epsilon in the grid satisfies 0 < eps < min(alpha, 1 - alpha); bounds omitted")
    return SignificanceEstimate(alpha_hat, s, seed, "direct", bounds, details, tuple(warnings))


def indirect_bounds(p_below_r: float, s: int, epsilon) -> BoundReport:
    """Hoeffding and Bernstein bounds for a mean of `s` Bernoulli(p) draws."""
    p = float(p_below_r)
    if not 0 <= p <= 1:
        raise InputError("p_below_r must lie in [0, 1]")
    eps = _eps_grid(epsilon)
    if any(e <= 0 for e in eps):
        raise InputError("epsilon must be positive")
    sigma2 = p * (1 - p)
    c = max(p, 1 - p)
    hoef = [2 * math.exp(-2 * s * e**2) for e in eps]
    bern = [2 * math.exp(-0.5 * s * e**2 / (sigma2 + c * e / 3)) for e in eps]
    consts = {"p": (p,) * len(eps), "sigma2": (sigma2,) * len(eps), "c": (c,) * len(eps)}
    return _report(eps, bern, hoef, consts)


def indirect_estimate_classprob(scan: OrbitScan, s: int, rng=None,
                                epsilon=DEFAULT_EPSILONS) -> SignificanceEstimate:
    """Fraction of mass-proportional class draws ranked above the observed class.

    Unbiased for the strict exact significance; needs the full scan, so it is
    mainly a validation tool.
    """
    if s < 1:
        raise EmptySample("indirect estimation needs at least one draw")
    gen, seed = _rng(rng)
    w = scan.class_weight
    idx = gen.choice(scan.D, size=s, p=w / w.sum())
    alpha_hat = float(np.mean(idx < scan.r - 1))
    strict = exact_significance(scan).alpha_strict
    return SignificanceEstimate(alpha_hat, s, seed, "indirect-classprob",
                                indirect_bounds(strict, s, epsilon),
                                {"expected": strict, "variance_per_draw": strict * (1 - strict)})


def geometric_estimate(x, order: RatioOrder, g0_hat: DensityModel,
                       pi0: Optional[Permutation] = None, s: int = 1000, rng=None,
                       epsilon=DEFAULT_EPSILONS, rtol: float = TIE_RTOL,
                       max_redraw_rounds: int = 100) -> SignificanceEstimate:
    """Estimate significance from permutations induced by draws of `g0_hat`.

    Each draw x* lies in some region ``pi' T``; ``pi = pi0 pi'^-1`` moves it into
    the region of the observed point.  The estimate is the fraction of induced
    permutations whose image of x ranks strictly above x.  Its expectation is
    the `g0_hat` mass of the regions whose induced permutation ranks above x,
    which equals the exact significance when `g0_hat` is exchangeable.
    Tied draws are redrawn.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if s < 1:
        raise EmptySample("geometric estimation needs at least one draw")
    gen, seed = _rng(rng)
    warnings = []
    loc = locate_region(x)
    if pi0 is None:
        pi0 = loc.region_perm
    if loc.on_edge:
        warnings.append("observed point has tied coordinates; region fixed by stable sort")
    Xs = g0_hat.sample(gen, s)
    redraws = 0
    for _ in range(max_redraw_rounds):
        srt = np.sort(Xs, axis=1)
        bad = np.flatnonzero(np.any(srt[:, 1:] == srt[:, :-1], axis=1))
        if bad.size == 0:
            break
        redraws += bad.size
        Xs[bad] = g0_hat.sample(gen, bad.size)
    else:
        raise InputError("sampler keeps producing tied coordinates")
    if redraws:
        warnings.append(f"on_edge redraws: {redraws} tied draws replaced")
    sigma = np.argsort(Xs, axis=1, kind="stable")
    P = sigma[:, list(pi0.map)]
    keys, _ = order.keys(x[P], None, None)
    obs = order.keys(x[None, :])[0][0]
    above = (keys > obs) & ~keys_close(keys, obs, rtol)
    alpha_hat = float(above.mean())
    uniq, counts = np.unique(P, axis=0, return_counts=True)
    region_masses = {tuple(int(i) + 1 for i in row): c / s for row, c in zip(uniq, counts)}
    var = alpha_hat * (1 - alpha_hat)
    details = {
        "region_masses": region_masses,
        "expected": alpha_hat,
        "variance_per_draw": var,
        "se": math.sqrt(var / s),
        "on_edge_redraws": redraws,
    }
    bounds = indirect_bounds(alpha_hat, s, epsilon)
    bounds = BoundReport(bounds.epsilon, bounds.bernstein_tail, bounds.hoeffding_tail,
                         bounds.bernstein_raw, bounds.hoeffding_raw, bounds.constants,
                         ("approximate-constants",))
    return SignificanceEstimate(alpha_hat, s, seed, "indirect-geometric", bounds, details,
                                tuple(warnings))
