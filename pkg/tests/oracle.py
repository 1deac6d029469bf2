"""Naive reference implementations used as test oracles.

Written with plain loops and no package helpers, so agreement with the
package is evidence rather than tautology.  Gaussian region probabilities use
scipy's multivariate normal CDF.
"""

import itertools
import math


def naive_orbit(x, log_g0, key):
    """List of (perm, image, log g0, key) for every permutation, lexicographic."""
    out = []
    for p in itertools.permutations(range(len(x))):
        img = [x[i] for i in p]
        out.append((p, img, log_g0(img), key(img)))
    return out


def naive_classes(x, log_g0, key, rtol=1e-9):
    """Weights, class sizes and 1-based observed rank by brute force.

    Ties follow the same chained rule as the package: a key joins the current
    class when it is within ``rtol * max(1, |a|, |b|)`` of the previous key in
    descending order.
    """
    orbit = naive_orbit(x, log_g0, key)
    items = sorted(range(len(orbit)), key=lambda j: -orbit[j][3])
    classes = []
    prev = None
    for j in items:
        k = orbit[j][3]
        if prev is not None and (k == prev or abs(k - prev) <= rtol * max(1.0, abs(k), abs(prev))):
            classes[-1].append(j)
        else:
            classes.append([j])
        prev = k
    shift = max(o[2] for o in orbit)
    mass = [math.fsum(math.exp(orbit[j][2] - shift) for j in c) for c in classes]
    total = math.fsum(mass)
    w = [m / total for m in mass]
    r = next(i for i, c in enumerate(classes) if 0 in c) + 1
    return w, [len(c) for c in classes], r


def naive_phi(w, r, alpha):
    """Knapsack test value of class r, written out as the textbook loop."""
    if alpha <= 0:
        return 0.0
    if alpha >= 1:
        return 1.0
    spent = 0.0
    for i, wi in enumerate(w, 1):
        if spent + wi < alpha:
            val = 1.0
        elif spent < alpha:
            val = (alpha - spent) / wi
        else:
            val = 0.0
        if i == r:
            return val
        spent += wi
    raise AssertionError("rank beyond the class list")


def naive_alpha_strict(w, r):
    return math.fsum(w[: r - 1])


def gaussian_region_probability(cov, sigma):
    """P(X[sigma[0]] < X[sigma[1]] < ...) for X ~ N(0, cov).

    The event is that all successive differences are positive; by symmetry of
    the centred difference vector this is its CDF at the origin.
    """
    import numpy as np
    from scipy import stats

    n = len(sigma)
    Dm = np.zeros((n - 1, n))
    for j in range(n - 1):
        Dm[j, sigma[j + 1]], Dm[j, sigma[j]] = 1.0, -1.0
    C = Dm @ np.asarray(cov) @ Dm.T
    if n == 2:
        return float(stats.norm.cdf(0.0))
    return float(stats.multivariate_normal.cdf(np.zeros(n - 1), np.zeros(n - 1), C, abseps=1e-8))


def geometric_expectation(x, key, cov):
    """Expected geometric estimate: total region mass of induced permutations ranked above x.

    A draw whose ascending sort order is sigma induces pi = sigma[pi0], where
    pi0 = argsort(argsort(x)) locates x.  Uses plain loops and `key` on lists.
    """
    n = len(x)
    srt = sorted(range(n), key=lambda i: x[i])
    pi0 = [0] * n
    for rank, i in enumerate(srt):
        pi0[i] = rank
    obs = key(list(x))
    total = 0.0
    for sigma in itertools.permutations(range(n)):
        pi = [sigma[pi0[i]] for i in range(n)]
        k = key([x[j] for j in pi])
        if k > obs and abs(k - obs) > 1e-9 * max(1.0, abs(k), abs(obs)):
            total += gaussian_region_probability(cov, sigma)
    return total
