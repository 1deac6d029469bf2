import numpy as np
import pytest
from hypothesis import settings

from genperm.densities import DensityModel, linear_exp_model
from genperm.exact import RatioOrder

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

E = np.e
TOY_A_W = np.array([E**3, E**2, E]) / (E**3 + E**2 + E)


@pytest.fixture
def toy_a():
    g0 = linear_exp_model([0, 0, 1])
    g1 = linear_exp_model([0, 0, 2])
    return g0, g1, RatioOrder.ratio(g0, g1)


class Instance:
    """Random non-exchangeable density pair with pure-Python twins for the oracle."""

    def __init__(self, rng, n, ties=False):
        self.n = n
        if ties:
            self.x = rng.integers(0, 3, size=n).astype(float)
        else:
            self.x = rng.normal(size=n)
        self.a = rng.normal(size=n)
        self.b = rng.normal(size=n)
        B = rng.normal(size=(n, n)) * 0.3
        self.B = B + B.T
        a, b, Q = self.a, self.b, self.B
        self.g0 = DensityModel(lambda X: np.atleast_2d(X) @ a + 0.5 * np.einsum("ij,jk,ik->i", X, Q, X), n)
        self.g1 = DensityModel(lambda X: np.atleast_2d(X) @ b, n)
        self.order = RatioOrder.ratio(self.g0, self.g1)

    def log_g0(self, z):
        n = self.n
        quad = sum(z[i] * self.B[i][j] * z[j] for i in range(n) for j in range(n))
        return sum(self.a[i] * z[i] for i in range(n)) + 0.5 * quad

    def key(self, z):
        return sum(self.b[i] * z[i] for i in range(self.n)) - self.log_g0(z)


def random_instances(seed, count, n_range=(3, 6)):
    rng = np.random.default_rng(seed)
    out = []
    for j in range(count):
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        out.append(Instance(rng, n, ties=(j % 4 == 3)))
    return out


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for num in sorted(results):
            terminalreporter.write_line(results[num])
