import math
import warnings

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from nodal_shooting import geometry, matcher


@pytest.fixture(scope="session")
def fam122():
    return geometry.make_family(1, 2, 2)


@pytest.fixture(scope="session")
def fam211():
    return geometry.make_family(2, 1, 1)


@pytest.fixture(scope="session")
def fam213():
    return geometry.make_family(2, 1, 3)


@pytest.fixture(scope="session")
def match122_k3(fam122):
    return matcher.solve_for_k(fam122, 1.0, 3.0, 3)


@pytest.fixture(scope="session")
def match211_k3(fam211):
    # lambda = 4 mu on the ell=2 family
    return matcher.solve_for_k(fam211, 1.0, 3.0, 3)


@pytest.fixture(scope="session")
def match211_p7_k2(fam211):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return matcher.solve_for_k(fam211, 1.0, 7.0, 2)


def scipy_oracle(family, mu, p, d, r_end=None, reflected=False, r0=1e-6, tol=1e-13, dense=False):
    """Independent DOP853 integration of the family IVP from a quadratic launch."""
    mm, mp = family.m_minus, family.m_plus
    if reflected:
        mm, mp = mp, mm
    s, t = (mm + mp) / 2, (mp - mm) / 2
    if r_end is None:
        r_end = math.acos(t / s)

    def g(w):
        return abs(w) ** (p - 1) * w - w

    k = mu * g(d) / (1 + mm)

    def rhs(r, y):
        return [y[1], -(s * math.cos(r) - t) / math.sin(r) * y[1] - mu * g(y[0])]

    sol = solve_ivp(rhs, (r0, r_end), [d - k * r0**2 / 2, -k * r0], method="DOP853", rtol=tol, atol=tol,
                    dense_output=dense)
    return sol


def oracle_zero_count(family, mu, p, d, reflected=False, samples=200_001):
    sol = scipy_oracle(family, mu, p, d, reflected=reflected, dense=True)
    x = np.linspace(sol.t[0], sol.t[-1], samples)
    w = sol.sol(x)[0]
    return int(np.sum(w[:-1] * w[1:] < 0))
