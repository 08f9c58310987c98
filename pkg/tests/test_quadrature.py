import math

import numpy as np
import pytest
from scipy.integrate import quad

from nodal_shooting.quadrature import QuadratureError, adaptive_simpson


def test_cubic_exact():
    val = adaptive_simpson(lambda x: 4 * x**3 - x, [0.0, 2.0])
    assert val == pytest.approx(14.0, abs=1e-13)


def test_smooth_against_scipy():
    f = lambda x: np.exp(-x) * np.sin(5 * x)  # noqa: E731
    ref = quad(f, 0.0, 3.0, epsabs=1e-14)[0]
    assert abs(adaptive_simpson(f, np.linspace(0, 3, 4)) - ref) <= 1e-10


def test_endpoint_sqrt_singularity():
    assert abs(adaptive_simpson(np.sqrt, [0.0, 1.0]) - 2 / 3) <= 1e-9


def test_kink_at_breakpoint():
    assert adaptive_simpson(np.abs, [-1.0, 0.0, 2.0]) == pytest.approx(2.5, abs=1e-14)


def test_degenerate_and_invalid():
    assert adaptive_simpson(np.sin, [1.0, 1.0]) == 0.0
    with pytest.raises(ValueError):
        adaptive_simpson(np.sin, [1.0])
    with pytest.raises(ValueError):
        adaptive_simpson(np.sin, [1.0, 0.0])


def test_nonconvergence_raises():
    with pytest.raises(QuadratureError):
        adaptive_simpson(lambda x: np.sin(1 / np.maximum(x, 1e-300)), [0.0, 1.0], tol=1e-14, max_depth=8)


def test_oscillatory_many_breakpoints():
    x = np.linspace(0, 20 * math.pi, 41)
    assert abs(adaptive_simpson(np.cos, x)) <= 1e-10
