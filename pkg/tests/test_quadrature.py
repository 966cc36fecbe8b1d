"""Adaptive Gauss quadrature against closed-form integrals."""

import numpy as np
import pytest

from cornerprobe.errors import QuadratureError
from cornerprobe.quadrature import adaptive_gauss, nested_gauss_2d


def test_polynomial_exact():
    val = adaptive_gauss(lambda x: x ** 7 - 3 * x ** 2 + 1, 0.0, 2.0)
    exact = 2.0 ** 8 / 8 - 2.0 ** 3 + 2.0
    assert val == pytest.approx(exact, rel=1e-13)


def test_decaying_exponential():
    val = adaptive_gauss(lambda x: np.exp(-50.0 * x), 0.0, 10.0, rtol=1e-12)
    assert val == pytest.approx(1.0 / 50.0, rel=1e-11)


def test_oscillatory_complex():
    val = adaptive_gauss(lambda x: np.exp(1j * 40.0 * x), 0.0, 1.0, rtol=1e-12)
    exact = (np.exp(40j) - 1.0) / 40j
    assert abs(val - exact) < 1e-11 * abs(exact)


def test_peaked_integrand():
    val = adaptive_gauss(lambda x: 1.0 / (1e-4 + x ** 2), -1.0, 1.0, rtol=1e-10)
    exact = 2.0 / 1e-2 * np.arctan(1.0 / 1e-2)
    assert val == pytest.approx(exact, rel=1e-9)


def test_budget_exhaustion_raises():
    with pytest.raises(QuadratureError, match="budget"):
        adaptive_gauss(
            lambda x: np.abs(np.sin(1.0 / np.maximum(np.abs(x), 1e-300))),
            0.0, 1.0, rtol=1e-14, max_panels=8,
        )


def test_nested_triangle_area():
    val = nested_gauss_2d(
        lambda x, ys: np.ones_like(ys), 0.0, 1.0, lambda x: (0.0, 1.0 - x)
    )
    assert val.real == pytest.approx(0.5, rel=1e-12)


def test_nested_gaussian():
    val = nested_gauss_2d(
        lambda x, ys: np.exp(-(x ** 2) - ys ** 2),
        -6.0, 6.0, lambda x: (-6.0, 6.0), rtol=1e-10,
    )
    assert val.real == pytest.approx(np.pi, rel=1e-9)
