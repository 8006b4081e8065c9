import numpy as np
import pytest

from beamforge.errors import GridMismatchError
from beamforge.quadrature import h1_norm, l2_norm, simpson, simpson_weights, time_derivative


def test_simpson_exact_for_cubics():
    # [DERIVED] int_0^2 (t^3 - t + 1) dt = 4 - 2 + 2 = 4
    t = np.linspace(0, 2, 5)
    assert simpson(t**3 - t + 1, t[1]) == pytest.approx(4.0, rel=1e-15)


def test_simpson_fourth_order():
    errs = []
    for n in (8, 16, 32):
        t = np.linspace(0, 1, n + 1)
        errs.append(abs(simpson(np.exp(t), t[1]) - (np.e - 1)))
    assert np.log2(errs[0] / errs[1]) > 3.9 and np.log2(errs[1] / errs[2]) > 3.9


def test_simpson_needs_even_intervals():
    with pytest.raises(GridMismatchError):
        simpson_weights(4, 0.1)


def test_simpson_batched_axis():
    t = np.linspace(0, 1, 11)
    vals = np.stack([t, t**2], axis=1)
    np.testing.assert_allclose(simpson(vals, t[1]), [0.5, 1 / 3], rtol=1e-14)


def test_norms_by_hand():
    # [DERIVED] ||sin(pi t)||^2 = 1/2, ||pi cos(pi t)||^2 = pi^2/2 on [0, 1]
    t = np.linspace(0, 1, 2001)
    v = np.sin(np.pi * t)
    assert l2_norm(v, t[1]) == pytest.approx(np.sqrt(0.5), rel=1e-10)
    assert h1_norm(v, t[1]) == pytest.approx(np.sqrt(0.5 + np.pi**2 / 2), rel=1e-6)


def test_derivative_exact_for_quadratics():
    t = np.linspace(0, 1, 7)
    np.testing.assert_allclose(time_derivative(3 * t**2 - t, t[1]), 6 * t - 1, atol=1e-12)
