"""Time-domain quadrature and differentiation on uniform grids."""

import numpy as np

from .errors import GridMismatchError

# 3-point Gauss-Legendre rule mapped to [0, 1]
GAUSS3_POINTS = 0.5 + 0.5 * np.array([-np.sqrt(3.0 / 5.0), 0.0, np.sqrt(3.0 / 5.0)])
GAUSS3_WEIGHTS = 0.5 * np.array([5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])


def simpson_weights(n_points, dt):
    """Composite Simpson weights for ``n_points`` uniformly spaced samples.

    ``n_points - 1`` must be even.
    """
    if n_points < 3 or (n_points - 1) % 2:
        raise GridMismatchError(
            f"Simpson's rule needs an even number of intervals, got {n_points - 1}"
        )
    w = np.empty(n_points)
    w[0::2] = 2.0
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return w * (dt / 3.0)


def simpson(values, dt):
    """Integrate samples along axis 0 with the composite Simpson rule."""
    values = np.asarray(values, dtype=float)
    w = simpson_weights(values.shape[0], dt)
    return np.tensordot(w, values, axes=(0, 0))


def l2_inner(a, b, dt):
    return simpson(np.asarray(a) * np.asarray(b), dt)


def l2_norm(values, dt):
    values = np.asarray(values, dtype=float)
    return float(np.sqrt(max(simpson(values * values, dt), 0.0)))


def time_derivative(values, dt):
    """Second-order differences: centred inside, one-sided at both ends."""
    return np.gradient(np.asarray(values, dtype=float), dt, axis=0, edge_order=2)


def h1_norm(values, dt):
    """``sqrt(||v||^2 + ||v'||^2)`` over the time interval."""
    dv = time_derivative(values, dt)
    return float(np.sqrt(l2_norm(values, dt) ** 2 + l2_norm(dv, dt) ** 2))
