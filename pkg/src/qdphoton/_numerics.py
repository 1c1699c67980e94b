"""Small numerical helpers shared by the model modules."""

import numpy as np

# Chebyshev-fitted exponent for erfc (fractional error < 1.2e-7 for all x).
_ERFC_COEFFS = (
    -1.26551223, 1.00002368, 0.37409196, 0.09678418, -0.18628806,
    0.27886807, -1.13520398, 1.48851587, -0.82215223, 0.17087277,
)

# 4-point Gauss-Legendre nodes/weights on [-1/2, 1/2], weights sum to 1.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(4)
_GL_X = _GL_X / 2.0
_GL_W = _GL_W / 2.0


def erfc_scaled(x):
    """exp(x**2) * erfc(x) for x >= 0, from the rational approximation."""
    x = np.asarray(x, dtype=float)
    t = 1.0 / (1.0 + 0.5 * x)
    poly = np.zeros_like(t)
    for c in reversed(_ERFC_COEFFS):
        poly = poly * t + c
    return t * np.exp(poly)


def erfc(x):
    """Complementary error function, accurate to 1.2e-7 relative."""
    x = np.asarray(x, dtype=float)
    z = np.abs(x)
    val = np.exp(-z * z) * erfc_scaled(z)
    return np.where(x >= 0, val, 2.0 - val)


def normal_cdf(x):
    return 0.5 * erfc(-np.asarray(x, dtype=float) / np.sqrt(2.0))


def as_grid(grid):
    """Validate a strictly increasing 1-D abscissa array."""
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.ndim != 1:
        raise ValueError("grid must be one-dimensional")
    if grid.size > 1 and not np.all(np.diff(grid) > 0):
        raise ValueError("grid must be strictly increasing")
    return grid


def bin_average(func, centers, bin_width):
    """Average ``func`` over bins of width ``bin_width`` centred on ``centers``.

    Uses 4-point Gauss-Legendre quadrature per bin; ``func`` must accept a
    1-D array.
    """
    centers = np.asarray(centers, dtype=float)
    pts = (centers[:, None] + bin_width * _GL_X[None, :]).ravel()
    vals = func(pts).reshape(centers.size, _GL_X.size)
    return vals @ _GL_W


def cubic_interp_uniform(x, x0, step, values):
    """Four-point Lagrange interpolation of samples ``values`` at x0 + k*step."""
    values = np.asarray(values, dtype=float)
    if values.size < 4:
        raise ValueError("need at least four samples")
    pos = (np.asarray(x, dtype=float) - x0) / step
    i = np.clip(np.floor(pos).astype(np.int64), 1, values.size - 3)
    u = pos - i
    f_m, f_0, f_1, f_2 = values[i - 1], values[i], values[i + 1], values[i + 2]
    return (
        -u * (u - 1.0) * (u - 2.0) / 6.0 * f_m
        + (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0 * f_0
        - (u + 1.0) * u * (u - 2.0) / 2.0 * f_1
        + (u + 1.0) * u * (u - 1.0) / 6.0 * f_2
    )
