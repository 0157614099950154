"""Integer-order cylinder functions for the exterior Hankel series.

Thin wrappers over :mod:`scipy.special` that enforce the argument domain and
an order bound.  All functions broadcast over ``x``.
"""

import numpy as np
from scipy import special

N_MAX = 64


def _check_order(n, max_order):
    n_arr = np.asarray(n)
    if not np.issubdtype(n_arr.dtype, np.integer):
        if np.any(n_arr != np.round(n_arr)):
            raise ValueError(f"order must be an integer, got {n!r}")
        n_arr = n_arr.astype(int)
    if np.any(np.abs(n_arr) > max_order):
        raise ValueError(f"|n| exceeds max_order={max_order}: {n!r}")
    return n_arr


def _check_arg(x, allow_zero):
    x_arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x_arr)):
        raise ValueError("argument must be finite")
    if allow_zero:
        if np.any(x_arr < 0):
            raise ValueError("argument must be nonnegative")
    elif np.any(x_arr <= 0):
        raise ValueError("argument must be positive (logarithmic singularity at 0)")
    return x_arr


def _reflect(func, n, x):
    # negative orders via (-1)^n symmetry so that reflection holds bit-exactly
    sign = np.where(n % 2 == 0, 1.0, -1.0)
    sign = np.where(n < 0, sign, 1.0)
    return sign * func(np.abs(n), x)


SERIES_CUTOFF = 0.5


def _jv(n, x):
    """J_n for n >= 0; small arguments use the ascending series so that
    values below the scipy underflow threshold keep full relative accuracy."""
    n, x = np.broadcast_arrays(n, x)
    out = np.asarray(special.jv(n, x), dtype=float).copy()
    small = (x < SERIES_CUTOFF) & (x > 0)
    if np.any(small):
        ns, xs = n[small].astype(float), x[small]
        term = np.ones_like(xs)
        total = np.ones_like(xs)
        for m in range(1, 20):
            term = term * (-(xs * xs) / 4) / (m * (ns + m))
            total = total + term
        out[small] = np.exp(ns * np.log(xs / 2) - special.gammaln(ns + 1)) * total
    return out if out.ndim else float(out)


def bessel_j(n, x, max_order=N_MAX):
    """Bessel function of the first kind J_n(x) for integer n, x >= 0."""
    n = _check_order(n, max_order)
    x = _check_arg(x, allow_zero=True)
    return _reflect(_jv, n, x)


def bessel_y(n, x, max_order=N_MAX):
    """Bessel function of the second kind Y_n(x) for integer n, x > 0."""
    n = _check_order(n, max_order)
    x = _check_arg(x, allow_zero=False)
    return _reflect(special.yv, n, x)


def bessel_j_derivative(n, x, max_order=N_MAX):
    n = _check_order(n, max_order)
    x = _check_arg(x, allow_zero=True)
    return _reflect(special.jvp, n, x)


def bessel_y_derivative(n, x, max_order=N_MAX):
    n = _check_order(n, max_order)
    x = _check_arg(x, allow_zero=False)
    return _reflect(special.yvp, n, x)


def hankel1(n, x, max_order=N_MAX):
    """Hankel function of the first kind, J_n(x) + i Y_n(x)."""
    return bessel_j(n, x, max_order) + 1j * bessel_y(n, x, max_order)


def hankel1_derivative(n, x, max_order=N_MAX):
    """d/dx H_n^(1)(x) from the recurrence (H_{n-1} - H_{n+1}) / 2."""
    n = _check_order(n, max_order)
    x = _check_arg(x, allow_zero=False)

    def h(m):
        return _reflect(_jv, m, x) + 1j * _reflect(special.yv, m, x)

    return _reflect(lambda m, _: 0.5 * (h(m - 1) - h(m + 1)), n, x)
