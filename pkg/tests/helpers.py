"""Independent numerical oracles shared by the tests.

Central finite differences, with the step scaled by the point's norm; these
stay independent of the analytic code paths they check.
"""

import numpy as np


def fd_gradient(f, x, step=1e-5):
    x = np.asarray(x, dtype=float)
    h = step * max(1.0, float(np.linalg.norm(x)))
    g = np.zeros(x.size)
    flat = x.ravel()
    for i in range(flat.size):
        e = np.zeros(flat.size)
        e[i] = h
        g[i] = (f((flat + e).reshape(x.shape)) - f((flat - e).reshape(x.shape))) / (2.0 * h)
    return g.reshape(x.shape)


def fd_second_directional(f, x, u, step=1e-4):
    """(f(x+hu) - 2f(x) + f(x-hu)) / h^2 with h scaled by max(1, ||x||)."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    h = step * max(1.0, float(np.linalg.norm(x)))
    return (f(x + h * u) - 2.0 * f(x) + f(x - h * u)) / (h * h)


def fd_hessian(f, x, step=1e-4):
    x = np.asarray(x, dtype=float)
    n = x.size
    h = step * max(1.0, float(np.linalg.norm(x)))
    out = np.zeros((n, n))
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h
        for j in range(i, n):
            ej = np.zeros(n)
            ej[j] = h
            out[i, j] = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (4.0 * h * h)
            out[j, i] = out[i, j]
    return out


def rel_err(actual, expected):
    actual = np.asarray(actual, dtype=float)
    expected = np.asarray(expected, dtype=float)
    return float(np.linalg.norm(actual - expected) / max(1.0, np.linalg.norm(expected)))
