"""Independent reference solvers used by the tests (no package code involved)."""

import numpy as np


def bisect(f, lo, hi, tol=1e-14, max_iter=400):
    """Plain bisection for an increasing scalar function with f(lo) < 0 < f(hi)."""
    flo = f(lo)
    assert flo <= 0 <= f(hi)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if hi - lo <= tol * (1 + abs(mid)):
            break
        if f(mid) <= 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def sat(x, bound=1.0):
    return float(np.clip(x, -bound, bound))


def scalar_resolvent(a, b, c, d, lam, x1, u0=0.0, bound=1.0):
    """Solve ``(lam - a) x - b sat(u0 - v) = x1``, ``v = c x + d sat(u0 - v)`` by bisection on v."""
    R = 1.0 / (lam - a)
    P = c * R * b + d

    def f(v):
        return v - c * R * x1 - P * sat(u0 - v, bound)

    span = abs(c * R * x1) + abs(P) * bound + 1.0
    v = bisect(f, -span, span)
    x = R * x1 + R * b * sat(u0 - v, bound)
    return x, v
