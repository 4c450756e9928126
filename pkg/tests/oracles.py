"""Independent oracles: shooting/quadrature solutions of the 1D and radial
two-point problems the grid solvers are checked against.

Everything here integrates ODEs (scipy RK45 at tight tolerance plus
Brent root-finding on the shooting parameter) or evaluates closed
forms; none of it shares code with the finite-difference path it
verifies.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq


def shoot_second_order(f, x_end, y0, s_lo, s_hi, rtol=1e-11):
    """Solve y'' = f(x, y), y(0) = y0, y(x_end) = 0 by shooting on y'(0).

    Returns a dense solution callable.  The bracket [s_lo, s_hi] must
    straddle the root of the endpoint map.
    """

    def rhs(x, z):
        return [z[1], f(x, z[0])]

    def endpoint(s):
        sol = solve_ivp(rhs, (0.0, x_end), [y0, s], rtol=rtol, atol=1e-13)
        return sol.y[0, -1]

    s_star = brentq(endpoint, s_lo, s_hi, xtol=1e-13, rtol=8.9e-16)
    sol = solve_ivp(rhs, (0.0, x_end), [y0, s_star], rtol=rtol, atol=1e-13,
                    dense_output=True)
    return sol.sol, s_star


def eigen_profile_1d(p, kappa=0.0, length=1.0):
    """Positive solution of y'' = kappa*y - y_+^p, y(0) = y(length) = 0."""

    def f(x, y):
        return kappa * y - max(y, 0.0) ** p

    sol, slope = shoot_second_order(f, length, 0.0, 1e-6, 5.0)
    return (lambda x: sol(np.asarray(x, dtype=float))[0]), slope


def steady_obstacle_reaction_1d():
    """Solution of -u'' = (1 - u)_+, u(0) = u(1) = 0 (shooting)."""

    def f(x, y):
        return -max(1.0 - y, 0.0)

    sol, slope = shoot_second_order(f, 1.0, 0.0, 0.05, 2.0)
    return (lambda x: sol(np.asarray(x, dtype=float))[0]), slope


def radial_corrector_exact(r, n, a, R, k):
    """Closed form of w'' + (n-1)w'/r = k, w(a) = 1, w'(R) = 0 (n != 2)."""
    r = np.asarray(r, dtype=float)
    quad = k * (r**2 - a**2) / (2.0 * n)
    tail = (k * R**n / n) * (r ** (2 - n) - a ** (2 - n)) / (2.0 - n)
    return 1.0 + quad - tail


def radial_harmonic_interp(r, n, r_in, r_out):
    """Harmonic radial interpolation: 0 at r_in, 1 at r_out (n >= 3)."""
    r = np.asarray(r, dtype=float)
    return (r_in ** (2 - n) - r ** (2 - n)) / (r_in ** (2 - n) - r_out ** (2 - n))


def capacity_exterior_flux(r, n, R):
    """Flux of the exact exterior potential on [r, R]: cap/(1-(r/R)^(n-2))."""
    from math import gamma, pi

    sigma = 2.0 * pi ** (n / 2.0) / gamma(n / 2.0)
    return (n - 2) * sigma * r ** (n - 2) / (1.0 - (r / R) ** (n - 2))
