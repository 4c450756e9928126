"""Matrix-free conjugate gradient for the masked stencil operators.

Solves ``(-lap + kappa) u = rhs`` on the free nodes of a (periodic or
boxed) grid with prescribed values on the complementary fixed nodes.
The operator restricted to the free nodes is symmetric positive
definite as long as at least one fixed node anchors each periodic
component, which every problem in this package guarantees (holes or the
outer boundary).

Convergence is judged on the max-norm of the true equation residual,
matching the solver tolerances quoted in study reports.
"""

from __future__ import annotations

import numpy as np

from .errors import IterationLimitError
from .kernels import matvec_neglap


def solve_poisson(
    free,
    fixed_values,
    rhs,
    inv_h2,
    kappa=0.0,
    periodic=False,
    tol=1e-8,
    max_iter=None,
    x0=None,
):
    """CG solve of (-lap + kappa) u = rhs on free nodes, u given elsewhere.

    ``free`` is a uint8 mask, ``fixed_values`` carries the Dirichlet data
    (its entries at free nodes are ignored), ``rhs`` the right-hand side
    at free nodes.  Returns ``(u, iterations, residual_max)`` with ``u``
    the full field including the fixed values.
    """
    free = np.ascontiguousarray(free, dtype=np.uint8)
    shape = free.shape
    if max_iter is None:
        max_iter = 200 + 30 * max(shape)

    freeb = free.astype(bool)
    fix = np.where(freeb, 0.0, fixed_values)
    b = np.where(freeb, rhs, 0.0)
    b -= matvec_neglap(fix, free, kappa, inv_h2, periodic)

    x = np.zeros(shape) if x0 is None else np.where(freeb, x0, 0.0)
    r = b - matvec_neglap(x, free, kappa, inv_h2, periodic)
    p = r.copy()
    rs = float(np.vdot(r, r))

    res = float(np.max(np.abs(r)))
    it = 0
    while res > tol:
        if it >= max_iter:
            raise IterationLimitError(
                f"CG did not reach tol={tol} in {max_iter} iterations "
                f"(residual {res:.3e})",
                residual=res,
                iterations=it,
            )
        ap = matvec_neglap(p, free, kappa, inv_h2, periodic)
        alpha = rs / float(np.vdot(p, ap))
        x += alpha * p
        it += 1
        if it % 50 == 0:
            r = b - matvec_neglap(x, free, kappa, inv_h2, periodic)
        else:
            r -= alpha * ap
        rs_new = float(np.vdot(r, r))
        p = r + (rs_new / rs) * p
        rs = rs_new
        res = float(np.max(np.abs(r)))

    return x + fix, it, res
