"""Sublinear elliptic eigenvalue problem on perforated domains.

Solves ``lap phi + phi^p = 0`` (0 < p < 1) with zero data on holes and
the outer boundary by a monotone fixed-point iteration: each sweep
solves the linear problem with the previous reaction frozen, starting
from an explicit supersolution so the iterates decrease pointwise to
the positive solution.  The homogenized variant replaces the Laplacian
by ``lap - kappa``.

The variational constant is recovered a posteriori from the converged
solution through the normalization phi = lambda^(1/(1-p)) * phi_tilde
with the L^(p+1) norm of phi_tilde equal to one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .correctors import CRITICAL, CellSolution, RegimeSpec
from .errors import (
    AlignmentError,
    ConfigError,
    DegenerateSolutionError,
    IterationLimitError,
    MonotonicityError,
    RegimeError,
)
from .grid import FLUID, HOLE, OUTER_BOUNDARY, Field, PerforatedGrid
from .kernels import laplacian
from .linalg import solve_poisson

SUPERSOLUTION = "SUPERSOLUTION"
SUBSOLUTION = "SUBSOLUTION"


@dataclass(frozen=True)
class EigenProblem:
    grid: PerforatedGrid
    p: float
    kappa: float = 0.0
    tol: float = 1e-8
    max_iter: int = 400

    def __post_init__(self):
        if not (0.0 < self.p < 1.0):
            raise ConfigError(f"exponent p must lie in (0, 1), got {self.p}")
        if self.kappa < 0:
            raise ConfigError(f"kappa must be nonnegative, got {self.kappa}")


@dataclass
class EigenSolution:
    phi: Field
    lam: float
    iterations: int
    residual: float
    norm_p1: float
    dirichlet_energy: float
    monotone_violation: float
    start: str


def _clip_pow(values, p):
    return np.maximum(values, 0.0) ** p


def supersolution_start(prob: EigenProblem):
    """The barrier start: solve lap h = -(M^p + 1), h = 0 on the boundary,
    with M a documented a-priori sup bound, M = (1 + max (-lap)^-1 1)^(1/(1-p))."""
    grid = prob.grid
    free = grid.free_mask(FLUID)
    ones = np.ones(grid.shape)
    e, _, _ = solve_poisson(free, 0.0, ones, grid.inv_h2, tol=prob.tol / 10.0)
    big_m = (1.0 + float(e.max())) ** (1.0 / (1.0 - prob.p))
    return (big_m**prob.p + 1.0) * e, e


def subsolution_start(prob: EigenProblem, e=None):
    """A small positive multiple of the torsion function that the
    iteration map lifts: c*e with c^(1-p) below min((-lap+kappa)^-1 e^p / e)."""
    grid = prob.grid
    free = grid.free_mask(FLUID)
    if e is None:
        e, _, _ = solve_poisson(free, 0.0, np.ones(grid.shape), grid.inv_h2,
                                tol=prob.tol / 10.0)
    psi, _, _ = solve_poisson(
        free, 0.0, _clip_pow(e, prob.p), grid.inv_h2, kappa=prob.kappa,
        tol=prob.tol / 10.0,
    )
    freeb = free.astype(bool)
    gamma = float(np.min(psi[freeb] / e[freeb]))
    if gamma <= 0:
        raise DegenerateSolutionError("subsolution start collapsed")
    c = (0.5 * gamma) ** (1.0 / (1.0 - prob.p))
    return c * e


def _solve_monotone(prob: EigenProblem, start: str) -> EigenSolution:
    grid = prob.grid
    free = grid.free_mask(FLUID)
    freeb = free.astype(bool)
    inv_h2 = grid.inv_h2
    decreasing = start == SUPERSOLUTION

    if decreasing:
        phi, e = supersolution_start(prob)
    else:
        phi = subsolution_start(prob)

    worst = 0.0
    slack = prob.tol / 2.0
    for it in range(1, prob.max_iter + 1):
        rhs = _clip_pow(phi, prob.p)
        nxt, _, _ = solve_poisson(
            free, 0.0, rhs, inv_h2, kappa=prob.kappa, tol=prob.tol / 10.0,
            x0=phi * free,
        )
        diff = nxt - phi
        violation = float(diff.max()) if decreasing else float(-diff.min())
        worst = max(worst, violation)
        if violation > slack:
            raise MonotonicityError(
                f"iterate moved the wrong way by {violation:.3e} "
                f"(allowed {slack:.3e}) at sweep {it}"
            )
        phi = nxt
        lap = laplacian(phi, inv_h2)
        residual = float(
            np.max(np.abs(lap[freeb] - prob.kappa * phi[freeb]
                          + _clip_pow(phi[freeb], prob.p)))
        )
        if residual <= prob.tol:
            # the zero field also solves the equation; "collapsed" means we
            # undershot the scale of the positive solution, which for large
            # kappa is itself kappa^(-1/(1-p)) small
            floor = prob.tol
            if prob.kappa > 0:
                floor = min(floor, 0.1 * prob.kappa ** (-1.0 / (1.0 - prob.p)))
            if float(phi.max()) < floor:
                raise DegenerateSolutionError(
                    "iteration collapsed onto the trivial zero solution"
                )
            h_n = grid.h**grid.n
            norm_p1 = float(np.sum(_clip_pow(phi, prob.p + 1.0)) * h_n) ** (
                1.0 / (prob.p + 1.0)
            )
            lam = norm_p1 ** (1.0 - prob.p)
            energy = 0.0
            for ax in range(grid.n):
                d = np.diff(phi, axis=ax)
                energy += float(np.sum(d * d))
            energy *= grid.h ** (grid.n - 2)
            return EigenSolution(
                phi=Field(grid, phi),
                lam=lam,
                iterations=it,
                residual=residual,
                norm_p1=norm_p1,
                dirichlet_energy=energy,
                monotone_violation=worst,
                start=start,
            )
    raise IterationLimitError(
        f"monotone iteration not converged in {prob.max_iter} sweeps",
        residual=residual,
        iterations=prob.max_iter,
    )


def solve_eigen_perforated(prob: EigenProblem, start: str = SUPERSOLUTION) -> EigenSolution:
    """Positive solution of lap phi + phi^p = 0, zero on holes and boundary."""
    if prob.kappa != 0.0:
        raise ConfigError("perforated problem has kappa = 0; use solve_eigen_homogenized")
    return _solve_monotone(prob, start)


def solve_eigen_homogenized(prob: EigenProblem, start: str = SUPERSOLUTION) -> EigenSolution:
    """Positive solution of lap phi - kappa*phi + phi^p = 0 on the box."""
    return _solve_monotone(prob, start)


def correctibility_residual_I(
    b: float, spec: RegimeSpec, cell: CellSolution, p: float
) -> float:
    """Distance of the cell-averaged corrected reaction from its limit.

    The frozen level ``b`` turns the corrector into b - b*w; averaging
    ``-b*lap(w) + (b*(1-w))^p`` over the fluid part of the cell (the
    Laplacian term through the flux identity) must approach
    ``b^p - b*kappa`` as eps -> 0 at the critical scale.
    """
    if spec.regime != CRITICAL:
        raise RegimeError(f"correctibility needs a CRITICAL spec, got {spec.regime}")
    if b < 0:
        raise ConfigError(f"level b must be nonnegative, got {b}")
    fluid = cell.cell.mask == FLUID
    one_minus_w = np.maximum(1.0 - cell.w[fluid], 0.0)
    mean_pow = float(np.mean(one_minus_w**p))
    mean_lap = -cell.hole_flux / cell.cell.fluid_volume  # = k by the flux identity
    k_b_eps = -b * mean_lap + b**p * mean_pow
    return abs(-b * spec.kappa - (k_b_eps - b**p))


@dataclass
class NondegeneracyReport:
    c_low: float
    c_high: float
    degenerate: bool


def discrete_nondegeneracy_report(sol: EigenSolution, eps: float) -> NondegeneracyReport:
    """Extremes of the eps-difference-quotient norm on the outer boundary.

    The solution is extended by zero outside the box; for each boundary
    node on exactly one face the quotient along every axis is the larger
    of the two one-sided eps-shifts, and the report returns the min/max
    of the per-node Euclidean norms.  The lower extreme is taken over the
    central patch of each face (tangential margin of a quarter extent)
    and skips nodes whose inward sample lands in a hole: on a box the
    normal derivative genuinely degenerates toward edges and corners,
    and a sample hitting a hole reads zero by construction; neither is
    the nondegeneracy being measured.
    """
    grid = sol.phi.grid
    phi = sol.phi.values
    s = eps / grid.h
    si = int(round(s))
    if abs(s - si) > 1e-9 or si < 1:
        raise AlignmentError(f"eps = {eps} is not a node-aligned multiple of h = {grid.h}")

    if float(np.max(np.abs(phi))) == 0.0:
        return NondegeneracyReport(0.0, 0.0, True)

    n = grid.n
    pad = np.pad(phi, si, mode="constant")
    hole_pad = np.pad(grid.mask == HOLE, si, mode="constant", constant_values=False)
    inner = (slice(si, -si),) * n

    def shifted(arr, ax, sign):
        sl = [slice(si, -si)] * n
        sl[ax] = slice(si + sign * si, arr.shape[ax] - si + sign * si)
        return arr[tuple(sl)]

    q2 = np.zeros(grid.shape)
    for ax in range(n):
        fwd = np.abs(shifted(pad, ax, +1) - phi)
        bwd = np.abs(shifted(pad, ax, -1) - phi)
        q = np.maximum(fwd, bwd) / eps
        q2 += q * q
    norm = np.sqrt(q2)

    on_face = grid.mask == OUTER_BOUNDARY
    face_count = np.zeros(grid.shape, dtype=int)
    for ax in range(n):
        sl = [slice(None)] * n
        for end in (0, -1):
            sl[ax] = end
            face_count[tuple(sl)] += 1
        sl[ax] = slice(None)
    single_face = on_face & (face_count == 1)

    c_high = float(np.max(norm[single_face]))

    central = np.ones(grid.shape, dtype=bool)
    for ax, (lo, hi) in enumerate(grid.box):
        margin = 0.25 * (hi - lo)
        x = grid.axes[ax]
        inside = (x >= lo + margin) & (x <= hi - margin)
        on_this_face = np.zeros(grid.shape[ax], dtype=bool)
        on_this_face[0] = on_this_face[-1] = True
        shp = [1] * n
        shp[ax] = grid.shape[ax]
        central &= (inside | on_this_face).reshape(shp)

    inward_hits_hole = np.zeros(grid.shape, dtype=bool)
    for ax in range(n):
        sl = [slice(None)] * n
        sl[ax] = 0
        lowface = tuple(sl)
        inward_hits_hole[lowface] |= shifted(hole_pad, ax, +1)[lowface]
        sl[ax] = -1
        highface = tuple(sl)
        inward_hits_hole[highface] |= shifted(hole_pad, ax, -1)[highface]
    eligible = single_face & central & ~inward_hits_hole
    c_low = float(np.min(norm[eligible])) if np.any(eligible) else 0.0
    return NondegeneracyReport(c_low, c_high, False)
