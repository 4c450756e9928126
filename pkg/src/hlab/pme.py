"""Porous medium equation on perforated domains.

The mass form marches ``u <- u + dt*lap(u^m)`` with zero data on holes
and the outer boundary; the pressure-form solvers use the separated
variable ``v`` whose equation reads ``v^(1-1/m)*lap(v) - v_t = 0``.
Direct substitution of v = u^m into the mass form produces an extra
factor m in front of the diffusion; the pressure solvers keep the
factor-free form and the exact correspondence is the time rescale

    u(x, t)^m  =  v(x, m*t),

which every cross-solver comparison in the tests applies.

The separated barrier ``alpha*phi(x) / (lam + t)^(m/(m-1))`` built from
the nonlinear eigenfunction with exponent 1/m is an exact solution of
the pressure-form equation; fitted at t = 0 from above and below it
must sandwich the evolving pressure at all later times.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .correctors import CRITICAL, CellSolution, RegimeSpec
from .errors import (
    ConfigError,
    DegenerateSolutionError,
    GeometryError,
    InstabilityError,
    PositivityLossError,
    PreconditionError,
    RegimeError,
    UnsupportedDimensionError,
)
from .grid import (
    FLUID,
    HOLE,
    OUTER_BOUNDARY,
    Field,
    PerforatedGrid,
    TimeField,
    build_periodic_cell,
)
from .heat import ParabolicRunConfig, PenaltyConfig, SpaceTimeData, beta_delta, plan_march
from .kernels import laplacian, masked_diffusion_step, power
from .linalg import solve_poisson


def barrier_alpha(m: float) -> float:
    return (m / (m - 1.0)) ** (m / (m - 1.0))


def barrier_exponent(m: float) -> float:
    return m / (m - 1.0)


@dataclass(frozen=True)
class PMEProblem:
    """Mass-form problem: exponent, smooth initial profile, run plan.

    ``g_variant`` records which initial-data convention is in use:
    ``boundary_gradient`` (positive profile with a nonvanishing slope on
    the outer boundary) or ``compact_support`` (bump supported away from
    the boundary); both are accepted.
    """

    grid: PerforatedGrid
    m: float
    g: object
    rcfg: ParabolicRunConfig
    g_variant: str = "boundary_gradient"

    def __post_init__(self):
        if self.m <= 1.0:
            raise ConfigError(f"porous-medium exponent needs m > 1, got {self.m}")


@dataclass
class CutoffField:
    """Periodic cutoff: 0 on the holes, 1 beyond the outer radius,
    discretely harmonic in between, tiled with the lattice period."""

    xi: Field
    inner_radius: float
    outer_radius: float
    residual: float
    cell_divisions: int


@dataclass
class BarrierPair:
    lambda1: float
    lambda2: float
    passed: bool
    max_upper_violation: float
    max_lower_violation: float


@dataclass
class MonotonicityResult:
    passed: bool
    max_increase: float
    first_violation: tuple | None = None


def build_cutoff_xi(grid: PerforatedGrid, tol: float = 1e-10) -> CutoffField:
    """Harmonic interpolation between the hole (0) and the outer sphere (1).

    Solved once on the period cell and tiled by lattice translation, so
    the eps-shift difference quotient of the result vanishes exactly.
    """
    n = grid.n
    if n < 3:
        raise UnsupportedDimensionError("the cutoff outer radius needs n >= 3")
    if grid.hole_radius <= 0:
        raise GeometryError("cutoff needs a perforated grid")
    a = grid.hole_radius
    r_out = grid.eps ** ((n - 1.0) / (n - 2.0))
    if r_out <= a:
        raise GeometryError(f"outer radius {r_out} inside the hole radius {a}")
    if r_out < 4.0 * grid.h:
        raise GeometryError(
            f"outer radius {r_out:.4g} unresolved by spacing {grid.h:.4g} (need >= 4h)"
        )
    if r_out >= grid.eps * np.sqrt(n) / 2.0:
        raise GeometryError("outer radius swallows the period cell")

    cell = build_periodic_cell(n, grid.eps, a, grid.h)
    outer = cell.radius >= r_out * (1.0 - 1e-12)
    hole = cell.mask == HOLE
    free = (~outer & ~hole).astype(np.uint8)
    fixed = np.where(outer, 1.0, 0.0)
    xi_cell, _, _ = solve_poisson(
        free, fixed, np.zeros(cell.shape), cell.inv_h2, periodic=True, tol=tol
    )
    lap = laplacian(xi_cell, cell.inv_h2, periodic=True)
    residual = float(np.max(np.abs(lap[free.astype(bool)])))
    np.clip(xi_cell, 0.0, 1.0, out=xi_cell)

    m = cell.shape[0]
    idxs = []
    for ax in range(n):
        k = np.round((grid.axes[ax] - grid.box[ax][0]) / grid.h).astype(int)
        idxs.append(k % m)
    values = xi_cell[np.ix_(*idxs)]
    return CutoffField(
        xi=Field(grid, values),
        inner_radius=a,
        outer_radius=r_out,
        residual=residual,
        cell_divisions=m,
    )


def _pme_dt_limit(grid, m, umax, safety):
    if umax <= 0.0:
        return safety * grid.h**2 / (2.0 * grid.n)
    return safety * grid.h**2 / (2.0 * grid.n * m * umax ** (m - 1.0))


def solve_pme_perforated(prob: PMEProblem, xi: CutoffField | None = None) -> TimeField:
    """Mass-form march from g * xi with zero data on holes and boundary.

    The CFL bound ``dt <= safety*h^2 / (2n*m*max(u)^(m-1))`` is
    re-evaluated every step against the current maximum; negativity
    beyond the run tolerance aborts, smaller dips are clamped to zero
    and the clamp magnitude is recorded.
    """
    grid = prob.grid
    m = prob.m
    g0 = SpaceTimeData(grid, prob.g).at(0.0)
    if float(g0.min()) < 0.0:
        raise ConfigError("initial profile g must be nonnegative")
    if grid.hole_count > 0:
        if xi is None:
            xi = build_cutoff_xi(grid)
        u = g0 * xi.xi.values
    else:
        u = g0.copy()
    free = grid.free_mask(FLUID)
    u *= free  # zero data on holes and the outer boundary

    umax = float(u.max())
    steps, dt, stride = plan_march(prob.rcfg, _pme_dt_limit(grid, m, umax, prob.rcfg.cfl_safety))
    inv_h2 = grid.inv_h2
    tol = prob.rcfg.tol

    times = [0.0]
    snapshots = [u.copy()]
    clamp_max = 0.0
    max_dtn = 0.0
    t0 = time.perf_counter()
    for k in range(steps):
        umax = float(u.max())
        if dt > _pme_dt_limit(grid, m, umax, prob.rcfg.cfl_safety) * (1.0 + 1e-9):
            raise InstabilityError(
                f"step {k}: dt = {dt:.3e} violates the degenerate CFL bound "
                f"for max u = {umax:.3e}"
            )
        p = power(u, m)
        un = masked_diffusion_step(u, p, free, dt, inv_h2)
        mn = float(un.min())
        if mn < -tol:
            raise PositivityLossError(f"step {k}: u dipped to {mn:.3e} (tol {tol:.1e})")
        if mn < 0.0:
            clamp_max = max(clamp_max, -mn)
            np.maximum(un, 0.0, out=un)
        max_dtn = max(max_dtn, float(np.max(np.abs(un - u))) / dt)
        u = un
        if (k + 1) % stride == 0:
            times.append((k + 1) * dt)
            snapshots.append(u.copy())
    meta = {
        "dt_step": dt,
        "steps": steps,
        "m": m,
        "clamp_max": clamp_max,
        "max_dt_derivative": max_dtn,
        "g_variant": prob.g_variant,
        "wall_ms": (time.perf_counter() - t0) * 1e3,
    }
    return TimeField(grid, dt * stride, np.asarray(times), snapshots, meta)


def pressure_transform(u: TimeField, m: float) -> TimeField:
    """Pointwise m-th power of a trajectory (mass form to pressure form)."""
    mins = min(float(s.min()) for s in u.snapshots)
    if mins < 0.0:
        raise PositivityLossError(f"pressure transform needs u >= 0, found {mins:.3e}")
    snaps = [power(s, m) for s in u.snapshots]
    meta = dict(u.meta)
    meta["pressure_of_m"] = m
    return TimeField(u.grid, u.dt, u.times.copy(), snaps, meta)


def self_similar_barrier(phi_eps: Field, m: float, lam: float, t: float) -> Field:
    """alpha * phi / (lam + t)^(m/(m-1)) with alpha = (m/(m-1))^(m/(m-1))."""
    if lam <= 0:
        raise ConfigError(f"barrier offset lambda must be positive, got {lam}")
    vals = barrier_alpha(m) * phi_eps.values / (lam + t) ** barrier_exponent(m)
    return Field(phi_eps.grid, vals)


def barrier_sandwich_check(
    v: TimeField,
    phi_eps: Field,
    m: float,
    tol: float = 1e-9,
) -> BarrierPair:
    """Fit the barrier offsets at t = 0, then verify the sandwich at every
    later snapshot (no re-fitting).

    ``v`` is the pressure of a mass-form run, so the barriers are
    evaluated on the pressure clock tau = m*t.  The lower offset becomes
    infinite (trivial barrier) when the initial pressure vanishes
    somewhere the eigenfunction does not.
    """
    v0 = v.snapshots[0]
    phi = phi_eps.values
    vmax = float(v0.max())
    if vmax <= 0.0:
        raise DegenerateSolutionError("initial pressure vanishes: nothing to compare")
    alpha = barrier_alpha(m)
    beta = barrier_exponent(m)
    v_floor = 1e-10 * vmax
    phi_floor = 1e-10 * float(phi.max())

    sel2 = v0 > v_floor
    ratios2 = alpha * phi[sel2] / v0[sel2]
    lam2 = float(np.min(ratios2)) ** (1.0 / beta) if np.all(ratios2 > 0) else 0.0

    sel1 = phi > phi_floor
    if np.any(v0[sel1] <= v_floor):
        lam1 = np.inf
    else:
        lam1 = float(np.max(alpha * phi[sel1] / v0[sel1])) ** (1.0 / beta)

    up_viol = -np.inf
    low_viol = -np.inf
    for snap, t in zip(v.snapshots, v.times):
        tau = m * t
        if lam2 > 0.0:
            upper = alpha * phi / (lam2 + tau) ** beta
            up_viol = max(up_viol, float(np.max(snap - upper)))
        else:
            up_viol = np.inf
        lower = 0.0 if np.isinf(lam1) else alpha * phi / (lam1 + tau) ** beta
        low_viol = max(low_viol, float(np.max(lower - snap)))
    passed = bool(up_viol <= tol and low_viol <= tol and lam2 > 0.0)
    return BarrierPair(lam1, lam2, passed, up_viol, low_viol)


def solve_pme_homogenized(
    grid: PerforatedGrid,
    m: float,
    kappa: float,
    g,
    rcfg: ParabolicRunConfig,
) -> TimeField:
    """Pressure-form march of the homogenized degenerate equation.

    v <- v + dt * v^(1-1/m) * (lap v - kappa*v_+) with v = 0 on the
    boundary and v(0) = g^m.  Runs on the pressure clock (see module
    docstring); meta records the rescale factor.
    """
    if m <= 1.0:
        raise ConfigError(f"porous-medium exponent needs m > 1, got {m}")
    if kappa < 0:
        raise ConfigError(f"kappa must be nonnegative, got {kappa}")
    g0 = SpaceTimeData(grid, g).at(0.0)
    if float(g0.min()) < 0.0:
        raise ConfigError("initial profile g must be nonnegative")
    v = power(g0, m)
    free = grid.free_mask(FLUID)
    v *= free

    expo = 1.0 - 1.0 / m
    vmax = float(v.max())
    diff = vmax**expo if vmax > 0 else 0.0
    dt_limit = rcfg.cfl_safety * grid.h**2 / (2.0 * grid.n * max(diff, 1e-300))
    if kappa > 0.0 and diff > 0.0:
        dt_limit = min(dt_limit, rcfg.cfl_safety / (kappa * diff))
    steps, dt, stride = plan_march(rcfg, dt_limit)
    inv_h2 = grid.inv_h2
    freeb = free.astype(bool)
    tol = rcfg.tol

    times = [0.0]
    snapshots = [v.copy()]
    clamp_max = 0.0
    max_dtn = 0.0
    t0 = time.perf_counter()
    for k in range(steps):
        vmax = float(v.max())
        if vmax > 0 and dt * vmax**expo * (2.0 * grid.n * inv_h2 + kappa) > 1.0 + 1e-9:
            raise InstabilityError(f"step {k}: degenerate CFL violated for max v = {vmax:.3e}")
        rhs = laplacian(v, inv_h2)
        if kappa > 0.0:
            rhs -= kappa * np.maximum(v, 0.0)
        vn = v + (dt * power(v, expo)) * rhs
        vn[~freeb] = 0.0
        mn = float(vn.min())
        if mn < -tol:
            raise PositivityLossError(f"step {k}: v dipped to {mn:.3e} (tol {tol:.1e})")
        if mn < 0.0:
            clamp_max = max(clamp_max, -mn)
            np.maximum(vn, 0.0, out=vn)
        max_dtn = max(max_dtn, float(np.max(np.abs(vn - v))) / dt)
        v = vn
        if (k + 1) % stride == 0:
            times.append((k + 1) * dt)
            snapshots.append(v.copy())
    meta = {
        "dt_step": dt,
        "steps": steps,
        "m": m,
        "kappa": kappa,
        "clamp_max": clamp_max,
        "max_dt_derivative": max_dtn,
        "time_scale_vs_mass_form": m,
        "wall_ms": (time.perf_counter() - t0) * 1e3,
    }
    return TimeField(grid, dt * stride, np.asarray(times), snapshots, meta)


def solve_pme_penalized(
    grid: PerforatedGrid,
    m: float,
    v0,
    pcfg: PenaltyConfig,
    rcfg: ParabolicRunConfig,
    big_m: float | None = None,
    xi: CutoffField | None = None,
) -> TimeField:
    """Penalized pressure flow: holes enforced softly through the cutoff.

    v <- v + dt * v^(1-1/m) * (lap v + beta_delta(-v + delta + M*xi))
    with v = delta on the outer boundary.  The ceiling M*xi presses the
    pressure down to ~delta on the holes instead of a hard constraint;
    this is the flow whose time monotonicity the checks below exercise.
    """
    if m <= 1.0:
        raise ConfigError(f"porous-medium exponent needs m > 1, got {m}")
    if grid.hole_count == 0:
        raise GeometryError("penalized pressure flow needs a perforated grid")
    if xi is None:
        xi = build_cutoff_xi(grid)
    v = SpaceTimeData(grid, v0).at(0.0)
    if float(v.min()) < 0.0:
        raise ConfigError("initial pressure must be nonnegative")
    delta = pcfg.delta
    if big_m is None:
        big_m = float(v.max())
    mxi = big_m * xi.xi.values

    n = grid.n
    boundary = grid.mask == OUTER_BOUNDARY
    v[boundary] = delta

    expo = 1.0 - 1.0 / m
    vmax = float(v.max())
    diff = vmax**expo if vmax > 0 else 0.0
    bprime = 1.0 / delta if pcfg.shape == "PIECEWISE_LINEAR" else 2.0 / delta
    dt_limit = rcfg.cfl_safety / max(diff * (2.0 * n * grid.inv_h2 + bprime), 1e-300)
    steps, dt, stride = plan_march(rcfg, dt_limit)
    inv_h2 = grid.inv_h2
    tol = rcfg.tol

    times = [0.0]
    snapshots = [v.copy()]
    clamp_max = 0.0
    max_increase = -np.inf
    t0 = time.perf_counter()
    for k in range(steps):
        rhs = laplacian(v, inv_h2)
        rhs += beta_delta(-v + delta + mxi, pcfg)
        vn = v + (dt * power(v, expo)) * rhs
        vn[boundary] = delta
        mn = float(vn.min())
        if mn < -tol:
            raise PositivityLossError(f"step {k}: v dipped to {mn:.3e}")
        if mn < 0.0:
            clamp_max = max(clamp_max, -mn)
            np.maximum(vn, 0.0, out=vn)
        max_increase = max(max_increase, float(np.max(vn - v)))
        v = vn
        if (k + 1) % stride == 0:
            times.append((k + 1) * dt)
            snapshots.append(v.copy())
    meta = {
        "dt_step": dt,
        "steps": steps,
        "m": m,
        "delta": delta,
        "big_m": big_m,
        "clamp_max": clamp_max,
        "max_step_increase": max_increase,
        "wall_ms": (time.perf_counter() - t0) * 1e3,
    }
    return TimeField(grid, dt * stride, np.asarray(times), snapshots, meta)


def monotonicity_check(v: TimeField, tol: float = 1e-12) -> MonotonicityResult:
    """Assert pointwise non-increase of the trajectory.

    Precondition: the initial snapshot must be discretely superharmonic
    on the strict interior (its Laplacian nonpositive); offending nodes
    are listed in the raised error rather than counted as a monotonicity
    failure.
    """
    grid = v.grid
    v0 = v.snapshots[0]
    lap0 = laplacian(v0, grid.inv_h2)
    interior = np.ones(grid.shape, dtype=bool)
    for ax in range(grid.n):
        sl = [slice(None)] * grid.n
        sl[ax] = 0
        interior[tuple(sl)] = False
        sl[ax] = -1
        interior[tuple(sl)] = False
    pre_tol = 1e-9 * max(float(np.max(np.abs(lap0))), 1.0)
    bad = interior & (lap0 > pre_tol)
    if np.any(bad):
        nodes = np.flatnonzero(bad.ravel())[:20]
        raise PreconditionError(
            f"initial data not discretely superharmonic at {int(np.count_nonzero(bad))} "
            "interior nodes",
            nodes=nodes,
        )

    worst = -np.inf
    first = None
    for k in range(len(v) - 1):
        diff = v.snapshots[k + 1] - v.snapshots[k]
        mx = float(diff.max())
        worst = max(worst, mx)
        if mx > tol and first is None:
            first = (k, int(np.argmax(diff.ravel())), mx)
    if len(v) < 2:
        worst = 0.0
    return MonotonicityResult(passed=first is None, max_increase=worst, first_violation=first)


def correctibility_residual_II(
    c: float,
    d: float,
    p: float,
    spec: RegimeSpec,
    cell: CellSolution,
) -> float:
    """Distance of the degenerate corrected reaction from its capacity limit.

    Cell average over fluid nodes of
    ``((1-w)^p - 1)*d^p*c - d^(1+p)*(1-w)^p*lap(w)`` (the Laplacian is
    the constant source, recovered through the flux identity), compared
    with ``-d^(1+p)*kappa``.
    """
    if spec.regime != CRITICAL:
        raise RegimeError(f"correctibility needs a CRITICAL spec, got {spec.regime}")
    if d < 0 or c < 0:
        raise ConfigError("levels c and d must be nonnegative")
    if d == 0.0:
        return 0.0
    fluid = cell.cell.mask == FLUID
    one_minus_w = np.maximum(1.0 - cell.w[fluid], 0.0)
    mean_pow = float(np.mean(one_minus_w**p))
    k_recovered = -cell.hole_flux / cell.cell.fluid_volume
    k_bar = (mean_pow - 1.0) * d**p * c - d ** (1.0 + p) * mean_pow * k_recovered
    return abs(-(d ** (1.0 + p)) * spec.kappa - k_bar)


# ---------------------------------------------------------------------------
# closed-form reference profile
# ---------------------------------------------------------------------------


def barenblatt(coords, t: float, m: float, n: int, c: float, center=None):
    """Source-type self-similar solution of the mass-form equation.

    u(x, t) = t^(-a) * (c - k*|x - x0|^2 * t^(-2a/n))_+^(1/(m-1))
    with a = n/(n(m-1)+2) and k = a(m-1)/(2mn).  ``coords`` is the
    broadcastable coordinate tuple of a grid.
    """
    if m <= 1.0:
        raise ConfigError(f"porous-medium exponent needs m > 1, got {m}")
    a = n / (n * (m - 1.0) + 2.0)
    kb = a * (m - 1.0) / (2.0 * m * n)
    r2 = 0.0
    for ax, x in enumerate(coords):
        x0 = 0.0 if center is None else center[ax]
        r2 = r2 + (x - x0) ** 2
    s = c - kb * r2 * t ** (-2.0 * a / n)
    return t ** (-a) * np.maximum(s, 0.0) ** (1.0 / (m - 1.0))


def barenblatt_support_radius(t: float, m: float, n: int, c: float) -> float:
    a = n / (n * (m - 1.0) + 2.0)
    kb = a * (m - 1.0) / (2.0 * m * n)
    return float(np.sqrt(c / kb) * t ** (a / n))
