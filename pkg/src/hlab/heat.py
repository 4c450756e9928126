"""Oscillating-obstacle heat solvers and their homogenized limits.

Three explicit monotone marches:

* penalized: the heat flow with a concave penalty punishing dips below
  the obstacle, evaluated on the obstacle support (the hole nodes);
* projected: heat step followed by a pointwise maximum with the
  obstacle, the independent route to the least supersolution;
* homogenized: heat flow on the unperforated box with the capacity
  reaction ``kappa * (phi - u)_+``.

Explicit stepping only: the monotone structure is what carries every
comparison-principle property the studies assert.
"""

from __future__ import annotations

import inspect
import time
from dataclasses import dataclass

import numpy as np

from .correctors import CRITICAL, DOMINANT, VANISHING, RegimeSpec
from .errors import CompatibilityError, ConfigError, InstabilityError
from .grid import (
    HOLE,
    Field,
    PerforatedGrid,
    TimeField,
    evaluate_spacetime,
)
from .kernels import heat_step

PIECEWISE_LINEAR = "PIECEWISE_LINEAR"
SMOOTH_QUADRATIC = "SMOOTH_QUADRATIC"

BLOWUP_FACTOR = 1e3


@dataclass(frozen=True)
class PenaltyConfig:
    """Penalty width and profile; both profiles are concave, nondecreasing,
    equal -1 at zero gap and vanish above delta."""

    delta: float
    shape: str = PIECEWISE_LINEAR

    def __post_init__(self):
        if self.delta <= 0:
            raise ConfigError(f"penalty width delta must be positive, got {self.delta}")
        if self.shape not in (PIECEWISE_LINEAR, SMOOTH_QUADRATIC):
            raise ConfigError(f"unknown penalty shape {self.shape!r}")


def beta_delta(s, cfg: PenaltyConfig):
    """Penalty value(s) for gap ``s``; scalar in, scalar out."""
    s_arr = np.asarray(s, dtype=float)
    d = cfg.delta
    if cfg.shape == PIECEWISE_LINEAR:
        out = np.where(s_arr > d, 0.0, (s_arr - d) / d)
    else:
        out = np.where(s_arr > d, 0.0, -((d - s_arr) / d) ** 2)
    if np.isscalar(s) or np.ndim(s) == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class ParabolicRunConfig:
    """Explicit-march plan: horizon, optional fixed dt, CFL safety, tolerance.

    ``snapshots`` is the number of stored intervals; long runs keep only
    those snapshots while accumulating per-step diagnostics.
    """

    T: float
    dt: float | None = None
    cfl_safety: float = 0.9
    tol: float = 1e-10
    snapshots: int = 10

    def __post_init__(self):
        if self.T <= 0:
            raise ConfigError(f"final time T must be positive, got {self.T}")
        if not (0.0 < self.cfl_safety <= 1.0):
            raise ConfigError(f"cfl_safety must lie in (0, 1], got {self.cfl_safety}")
        if self.snapshots < 1:
            raise ConfigError("snapshots must be >= 1")


def plan_march(rcfg: ParabolicRunConfig, dt_limit: float):
    """Pick (steps, dt, stride) hitting T exactly with snapshot-aligned steps."""
    if rcfg.dt is not None:
        dt = rcfg.dt
        if dt > dt_limit * (1.0 + 1e-12):
            raise ConfigError(
                f"dt = {dt} violates the stability limit {dt_limit:.6e}"
            )
        steps = int(round(rcfg.T / dt))
        if steps < 1 or abs(steps * dt - rcfg.T) > 1e-9 * rcfg.T:
            raise ConfigError(f"dt = {dt} does not divide T = {rcfg.T}")
    else:
        steps = max(1, int(np.ceil(rcfg.T / dt_limit * (1.0 - 1e-12))))
        dt = rcfg.T / steps
    snaps = min(rcfg.snapshots, steps)
    if steps % snaps:
        steps = snaps * int(np.ceil(steps / snaps))
        dt = rcfg.T / steps
    return steps, dt, steps // snaps


class SpaceTimeData:
    """Uniform access to obstacle/initial data given as a callable of
    (coords, t), a callable of coords, a Field, or a constant.

    Single-argument callables, fields and constants are static and
    evaluated once; two-argument callables are re-evaluated per step.
    """

    def __init__(self, grid: PerforatedGrid, data):
        self.grid = grid
        self._dynamic = False
        if isinstance(data, Field):
            self._cache = data.values.copy()
        elif isinstance(data, np.ndarray):
            if data.shape != grid.shape:
                raise ConfigError(
                    f"data shape {data.shape} does not match grid shape {grid.shape}"
                )
            self._cache = data.astype(float, copy=True)
        elif callable(data):
            try:
                n_params = len(inspect.signature(data).parameters)
            except (TypeError, ValueError):
                n_params = 2
            if n_params >= 2:
                self._dynamic = True
                self._f = data
                self._cache = None
            else:
                self._cache = self.grid.sample(data)
        else:
            self._cache = np.full(grid.shape, float(data))

    @property
    def static(self) -> bool:
        return not self._dynamic

    def at(self, t: float) -> np.ndarray:
        if self._dynamic:
            return evaluate_spacetime(self._f, self.grid, t)
        return self._cache


def _zero_faces(u: np.ndarray):
    n = u.ndim
    for ax in range(n):
        face = [slice(None)] * n
        for end in (0, -1):
            face[ax] = end
            u[tuple(face)] = 0.0


def _core(n):
    return (slice(1, -1),) * n


def _initial(grid, g):
    u0 = SpaceTimeData(grid, g).at(0.0)
    _zero_faces(u0)
    return u0


def _check_blowup(u, scale):
    if not np.all(np.isfinite(u)) or np.max(np.abs(u)) > BLOWUP_FACTOR * scale:
        raise InstabilityError(
            f"march blew up: max |u| = {np.max(np.abs(u)):.3e} "
            f"exceeds {BLOWUP_FACTOR:g} x initial scale {scale:.3e}"
        )


def solve_obstacle_heat_penalized(
    grid: PerforatedGrid,
    phi,
    g,
    pcfg: PenaltyConfig,
    rcfg: ParabolicRunConfig,
) -> TimeField:
    """Penalized oscillating-obstacle heat flow on the full box.

    The penalty acts where the oscillating obstacle lives (hole nodes);
    off the support the obstacle is zero and the constraint is vacuous
    for the nonnegative data handled here, so the march there is the
    plain heat step, exactly.
    """
    n = grid.n
    dt_diff = grid.h**2 / (2.0 * n)
    steps, dt, stride = plan_march(rcfg, rcfg.cfl_safety * dt_diff)
    bprime = 1.0 / pcfg.delta if pcfg.shape == PIECEWISE_LINEAR else 2.0 / pcfg.delta
    if dt * (2.0 * n / grid.h**2 + bprime) >= 1.0 + 1e-12:
        raise ConfigError(
            "penalized march not monotone: dt*(2n/h^2 + beta') >= 1; "
            "reduce dt or cfl_safety, or widen delta"
        )

    obstacle = SpaceTimeData(grid, phi)
    hole_idx = grid.hole_flat_indices()
    u = _initial(grid, g)
    phi0 = obstacle.at(0.0).ravel()[hole_idx]
    if hole_idx.size and np.min(u.ravel()[hole_idx] - phi0) < -1e-12:
        raise CompatibilityError("initial data lies below the obstacle on holes")

    scale = max(float(np.max(np.abs(u))), float(np.max(np.abs(phi0), initial=0.0)), 1e-30)
    inv_h2 = grid.inv_h2
    times = [0.0]
    snapshots = [u.copy()]
    max_dtn = 0.0
    min_gap = np.inf
    t0 = time.perf_counter()
    phi_hole = phi0
    for k in range(steps):
        if obstacle.static:
            ph = phi_hole
        else:
            ph = obstacle.at(k * dt).ravel()[hole_idx]
        un = heat_step(u, dt, inv_h2)
        if hole_idx.size:
            gap = u.ravel()[hole_idx] - ph
            g_min = float(gap.min())
            if g_min < min_gap:
                min_gap = g_min
            un.ravel()[hole_idx] -= dt * beta_delta(gap, pcfg)
        max_dtn = max(max_dtn, float(np.max(np.abs(un - u))) / dt)
        u = un
        if (k + 1) % 16 == 0 or k + 1 == steps:
            _check_blowup(u, scale)
        if (k + 1) % stride == 0:
            times.append((k + 1) * dt)
            snapshots.append(u.copy())
    meta = {
        "dt_step": dt,
        "steps": steps,
        "max_dt_derivative": max_dtn,
        "min_hole_gap": float(min_gap) if hole_idx.size else None,
        "delta": pcfg.delta,
        "wall_ms": (time.perf_counter() - t0) * 1e3,
    }
    return TimeField(grid, dt * stride, np.asarray(times), snapshots, meta)


def solve_obstacle_heat_projected(
    grid: PerforatedGrid,
    phi,
    g,
    rcfg: ParabolicRunConfig,
    full_obstacle: bool = False,
) -> TimeField:
    """Projected explicit scheme: heat step, then pointwise maximum with
    the obstacle (so u >= obstacle holds exactly after every step).

    With ``full_obstacle`` the projection uses phi on every node (the
    DOMINANT-regime limit problem); otherwise it uses the oscillating
    obstacle, phi on holes and zero elsewhere.
    """
    n = grid.n
    dt_diff = grid.h**2 / (2.0 * n)
    steps, dt, stride = plan_march(rcfg, rcfg.cfl_safety * dt_diff)

    obstacle = SpaceTimeData(grid, phi)
    hole = grid.mask == HOLE

    def obstacle_field(t):
        vals = obstacle.at(t)
        if not full_obstacle:
            vals = np.where(hole, vals, 0.0)
        return vals

    u = _initial(grid, g)
    ob0 = obstacle_field(0.0)
    np.maximum(u, ob0, out=u)
    _zero_faces(u)
    scale = max(float(np.max(np.abs(u))), float(np.max(np.abs(ob0))), 1e-30)

    inv_h2 = grid.inv_h2
    times = [0.0]
    snapshots = [u.copy()]
    max_dtn = 0.0
    t0 = time.perf_counter()
    ob = ob0
    for k in range(steps):
        if not obstacle.static:
            ob = obstacle_field((k + 1) * dt)
        un = heat_step(u, dt, inv_h2)
        np.maximum(un, ob, out=un)
        _zero_faces(un)
        max_dtn = max(max_dtn, float(np.max(np.abs(un - u))) / dt)
        u = un
        if (k + 1) % 16 == 0 or k + 1 == steps:
            _check_blowup(u, scale)
        if (k + 1) % stride == 0:
            times.append((k + 1) * dt)
            snapshots.append(u.copy())
    meta = {
        "dt_step": dt,
        "steps": steps,
        "max_dt_derivative": max_dtn,
        "full_obstacle": full_obstacle,
        "wall_ms": (time.perf_counter() - t0) * 1e3,
    }
    return TimeField(grid, dt * stride, np.asarray(times), snapshots, meta)


def solve_homogenized_heat(
    grid: PerforatedGrid,
    phi,
    g,
    kappa: float,
    rcfg: ParabolicRunConfig,
) -> TimeField:
    """Heat flow with the capacity reaction kappa*(phi - u)_+ on the box.

    Runs on an unperforated grid (any hole tags on ``grid`` are ignored;
    the reaction sees the full obstacle).  kappa = 0 executes the exact
    plain-heat code path, bit for bit.
    """
    if kappa < 0:
        raise ConfigError(f"kappa must be nonnegative, got {kappa}")
    n = grid.n
    dt_diff = grid.h**2 / (2.0 * n)
    steps, dt, stride = plan_march(rcfg, rcfg.cfl_safety * dt_diff)
    if kappa > 0 and dt * kappa > rcfg.cfl_safety * (1.0 + 1e-12):
        raise ConfigError(
            f"reaction bound violated: dt*kappa = {dt * kappa:.3e} "
            f"> cfl_safety = {rcfg.cfl_safety}"
        )

    obstacle = SpaceTimeData(grid, phi if phi is not None else 0.0)
    u = _initial(grid, g)
    scale = max(
        float(np.max(np.abs(u))),
        float(np.max(np.abs(obstacle.at(0.0)))) if kappa > 0 else 0.0,
        1e-30,
    )
    inv_h2 = grid.inv_h2
    core = _core(n)
    times = [0.0]
    snapshots = [u.copy()]
    max_dtn = 0.0
    t0 = time.perf_counter()
    ph = obstacle.at(0.0)
    for k in range(steps):
        un = heat_step(u, dt, inv_h2)
        if kappa > 0.0:
            if not obstacle.static:
                ph = obstacle.at(k * dt)
            un[core] += (dt * kappa) * np.maximum(ph[core] - u[core], 0.0)
        max_dtn = max(max_dtn, float(np.max(np.abs(un - u))) / dt)
        u = un
        if (k + 1) % 16 == 0 or k + 1 == steps:
            _check_blowup(u, scale)
        if (k + 1) % stride == 0:
            times.append((k + 1) * dt)
            snapshots.append(u.copy())
    meta = {
        "dt_step": dt,
        "steps": steps,
        "max_dt_derivative": max_dtn,
        "kappa": kappa,
        "wall_ms": (time.perf_counter() - t0) * 1e3,
    }
    return TimeField(grid, dt * stride, np.asarray(times), snapshots, meta)


def solve_plain_heat(grid: PerforatedGrid, g, rcfg: ParabolicRunConfig) -> TimeField:
    """Plain heat flow (the kappa = 0 homogenized march, same stencil)."""
    return solve_homogenized_heat(grid, None, g, 0.0, rcfg)


def regime_limit_solver(
    spec: RegimeSpec,
    grid: PerforatedGrid,
    phi,
    g,
    rcfg: ParabolicRunConfig,
) -> TimeField:
    """Limit equation per scaling regime, on the unperforated box grid.

    VANISHING ignores the obstacle entirely; CRITICAL runs the capacity
    reaction with kappa = cap(B_1) * r0^(n-2); DOMINANT keeps the full
    obstacle via the projected scheme.
    """
    if spec.regime == VANISHING:
        return solve_plain_heat(grid, g, rcfg)
    if spec.regime == CRITICAL:
        return solve_homogenized_heat(grid, phi, g, spec.kappa, rcfg)
    if spec.regime == DOMINANT:
        return solve_obstacle_heat_projected(grid, phi, g, rcfg, full_obstacle=True)
    raise ConfigError(f"unclassified regime {spec.regime!r}")
