"""Convergence-study orchestration and the paper's diagnostic functionals.

A study sweeps a strictly decreasing eps list, solves the eps-problem
and its limit problem, measures the diagnostics (eps-shift difference
quotients, time-derivative norms, boundary-layer oscillation, error away
from the hole layer) and emits machine-readable reports whose verdicts
are pure functions of the recorded rows.
"""

from __future__ import annotations

import hashlib
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from . import __version__
from .backends import thread_cap
from .correctors import (
    CellProblem,
    classify_regime,
    corrector_limit_study,
    harmonic_capacity,
    solve_cell_corrector,
)
from .eigen import (
    EigenProblem,
    correctibility_residual_I,
    discrete_nondegeneracy_report,
    solve_eigen_perforated,
)
from .errors import (
    AlignmentError,
    ConfigError,
    EmptySelectionError,
    HlabError,
)
from .grid import (
    FLUID,
    Field,
    PerforatedGrid,
    TimeField,
    build_box_grid,
    build_perforated_grid,
    critical_radius,
)
from .heat import (
    ParabolicRunConfig,
    PenaltyConfig,
    regime_limit_solver,
    solve_obstacle_heat_penalized,
    solve_obstacle_heat_projected,
)
from .pme import (
    PMEProblem,
    barrier_sandwich_check,
    build_cutoff_xi,
    monotonicity_check,
    pressure_transform,
    solve_pme_penalized,
    solve_pme_perforated,
)
from .report import (
    HRule,
    StudyReport,
    Verdict,
    emit_report,
    trend_bounded,
    trend_decreasing,
    trend_increasing,
)

HEAT_OBSTACLE = "HEAT_OBSTACLE"
EIGEN = "EIGEN"
PME = "PME"
CORRECTOR = "CORRECTOR"

_KINDS = (HEAT_OBSTACLE, EIGEN, PME, CORRECTOR)


# ---------------------------------------------------------------------------
# diagnostic functionals
# ---------------------------------------------------------------------------


def _snapshots_of(f):
    if isinstance(f, TimeField):
        return f.snapshots
    if isinstance(f, Field):
        return [f.values]
    return [np.asarray(f)]


def difference_quotient_norm(f, eps: float) -> float:
    """Max over nodes, snapshots and unit directions of the eps-shift
    quotient |f(x + eps*e) - f(x)| / eps, over node pairs inside the grid."""
    grid = f.grid
    s = eps / grid.h
    si = int(round(s))
    if si < 1 or abs(s - si) > 1e-9:
        raise AlignmentError(f"eps = {eps} is not a node-aligned multiple of h = {grid.h}")
    best = 0.0
    for values in _snapshots_of(f):
        for ax in range(grid.n):
            lead = [slice(None)] * grid.n
            lag = [slice(None)] * grid.n
            lead[ax] = slice(si, None)
            lag[ax] = slice(None, -si)
            d = np.abs(values[tuple(lead)] - values[tuple(lag)])
            if d.size:
                best = max(best, float(d.max()) / eps)
    return best


def time_derivative_norm(u: TimeField) -> float:
    """Max over snapshot pairs of |u(t+dt) - u(t)| / dt."""
    if len(u) < 2:
        raise ConfigError("time_derivative_norm needs at least two snapshots")
    best = 0.0
    for k in range(len(u) - 1):
        dt = u.times[k + 1] - u.times[k]
        best = max(best, float(np.max(np.abs(u.snapshots[k + 1] - u.snapshots[k]))) / dt)
    return best


def layer_oscillation(f: Field, band) -> float:
    """Max over lattice cells of the oscillation of f over nodes whose
    distance to the cell's lattice point lies in [band[0], band[1]]."""
    r_in, r_out = float(band[0]), float(band[1])
    if not (0.0 <= r_in < r_out):
        raise EmptySelectionError(f"bad oscillation band [{r_in}, {r_out}]")
    grid = f.grid
    centers = _interior_lattice_points(grid)
    values = f.values
    w = int(np.ceil(r_out / grid.h)) + 1
    best = None
    for c in centers:
        idx = [int(round((c[ax] - grid.box[ax][0]) / grid.h)) for ax in range(grid.n)]
        sl = tuple(
            slice(max(idx[ax] - w, 0), min(idx[ax] + w + 1, grid.shape[ax]))
            for ax in range(grid.n)
        )
        d2 = np.zeros([s.stop - s.start for s in sl])
        for ax in range(grid.n):
            loc = grid.axes[ax][sl[ax]] - c[ax]
            shp = [1] * grid.n
            shp[ax] = len(loc)
            d2 = d2 + (loc * loc).reshape(shp)
        seln = (d2 >= r_in * r_in) & (d2 <= r_out * r_out)
        if np.count_nonzero(seln) >= 2:
            vals = values[sl][seln]
            osc = float(vals.max() - vals.min())
            best = osc if best is None else max(best, osc)
    if best is None:
        raise EmptySelectionError(
            f"no lattice cell has nodes in the band [{r_in}, {r_out}]"
        )
    return best


def _interior_lattice_points(grid: PerforatedGrid) -> np.ndarray:
    if grid.hole_count:
        return grid.hole_centers
    per_axis = []
    for ax, (lo, hi) in enumerate(grid.box):
        count = int(round((hi - lo) / grid.eps))
        per_axis.append(lo + grid.eps * np.arange(1, count))
    if not all(len(p) for p in per_axis):
        return np.zeros((0, grid.n))
    mesh = np.meshgrid(*per_axis, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def error_outside_layer(
    u_eps: TimeField,
    u_limit: TimeField,
    layer_radius: float | None = None,
    details: bool = False,
):
    """Max over snapshots and over nodes farther than ``layer_radius`` from
    every lattice point of |u_eps - u_limit|.

    The limit trajectory may live on a finer box grid; it is matched to
    the nearest snapshot in time (the skew is recorded) and interpolated
    multilinearly in space.
    """
    grid = u_eps.grid
    if layer_radius is None:
        layer_radius = float(
            np.sqrt(grid.eps * critical_radius(grid.eps, grid.n) / 2.0)
        )
    if layer_radius >= grid.eps / 2.0:
        raise EmptySelectionError(
            f"layer radius {layer_radius} swallows the lattice cell of size {grid.eps}"
        )
    sel = grid.lattice_distance() > layer_radius
    if not np.any(sel):
        raise EmptySelectionError("no nodes outside the layer")

    same_grid = u_limit.grid.shape == grid.shape and all(
        np.allclose(a, b) for a, b in zip(u_limit.grid.axes, grid.axes)
    )
    pts = None
    if not same_grid:
        pts = np.stack([np.broadcast_to(c, grid.shape)[sel] for c in grid.coords()], axis=-1)

    err = 0.0
    max_skew = 0.0
    for snap, t in zip(u_eps.snapshots, u_eps.times):
        j = int(np.argmin(np.abs(u_limit.times - t)))
        max_skew = max(max_skew, float(abs(u_limit.times[j] - t)))
        if same_grid:
            ref = u_limit.snapshots[j][sel]
        else:
            interp = RegularGridInterpolator(
                u_limit.grid.axes, u_limit.snapshots[j], bounds_error=False, fill_value=None
            )
            ref = interp(pts)
        err = max(err, float(np.max(np.abs(snap[sel] - ref))))
    if details:
        return err, {"max_time_skew": max_skew, "layer_radius": layer_radius,
                     "nodes_compared": int(np.count_nonzero(sel))}
    return err


def max_h_gradient_near_holes(f, radius: float) -> float:
    """Max one-sided h-gradient magnitude over nodes within ``radius`` of a
    lattice point (the raw gradient the eps-quotients are contrasted with)."""
    grid = f.grid
    near = grid.lattice_distance() <= radius
    if not np.any(near):
        raise EmptySelectionError(f"no nodes within {radius} of a lattice point")
    best = 0.0
    for values in _snapshots_of(f):
        for ax in range(grid.n):
            d = np.abs(np.diff(values, axis=ax)) / grid.h
            lead = [slice(None)] * grid.n
            lead[ax] = slice(None, -1)
            m = near[tuple(lead)]
            if np.any(m):
                best = max(best, float(d[m].max()))
    return best


# ---------------------------------------------------------------------------
# named data presets (deterministic; a seed is recorded for provenance)
# ---------------------------------------------------------------------------


def data_preset(spec: str, box):
    """Named spatial profiles: ``bump:A`` (product of sines, vanishing on
    the boundary), ``const:A``, ``zero``."""
    name, _, amp = spec.partition(":")
    a = float(amp) if amp else 1.0
    if name == "zero":
        return lambda x: np.zeros(np.broadcast_shapes(*[np.shape(c) for c in x]))
    if name == "const":
        return lambda x: a * np.ones(np.broadcast_shapes(*[np.shape(c) for c in x]))
    if name == "bump":

        def f(x):
            out = a
            for ax, c in enumerate(x):
                lo, hi = box[ax]
                out = out * np.sin(np.pi * (c - lo) / (hi - lo))
            return out

        return f
    raise ConfigError(f"unknown data preset {spec!r}")


# ---------------------------------------------------------------------------
# study configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StudyConfig:
    kind: str
    n: int = 3
    alpha: float | None = None
    c0: float = 1.0
    eps_list: tuple = ()
    h_rule: HRule = field(default_factory=HRule)
    box: tuple = ((0.0, 1.0),)
    k: float | str = "auto"
    p: float = 0.5
    m: float = 2.0
    b_level: float = 1.0
    obstacle: str = "bump:0.8"
    initial: str = "bump:1.0"
    T: float = 0.05
    cfl_safety: float = 0.9
    snapshots: int = 10
    delta: float = 1e-2
    eps_solver: str = "projected"
    tol: float = 1e-8
    seed: int = 0
    out_dir: str | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigError(f"kind must be one of {_KINDS}, got {self.kind!r}")
        eps = tuple(float(e) for e in self.eps_list)
        if len(eps) == 0:
            raise ConfigError("eps_list must not be empty")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ConfigError("eps_list must be strictly decreasing")
        object.__setattr__(self, "eps_list", eps)
        box = tuple((float(lo), float(hi)) for lo, hi in self.box)
        if len(box) == 1 and self.n > 1:
            box = box * self.n
        object.__setattr__(self, "box", box)
        if self.eps_solver not in ("projected", "penalized"):
            raise ConfigError(f"eps_solver must be projected|penalized, got {self.eps_solver!r}")

    def resolved_alpha(self) -> float:
        if self.alpha is not None:
            return float(self.alpha)
        return self.n / (self.n - 2.0)

    def resolved_k(self) -> float:
        if self.k == "auto":
            return harmonic_capacity(1.0, self.n)
        return float(self.k)

    def config_hash(self) -> str:
        text = repr(sorted(self.__dict__.items()))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _parse_number(text: str) -> float:
    text = text.strip()
    if "/" in text:
        num, den = text.split("/")
        return float(num) / float(den)
    return float(text)


def parse_config_text(text: str) -> dict:
    """Flat key-value study config: one ``key = value`` per line, # comments."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def study_config_from_mapping(mapping: dict) -> StudyConfig:
    kwargs = {}
    for key, value in mapping.items():
        if key == "kind":
            kwargs["kind"] = value.upper()
        elif key in ("n", "snapshots", "seed"):
            kwargs[key] = int(value)
        elif key in ("alpha", "c0", "p", "m", "b_level", "T", "cfl_safety", "delta", "tol"):
            kwargs[key] = _parse_number(value)
        elif key == "k":
            kwargs["k"] = value if value == "auto" else _parse_number(value)
        elif key == "eps_list":
            kwargs["eps_list"] = tuple(_parse_number(v) for v in value.split(","))
        elif key == "h_rule":
            kwargs["h_rule"] = HRule.from_string(value)
        elif key == "box":
            lo, hi = value.split(",")
            kwargs["box"] = ((_parse_number(lo), _parse_number(hi)),)
        elif key in ("obstacle", "initial", "eps_solver", "out_dir"):
            kwargs[key] = value
        else:
            raise ConfigError(f"unknown config key {key!r}")
    if "kind" not in kwargs:
        raise ConfigError("config must set 'kind'")
    return StudyConfig(**kwargs)


# ---------------------------------------------------------------------------
# study runners
# ---------------------------------------------------------------------------


def _run_rows(eps_list, worker):
    cap = thread_cap()
    if cap <= 1 or len(eps_list) <= 1:
        return [worker(e) for e in eps_list]
    with ThreadPoolExecutor(max_workers=min(cap, len(eps_list))) as pool:
        return list(pool.map(worker, eps_list))


def _heat_grid_plan(cfg: StudyConfig, eps: float):
    alpha = cfg.resolved_alpha()
    a = cfg.c0 * eps**alpha
    extent = cfg.box[0][1] - cfg.box[0][0]
    q = cfg.h_rule.domain_divisions(eps, a, extent)
    return a, eps / q, q


def _run_heat_study(cfg: StudyConfig) -> StudyReport:
    alpha = cfg.resolved_alpha()
    spec = classify_regime(cfg.n, alpha, r0=cfg.c0)
    phi = data_preset(cfg.obstacle, cfg.box)
    g = data_preset(cfg.initial, cfg.box)

    h_ref = min(_heat_grid_plan(cfg, e)[1] for e in cfg.eps_list)
    ref_grid = build_box_grid(cfg.n, cfg.box, h_ref, eps=min(cfg.eps_list))
    rcfg_ref = ParabolicRunConfig(
        T=cfg.T, cfl_safety=cfg.cfl_safety, snapshots=cfg.snapshots
    )
    limit = regime_limit_solver(spec, ref_grid, phi, g, rcfg_ref)

    def worker(eps):
        row = {"eps": eps, "delta": cfg.delta if cfg.eps_solver == "penalized" else None}
        t0 = time.perf_counter()
        try:
            a, h, q = _heat_grid_plan(cfg, eps)
            grid = build_perforated_grid(cfg.n, cfg.box, eps, a, h)
            rcfg = ParabolicRunConfig(
                T=cfg.T, cfl_safety=cfg.cfl_safety, snapshots=cfg.snapshots
            )
            if cfg.eps_solver == "penalized":
                traj = solve_obstacle_heat_penalized(
                    grid, phi, g, PenaltyConfig(cfg.delta), rcfg
                )
                min_gap = traj.meta["min_hole_gap"]
            else:
                traj = solve_obstacle_heat_projected(grid, phi, g, rcfg)
                min_gap = 0.0
            layer = float(np.sqrt(eps * critical_radius(eps, cfg.n) / 2.0))
            osc = max(
                layer_oscillation(Field(grid, s), (layer, 2.0 * layer))
                for s in traj.snapshots
            )
            err, det = error_outside_layer(traj, limit, details=True)
            row.update(
                h=h,
                dt=traj.meta["dt_step"],
                max_dq=difference_quotient_norm(traj, eps),
                max_dt_norm=traj.meta["max_dt_derivative"],
                min_gap=min_gap,
                osc_layer=osc,
                osc_band_fits=bool(2.0 * layer <= eps / 2.0),
                err_Ddelta=err,
                a_eps=a,
                cells_per_eps=q,
                resolution=a / h,
                unresolved=grid.unresolved_hole,
                time_skew=det["max_time_skew"],
            )
        except HlabError as exc:
            row["error"] = f"{type(exc).__name__}: {exc}"
        row["wall_ms"] = (time.perf_counter() - t0) * 1e3
        return row

    rows = _run_rows(cfg.eps_list, worker)
    errs = [r["err_Ddelta"] for r in rows if "err_Ddelta" in r]
    dqs = [r["max_dq"] for r in rows if "max_dq" in r]
    dts = [r["max_dt_norm"] for r in rows if "max_dt_norm" in r]
    # the layer functional only reads as a boundary-layer quantity when the
    # band sits inside its lattice cell; rows with escaping bands are kept in
    # the table but left out of the decay assertion
    oscs = [r["osc_layer"] for r in rows if "osc_layer" in r and r.get("osc_band_fits")]
    osc_ok = trend_decreasing(oscs) if len(oscs) >= 2 else True
    osc_note = (
        "oscillation over the hole layer decays (no rate asserted)"
        if len(oscs) >= 2
        else "not assessable: layer band exceeds the cell at these eps"
    )
    verdicts = [
        Verdict("err_outside_layer_decreasing", trend_decreasing(errs), errs,
                "Theorem-level convergence to the regime limit, no rate asserted"),
        Verdict("difference_quotient_bounded", trend_bounded(dqs), dqs,
                "eps-shift quotient stays bounded across the sweep"),
        Verdict("time_derivative_bounded", trend_bounded(dts), dts,
                "discrete time derivative stays bounded across the sweep"),
        Verdict("layer_oscillation_decreasing", osc_ok, oscs, osc_note),
    ]
    fitted = {"C_difference_quotient": max(dqs) if dqs else None,
              "C_time_derivative": max(dts) if dts else None}
    if spec.regime == "DOMINANT" and errs:
        beta = cfg.n + 1
        fitted["C_lower_barrier"] = max(
            abs(r["min_gap"] or 0.0) * r["a_eps"] ** (beta - 2) / r["eps"] ** beta
            for r in rows
            if "a_eps" in r
        )
    columns = [
        "eps", "delta", "h", "dt", "max_dq", "max_dt_norm", "min_gap",
        "osc_layer", "err_Ddelta", "wall_ms",
    ]
    return StudyReport(
        kind=HEAT_OBSTACLE,
        columns=columns,
        rows=rows,
        verdicts=verdicts,
        fitted=fitted,
        curves=["eps", "max_dq", "max_dt_norm", "osc_layer", "err_Ddelta"],
        meta=_meta(cfg, regime=spec.regime, alpha=alpha, kappa=spec.kappa, r0=spec.r0),
    )


def _run_eigen_study(cfg: StudyConfig) -> StudyReport:
    spec = classify_regime(cfg.n, cfg.n / (cfg.n - 2.0), r0=cfg.c0)
    k_cell = cfg.resolved_k()
    extent = cfg.box[0][1] - cfg.box[0][0]

    def worker(eps):
        row = {"eps": eps, "p": cfg.p}
        t0 = time.perf_counter()
        try:
            a = cfg.c0 * critical_radius(eps, cfg.n)
            q = cfg.h_rule.domain_divisions(eps, a, extent)
            grid = build_perforated_grid(cfg.n, cfg.box, eps, a, eps / q)
            sol = solve_eigen_perforated(EigenProblem(grid, cfg.p, tol=cfg.tol))
            rep = discrete_nondegeneracy_report(sol, eps)
            layer = float(np.sqrt(eps * critical_radius(eps, cfg.n) / 2.0))
            flat = layer_oscillation(sol.phi, (layer, eps / 2.0))
            band_fits = bool(2.0 * layer <= eps / 2.0)
            mcell = cfg.h_rule.cell_divisions(eps, a)
            cell = solve_cell_corrector(
                CellProblem(cfg.n, eps, a, k_cell, eps / mcell), tol=cfg.tol
            )
            corr = correctibility_residual_I(cfg.b_level, spec, cell, cfg.p)
            interior_fluid = sol.phi.values[grid.mask == FLUID]
            row.update(
                **{"lambda": sol.lam},
                min_phi=float(interior_fluid.min()),
                c_low=rep.c_low,
                C_high=rep.c_high,
                flatness=flat,
                osc_band_fits=band_fits,
                corr_I_residual=corr,
                iters=sol.iterations,
                h=grid.h,
                resolution=a / grid.h,
                unresolved=grid.unresolved_hole,
            )
        except HlabError as exc:
            row["error"] = f"{type(exc).__name__}: {exc}"
        row["wall_ms"] = (time.perf_counter() - t0) * 1e3
        return row

    rows = _run_rows(cfg.eps_list, worker)
    flats = [r["flatness"] for r in rows if "flatness" in r and r.get("osc_band_fits")]
    corrs = [r["corr_I_residual"] for r in rows if "corr_I_residual" in r]
    lows = [r["c_low"] for r in rows if "c_low" in r]
    mins = [r["min_phi"] for r in rows if "min_phi" in r]
    ratio_ok = all(0.5 <= b / a <= 2.0 for a, b in zip(lows, lows[1:])) if len(lows) > 1 else False
    flat_ok = trend_decreasing(flats) if len(flats) >= 2 else True
    flat_note = (
        "per-cell oscillation outside the hole layer decays"
        if len(flats) >= 2
        else "not assessable: layer band exceeds the cell at these eps"
    )
    verdicts = [
        Verdict("flatness_decreasing", flat_ok, flats, flat_note),
        Verdict("correctibility_I_decreasing", trend_decreasing(corrs), corrs,
                "cell-average corrected reaction approaches -b*kappa"),
        Verdict("nondegeneracy_stable", ratio_ok, lows,
                "boundary quotient lower bound neither degenerates nor blows up"),
        Verdict("positivity", bool(mins) and all(v > 0 for v in mins), mins,
                "converged solution strictly positive on interior fluid nodes"),
    ]
    columns = [
        "eps", "p", "lambda", "min_phi", "c_low", "C_high", "flatness",
        "corr_I_residual", "iters", "wall_ms",
    ]
    return StudyReport(
        kind=EIGEN,
        columns=columns,
        rows=rows,
        verdicts=verdicts,
        curves=["eps", "lambda", "c_low", "C_high", "flatness", "corr_I_residual"],
        meta=_meta(cfg, regime=spec.regime, kappa=spec.kappa, r0=spec.r0, b_level=cfg.b_level),
    )


def _run_pme_study(cfg: StudyConfig) -> StudyReport:
    spec = classify_regime(cfg.n, cfg.n / (cfg.n - 2.0), r0=cfg.c0)
    g = data_preset(cfg.initial, cfg.box)
    extent = cfg.box[0][1] - cfg.box[0][0]

    def worker(eps):
        row = {"eps": eps, "m": cfg.m, "delta": cfg.delta}
        t0 = time.perf_counter()
        try:
            a = cfg.c0 * critical_radius(eps, cfg.n)
            r_out = eps ** ((cfg.n - 1.0) / (cfg.n - 2.0))
            q = cfg.h_rule.domain_divisions(eps, a, extent)
            q = max(q, int(np.ceil(4.0 * eps / r_out)))
            periods = extent / eps
            if q * periods > cfg.h_rule.max_nodes + 1e-9:
                raise ConfigError(
                    f"cutoff outer radius needs {q} cells/eps, over the node budget"
                )
            grid = build_perforated_grid(cfg.n, cfg.box, eps, a, eps / q)
            xi = build_cutoff_xi(grid)
            rcfg = ParabolicRunConfig(
                T=cfg.T, cfl_safety=cfg.cfl_safety, snapshots=cfg.snapshots
            )
            traj = solve_pme_perforated(PMEProblem(grid, cfg.m, g, rcfg), xi=xi)
            v = pressure_transform(traj, cfg.m)

            phi = solve_eigen_perforated(EigenProblem(grid, 1.0 / cfg.m, tol=cfg.tol))
            sandwich = barrier_sandwich_check(
                v, phi.phi, cfg.m, tol=5e-2 * float(v.snapshots[0].max())
            )

            tors = box_torsion(grid, cfg.tol)
            pen = solve_pme_penalized(
                grid, cfg.m, cfg.delta + tors, PenaltyConfig(cfg.delta), rcfg, xi=xi
            )
            mono = monotonicity_check(pen, tol=1e-12)

            layer = float(np.sqrt(eps * critical_radius(eps, cfg.n) / 2.0))
            grad_near = max_h_gradient_near_holes(v, max(2.0 * a, 2.5 * grid.h))
            row.update(
                h=grid.h,
                dt=traj.meta["dt_step"],
                max_dq=difference_quotient_norm(v, eps),
                max_dt_norm=traj.meta["max_dt_derivative"],
                min_gap=None,
                osc_layer=max(
                    layer_oscillation(Field(grid, s), (layer, 2.0 * layer))
                    for s in v.snapshots
                ),
                err_Ddelta=None,
                lambda1=None if np.isinf(sandwich.lambda1) else sandwich.lambda1,
                lambda2=sandwich.lambda2,
                sandwich_pass=sandwich.passed,
                mono_pass=mono.passed,
                clamp_max=traj.meta["clamp_max"],
                grad_near_holes=grad_near,
                resolution=a / grid.h,
                unresolved=grid.unresolved_hole,
            )
        except HlabError as exc:
            row["error"] = f"{type(exc).__name__}: {exc}"
        row["wall_ms"] = (time.perf_counter() - t0) * 1e3
        return row

    rows = _run_rows(cfg.eps_list, worker)
    dqs = [r["max_dq"] for r in rows if "max_dq" in r]
    grads = [r["grad_near_holes"] for r in rows if "grad_near_holes" in r]
    sand = [r["sandwich_pass"] for r in rows if "sandwich_pass" in r]
    mono = [r["mono_pass"] for r in rows if "mono_pass" in r]
    verdicts = [
        Verdict("difference_quotient_bounded", trend_bounded(dqs), dqs,
                "eps-shift quotient of the pressure stays bounded"),
        Verdict("h_gradient_grows_near_holes", trend_increasing(grads), grads,
                "raw h-gradient near holes grows while the eps-quotient stays flat"),
        Verdict("sandwich", bool(sand) and all(sand), [float(s) for s in sand],
                "barrier pair fitted at t=0 brackets the pressure at all times"),
        Verdict("time_monotone", bool(mono) and all(mono), [float(s) for s in mono],
                "penalized pressure flow non-increasing from superharmonic data"),
    ]
    columns = [
        "eps", "delta", "h", "dt", "max_dq", "max_dt_norm", "min_gap", "osc_layer",
        "err_Ddelta", "wall_ms", "m", "lambda1", "lambda2", "sandwich_pass",
        "mono_pass", "clamp_max",
    ]
    return StudyReport(
        kind=PME,
        columns=columns,
        rows=rows,
        verdicts=verdicts,
        curves=["eps", "max_dq", "grad_near_holes", "lambda2"],
        meta=_meta(cfg, regime=spec.regime, kappa=spec.kappa, r0=spec.r0),
    )


def export_trajectory(tf: TimeField, path_stem: str, mode: str = "binary"):
    """Write a trajectory to disk.

    ``binary`` writes ``<stem>.bin`` (row-major float64 snapshots,
    concatenated in time order) plus ``<stem>.json`` (grid descriptor,
    dt, T, snapshot times).  ``csv`` writes one ``<stem>_NNN.csv`` per
    snapshot with flattened row-major values, plus the same sidecar.
    Returns the written paths.
    """
    import json as _json
    import os as _os

    from .report import atomic_write_text

    sidecar = {
        "schema": "hlab-trajectory-1",
        "grid": tf.grid.descriptor(),
        "dt": tf.dt,
        "T": float(tf.times[-1]),
        "times": [float(t) for t in tf.times],
        "snapshot_count": len(tf),
        "dtype": "float64",
        "order": "C",
    }
    paths = [atomic_write_text(path_stem + ".json", _json.dumps(sidecar, indent=2))]
    if mode == "binary":
        blob = np.concatenate([s.ravel(order="C") for s in tf.snapshots])
        tmp = path_stem + ".bin.tmp"
        blob.astype(np.float64).tofile(tmp)
        _os.replace(tmp, path_stem + ".bin")
        paths.append(path_stem + ".bin")
    elif mode == "csv":
        for k, snap in enumerate(tf.snapshots):
            body = "\n".join(repr(v) for v in snap.ravel(order="C"))
            paths.append(atomic_write_text(f"{path_stem}_{k:03d}.csv", body + "\n"))
    else:
        raise ConfigError(f"export mode must be 'binary' or 'csv', got {mode!r}")
    return paths


def load_trajectory(path_stem: str) -> TimeField:
    """Read a binary trajectory written by :func:`export_trajectory`."""
    import json as _json

    with open(path_stem + ".json") as handle:
        sidecar = _json.load(handle)
    desc = sidecar["grid"]
    grid = build_perforated_grid(
        desc["n"], desc["box"], desc["eps"], desc["hole_radius"], desc["h"]
    )
    shape = tuple(desc["shape"])
    count = sidecar["snapshot_count"]
    blob = np.fromfile(path_stem + ".bin", dtype=np.float64)
    snaps = [
        blob[k * int(np.prod(shape)) : (k + 1) * int(np.prod(shape))].reshape(shape)
        for k in range(count)
    ]
    return TimeField(grid, sidecar["dt"], np.asarray(sidecar["times"]), snaps)


def box_torsion(grid: PerforatedGrid, tol: float = 1e-10) -> np.ndarray:
    """Solution of lap w = -1 on the whole box with zero boundary data.

    Discretely superharmonic at every interior node (holes included), so
    it seeds the penalized-flow monotonicity checks.
    """
    from .grid import OUTER_BOUNDARY
    from .linalg import solve_poisson

    free = (grid.mask != OUTER_BOUNDARY).astype(np.uint8)
    w, _, _ = solve_poisson(free, 0.0, np.ones(grid.shape), grid.inv_h2, tol=tol)
    return w


def _meta(cfg: StudyConfig, **extra) -> dict:
    meta = {
        "config_hash": cfg.config_hash(),
        "version": __version__,
        "seed": cfg.seed,
        "h_rule": cfg.h_rule.to_string(),
        "kind": cfg.kind,
        "n": cfg.n,
        "eps_list": list(cfg.eps_list),
    }
    meta.update({k: v for k, v in extra.items() if v is not None})
    return meta


def run_study(cfg: StudyConfig) -> StudyReport:
    """Execute the per-eps pipeline and (optionally) write report artifacts.

    Per-row failures are recorded on their rows; the study itself raises
    only when every row failed.
    """
    if cfg.kind == CORRECTOR:
        report = corrector_limit_study(
            cfg.n,
            cfg.resolved_alpha(),
            cfg.resolved_k(),
            list(cfg.eps_list),
            h_rule=cfg.h_rule,
            c0=cfg.c0,
            tol=cfg.tol,
        )
        report.meta.update(_meta(cfg))
    elif cfg.kind == HEAT_OBSTACLE:
        report = _run_heat_study(cfg)
    elif cfg.kind == EIGEN:
        report = _run_eigen_study(cfg)
    elif cfg.kind == PME:
        report = _run_pme_study(cfg)
    else:  # pragma: no cover - guarded by StudyConfig
        raise ConfigError(f"unknown study kind {cfg.kind!r}")

    if report.rows and all(r.get("error") for r in report.rows):
        raise HlabError(
            "every study row failed: " + "; ".join(str(r["error"]) for r in report.rows)
        )
    if cfg.out_dir:
        for fmt in ("JSON", "CSV", "PLOTDATA"):
            emit_report(report, fmt, cfg.out_dir)
    return report
