"""Perforated-domain construction and discrete fields.

A :class:`PerforatedGrid` is a uniform node-centred grid over an
axis-aligned box from which an eps-periodic lattice of spherical holes
has been tagged out.  Holes are discretised by a node-centre membership
test (distance to the hole centre <= hole radius), not by cut cells; a
hole smaller than one spacing is recorded on the grid as the
``unresolved_hole`` flag rather than rejected, and studies are expected
to consult that flag.

Grids are lattice-aligned on purpose: ``eps`` is an integer multiple of
``h`` and the box extents are integer multiples of ``eps``, so lattice
points are nodes and the eps-shift difference quotients used throughout
the diagnostics land exactly on nodes.

Grids and fields are immutable after construction (dataclass fields are
never reassigned; ndarray contents are treated as read-only by
convention), so any number of readers may share them.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .errors import AlignmentError, GeometryError, UnsupportedDimensionError

_SNAP = 1e-9


class Region(IntEnum):
    FLUID = 0
    HOLE = 1
    OUTER_BOUNDARY = 2


FLUID = int(Region.FLUID)
HOLE = int(Region.HOLE)
OUTER_BOUNDARY = int(Region.OUTER_BOUNDARY)

UNRESOLVED_HOLE = "unresolved_hole"


def critical_radius(eps: float, n: int) -> float:
    """Critical hole radius for period ``eps`` in dimension ``n``.

    ``eps**(n/(n-2))`` for n >= 3; ``exp(-1/eps**2)`` for n = 2 (stated
    for completeness; numerically negligible at any usable eps).
    """
    if n < 2:
        raise UnsupportedDimensionError(f"critical radius needs n >= 2, got n={n}")
    if eps <= 0:
        raise GeometryError(f"eps must be positive, got {eps}")
    if n == 2:
        return math.exp(-1.0 / eps**2)
    return eps ** (n / (n - 2))


def _as_box(n, box):
    box = tuple((float(lo), float(hi)) for lo, hi in box)
    if len(box) != n:
        raise GeometryError(f"box has {len(box)} axes, expected {n}")
    for lo, hi in box:
        if not hi > lo:
            raise GeometryError(f"box extent must be positive, got [{lo}, {hi}]")
    return box


def _int_ratio(num, den, what):
    q = num / den
    qi = round(q)
    if qi < 1 or abs(q - qi) > _SNAP * max(1.0, abs(q)):
        raise AlignmentError(f"{what}: {num} is not an integer multiple of {den}")
    return int(qi)


@dataclass(frozen=True)
class PerforatedGrid:
    """Uniform grid over a box with an eps-lattice of spherical holes masked out."""

    n: int
    box: tuple
    eps: float
    hole_radius: float
    h: float
    shape: tuple
    axes: tuple
    mask: np.ndarray
    hole_centers: np.ndarray
    flags: frozenset = field(default_factory=frozenset)

    @property
    def num_nodes(self) -> int:
        return int(np.prod(self.shape))

    @property
    def inv_h2(self) -> float:
        return 1.0 / (self.h * self.h)

    @property
    def hole_count(self) -> int:
        return int(self.hole_centers.shape[0])

    @property
    def unresolved_hole(self) -> bool:
        return UNRESOLVED_HOLE in self.flags

    def coords(self):
        """Sparse broadcastable coordinate arrays, one per axis."""
        out = []
        for ax, arr in enumerate(self.axes):
            sh = [1] * self.n
            sh[ax] = len(arr)
            out.append(arr.reshape(sh))
        return tuple(out)

    def sample(self, f) -> np.ndarray:
        """Pointwise samples of ``f(x)`` (x = coordinate array tuple) at all nodes."""
        vals = np.asarray(f(self.coords()), dtype=float)
        return np.broadcast_to(vals, self.shape).copy()

    def lattice_distance(self) -> np.ndarray:
        """Distance from each node to the nearest point of the eps-lattice."""
        d2 = np.zeros(self.shape)
        for ax, x in enumerate(self.coords()):
            lo = self.box[ax][0]
            rel = x - lo
            d = np.abs(rel - self.eps * np.round(rel / self.eps))
            d2 = d2 + d * d
        return np.sqrt(d2)

    def free_mask(self, region=FLUID) -> np.ndarray:
        """uint8 mask of nodes with the given tag (update set for kernels)."""
        return (self.mask == region).astype(np.uint8)

    def hole_flat_indices(self) -> np.ndarray:
        return np.flatnonzero(self.mask.ravel() == HOLE)

    def descriptor(self) -> dict:
        return {
            "schema": "hlab-grid-1",
            "n": self.n,
            "box": [list(b) for b in self.box],
            "eps": self.eps,
            "hole_radius": self.hole_radius,
            "h": self.h,
            "shape": list(self.shape),
            "hole_count": self.hole_count,
            "flags": sorted(self.flags),
        }

    def descriptor_json(self) -> str:
        return json.dumps(self.descriptor(), indent=2, sort_keys=True)

    def mask_bytes(self) -> bytes:
        """One byte per node, row-major (C order): 0 fluid, 1 hole, 2 boundary."""
        return self.mask.astype(np.uint8).tobytes(order="C")


def build_perforated_grid(n, box, eps, hole_radius, h) -> PerforatedGrid:
    """Construct the grid, tag every node, and record resolution flags.

    Raises GeometryError when holes touch (2*hole_radius >= eps) and
    AlignmentError when ``h`` does not divide ``eps`` or the box is not a
    whole number of cells.  A positive hole radius below ``h`` succeeds
    with the ``unresolved_hole`` flag set.
    """
    box = _as_box(n, box)
    if eps <= 0 or h <= 0:
        raise GeometryError("eps and h must be positive")
    if hole_radius < 0:
        raise GeometryError("hole_radius must be nonnegative")
    if hole_radius > 0 and 2.0 * hole_radius >= eps:
        raise GeometryError(
            f"holes touch: 2*hole_radius = {2 * hole_radius} >= eps = {eps}"
        )
    _int_ratio(eps, h, "eps/h")
    cells = [_int_ratio(hi - lo, eps, "box/eps") for lo, hi in box]

    axes = []
    shape = []
    for ax, (lo, hi) in enumerate(box):
        k = _int_ratio(hi - lo, h, "box/h")
        axes.append(lo + h * np.arange(k + 1))
        shape.append(k + 1)
    shape = tuple(shape)

    mask = np.full(shape, FLUID, dtype=np.uint8)

    # interior lattice points carry the holes; a < eps/2 keeps every such
    # ball clear of the outer boundary, so no extra exclusion test is needed
    centers = []
    if hole_radius > 0.0:
        per_axis = [
            box[ax][0] + eps * np.arange(1, cells[ax]) for ax in range(n)
        ]
        if all(len(p) for p in per_axis):
            mesh = np.meshgrid(*per_axis, indexing="ij")
            centers = np.stack([m.ravel() for m in mesh], axis=1)
    centers = np.asarray(centers, dtype=float).reshape(-1, n)

    r_snap = hole_radius * (1.0 + _SNAP) + _SNAP * h
    w = int(math.ceil(hole_radius / h)) + 1
    for c in centers:
        idx = [int(round((c[ax] - box[ax][0]) / h)) for ax in range(n)]
        sl = tuple(
            slice(max(idx[ax] - w, 0), min(idx[ax] + w + 1, shape[ax]))
            for ax in range(n)
        )
        d2 = np.zeros([s.stop - s.start for s in sl])
        for ax in range(n):
            loc = axes[ax][sl[ax]] - c[ax]
            shp = [1] * n
            shp[ax] = len(loc)
            d2 = d2 + (loc * loc).reshape(shp)
        mask[sl][d2 <= r_snap * r_snap] = HOLE

    for ax in range(n):
        face = [slice(None)] * n
        for end in (0, -1):
            face[ax] = end
            mask[tuple(face)] = OUTER_BOUNDARY

    flags = set()
    if 0.0 < hole_radius < h:
        flags.add(UNRESOLVED_HOLE)

    return PerforatedGrid(
        n=n,
        box=box,
        eps=float(eps),
        hole_radius=float(hole_radius),
        h=float(h),
        shape=shape,
        axes=tuple(axes),
        mask=mask,
        hole_centers=centers,
        flags=frozenset(flags),
    )


def build_box_grid(n, box, h, eps=None) -> PerforatedGrid:
    """Unperforated grid over the box (reference/limit solves)."""
    box = _as_box(n, box)
    if eps is None:
        eps = box[0][1] - box[0][0]
    return build_perforated_grid(n, box, eps, 0.0, h)


@dataclass
class Field:
    """One scalar per node of a grid."""

    grid: PerforatedGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise GeometryError(
                f"field shape {self.values.shape} != grid shape {self.grid.shape}"
            )

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())


@dataclass
class TimeField:
    """Time-indexed sequence of snapshots on one grid.

    ``dt`` is the snapshot spacing; long marches store strided snapshots
    and accumulate per-step diagnostics in ``meta`` instead of keeping
    every step in memory.
    """

    grid: PerforatedGrid
    dt: float
    times: np.ndarray
    snapshots: list
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if len(self.snapshots) != len(self.times):
            raise GeometryError("snapshot/time count mismatch")
        if len(self.times) and np.any(np.diff(self.times) <= 0):
            raise GeometryError("snapshot times must strictly increase")

    def __len__(self):
        return len(self.snapshots)

    def field(self, k: int) -> Field:
        return Field(self.grid, self.snapshots[k])

    @property
    def final(self) -> np.ndarray:
        return self.snapshots[-1]


def sample_field(f, grid: PerforatedGrid) -> Field:
    """Pointwise samples of a spatial function at all nodes."""
    return Field(grid, grid.sample(f))


def oscillating_obstacle(phi, grid: PerforatedGrid, t: float = 0.0) -> Field:
    """The rapidly oscillating obstacle: phi(x, t) on hole nodes, 0 elsewhere.

    ``phi`` may be a callable of (coords, t), a callable of coords only,
    or a scalar.
    """
    vals = np.zeros(grid.shape)
    hole = grid.mask == HOLE
    if np.any(hole):
        full = evaluate_spacetime(phi, grid, t)
        vals[hole] = full[hole]
    return Field(grid, vals)


def evaluate_spacetime(phi, grid: PerforatedGrid, t: float) -> np.ndarray:
    """Evaluate a space(-time) function or constant on all nodes."""
    if callable(phi):
        try:
            vals = phi(grid.coords(), t)
        except TypeError:
            vals = phi(grid.coords())
        return np.broadcast_to(np.asarray(vals, dtype=float), grid.shape).copy()
    return np.full(grid.shape, float(phi))


# ---------------------------------------------------------------------------
# periodic unit cell (corrector and cutoff problems)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PeriodicCell:
    """One period cell [-eps/2, eps/2]^n on the torus, hole at the origin.

    Nodes are indexed 0..N-1 per axis with node 0 at the hole centre;
    ``radius`` holds the periodic (minimum-image) distance to the centre.
    """

    n: int
    eps: float
    hole_radius: float
    h: float
    shape: tuple
    mask: np.ndarray
    radius: np.ndarray
    flags: frozenset = field(default_factory=frozenset)

    @property
    def inv_h2(self) -> float:
        return 1.0 / (self.h * self.h)

    @property
    def num_nodes(self) -> int:
        return int(np.prod(self.shape))

    @property
    def unresolved_hole(self) -> bool:
        return UNRESOLVED_HOLE in self.flags

    @property
    def fluid_fraction(self) -> float:
        return float(np.mean(self.mask == FLUID))

    @property
    def fluid_volume(self) -> float:
        return float(np.sum(self.mask == FLUID)) * self.h**self.n

    def free_mask(self) -> np.ndarray:
        return (self.mask == FLUID).astype(np.uint8)


def build_periodic_cell(n, eps, hole_radius, h) -> PeriodicCell:
    """Periodic cell with a node-centre-tagged spherical hole at the origin."""
    if eps <= 0 or h <= 0 or hole_radius <= 0:
        raise GeometryError("eps, h and hole_radius must be positive")
    if 2.0 * hole_radius >= eps:
        raise GeometryError(
            f"holes touch: 2*hole_radius = {2 * hole_radius} >= eps = {eps}"
        )
    m = _int_ratio(eps, h, "eps/h")
    shape = (m,) * n

    c = h * np.arange(m)
    axis_d = np.minimum(c, eps - c)
    d2 = np.zeros(shape)
    for ax in range(n):
        shp = [1] * n
        shp[ax] = m
        d2 = d2 + (axis_d * axis_d).reshape(shp)
    radius = np.sqrt(d2)

    r_snap = hole_radius * (1.0 + _SNAP) + _SNAP * h
    mask = np.where(radius <= r_snap, HOLE, FLUID).astype(np.uint8)

    flags = set()
    if hole_radius < h:
        flags.add(UNRESOLVED_HOLE)

    return PeriodicCell(
        n=n,
        eps=float(eps),
        hole_radius=float(hole_radius),
        h=float(h),
        shape=shape,
        mask=mask,
        radius=radius,
        flags=frozenset(flags),
    )
