"""Hot stencil kernels.

Every operation here exists twice: a numba-jitted 2D/3D version used for
the study-sized runs, and a dimension-generic pure-numpy version.  Both
accumulate neighbor sums in the same (axis-ascending, minus-then-plus)
order so the two paths agree bitwise; tests and the benchmark rely on
that.  Dispatch is per-call via :func:`hlab.backends.use_numba`.

Conventions
-----------
* "box" Laplacians treat the array faces as fixed Dirichlet nodes: the
  stencil is evaluated on the strict interior, face entries of the
  output are zero (laplacian) or copied (steps).
* "periodic" Laplacians wrap every axis (torus cell problems).
* ``free`` masks are uint8 arrays, 1 where the node is updated.
"""

from __future__ import annotations

import numpy as np

from .backends import use_numba

try:
    from numba import njit, prange

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via HLAB_BACKEND=numpy
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):  # type: ignore[misc]
        def wrap(f):
            return f

        return wrap

    prange = range  # type: ignore[assignment]

_JIT = dict(cache=True, nogil=True, fastmath=False)


# ---------------------------------------------------------------------------
# numpy generic paths (any dimension)
# ---------------------------------------------------------------------------

def _core(ndim):
    return (slice(1, -1),) * ndim


def _shifted(ndim, axis, lo):
    sl = [slice(1, -1)] * ndim
    sl[axis] = slice(0, -2) if lo else slice(2, None)
    return tuple(sl)


def _lap_box_np(u, inv_h2):
    ndim = u.ndim
    out = np.zeros_like(u)
    acc = out[_core(ndim)]
    for ax in range(ndim):
        acc += u[_shifted(ndim, ax, lo=True)]
        acc += u[_shifted(ndim, ax, lo=False)]
    acc -= (2.0 * ndim) * u[_core(ndim)]
    acc *= inv_h2
    return out


def _lap_per_np(u, inv_h2):
    ndim = u.ndim
    acc = np.roll(u, 1, axis=0)
    acc += np.roll(u, -1, axis=0)
    for ax in range(1, ndim):
        acc += np.roll(u, 1, axis=ax)
        acc += np.roll(u, -1, axis=ax)
    acc -= (2.0 * ndim) * u
    acc *= inv_h2
    return acc


def _heat_step_np(u, dt, inv_h2):
    lap = _lap_box_np(u, inv_h2)
    out = u.copy()
    c = _core(u.ndim)
    out[c] = u[c] + dt * lap[c]
    return out


def _masked_diffusion_step_np(u, p, free, dt, inv_h2):
    lap = _lap_box_np(p, inv_h2)
    out = u.copy()
    c = _core(u.ndim)
    upd = u[c] + dt * lap[c]
    out[c] = np.where(free[c] != 0, upd, u[c])
    return out


def _matvec_np(x, free, kappa, inv_h2, periodic):
    lap = _lap_per_np(x, inv_h2) if periodic else _lap_box_np(x, inv_h2)
    out = kappa * x - lap
    out *= free
    if not periodic:
        # faces are never part of the boxed operator, whatever the mask says
        for ax in range(x.ndim):
            sl = [slice(None)] * x.ndim
            for end in (0, -1):
                sl[ax] = end
                out[tuple(sl)] = 0.0
            sl[ax] = slice(None)
    return out


# ---------------------------------------------------------------------------
# numba 2D/3D paths
# ---------------------------------------------------------------------------

@njit(parallel=True, **_JIT)
def _lap_box_2d(u, inv_h2, out):
    n0, n1 = u.shape
    for i in prange(1, n0 - 1):
        for j in range(1, n1 - 1):
            s = u[i - 1, j] + u[i + 1, j] + u[i, j - 1] + u[i, j + 1]
            out[i, j] = (s - 4.0 * u[i, j]) * inv_h2
    return out


@njit(parallel=True, **_JIT)
def _lap_box_3d(u, inv_h2, out):
    n0, n1, n2 = u.shape
    for i in prange(1, n0 - 1):
        for j in range(1, n1 - 1):
            for k in range(1, n2 - 1):
                s = (
                    u[i - 1, j, k]
                    + u[i + 1, j, k]
                    + u[i, j - 1, k]
                    + u[i, j + 1, k]
                    + u[i, j, k - 1]
                    + u[i, j, k + 1]
                )
                out[i, j, k] = (s - 6.0 * u[i, j, k]) * inv_h2
    return out


@njit(parallel=True, **_JIT)
def _lap_per_2d(u, inv_h2, out):
    n0, n1 = u.shape
    for i in prange(n0):
        im = i - 1 if i > 0 else n0 - 1
        ip = i + 1 if i < n0 - 1 else 0
        for j in range(n1):
            jm = j - 1 if j > 0 else n1 - 1
            jp = j + 1 if j < n1 - 1 else 0
            s = u[im, j] + u[ip, j] + u[i, jm] + u[i, jp]
            out[i, j] = (s - 4.0 * u[i, j]) * inv_h2
    return out


@njit(parallel=True, **_JIT)
def _lap_per_3d(u, inv_h2, out):
    n0, n1, n2 = u.shape
    for i in prange(n0):
        im = i - 1 if i > 0 else n0 - 1
        ip = i + 1 if i < n0 - 1 else 0
        for j in range(n1):
            jm = j - 1 if j > 0 else n1 - 1
            jp = j + 1 if j < n1 - 1 else 0
            for k in range(n2):
                km = k - 1 if k > 0 else n2 - 1
                kp = k + 1 if k < n2 - 1 else 0
                s = (
                    u[im, j, k]
                    + u[ip, j, k]
                    + u[i, jm, k]
                    + u[i, jp, k]
                    + u[i, j, km]
                    + u[i, j, kp]
                )
                out[i, j, k] = (s - 6.0 * u[i, j, k]) * inv_h2
    return out


@njit(parallel=True, **_JIT)
def _heat_step_2d(u, dt, inv_h2, out):
    n0, n1 = u.shape
    for i in prange(1, n0 - 1):
        for j in range(1, n1 - 1):
            s = u[i - 1, j] + u[i + 1, j] + u[i, j - 1] + u[i, j + 1]
            out[i, j] = u[i, j] + dt * ((s - 4.0 * u[i, j]) * inv_h2)
    return out


@njit(parallel=True, **_JIT)
def _heat_step_3d(u, dt, inv_h2, out):
    n0, n1, n2 = u.shape
    for i in prange(1, n0 - 1):
        for j in range(1, n1 - 1):
            for k in range(1, n2 - 1):
                s = (
                    u[i - 1, j, k]
                    + u[i + 1, j, k]
                    + u[i, j - 1, k]
                    + u[i, j + 1, k]
                    + u[i, j, k - 1]
                    + u[i, j, k + 1]
                )
                out[i, j, k] = u[i, j, k] + dt * ((s - 6.0 * u[i, j, k]) * inv_h2)
    return out


@njit(parallel=True, **_JIT)
def _masked_diffusion_step_2d(u, p, free, dt, inv_h2, out):
    n0, n1 = u.shape
    for i in prange(1, n0 - 1):
        for j in range(1, n1 - 1):
            if free[i, j] != 0:
                s = p[i - 1, j] + p[i + 1, j] + p[i, j - 1] + p[i, j + 1]
                out[i, j] = u[i, j] + dt * ((s - 4.0 * p[i, j]) * inv_h2)
    return out


@njit(parallel=True, **_JIT)
def _masked_diffusion_step_3d(u, p, free, dt, inv_h2, out):
    n0, n1, n2 = u.shape
    for i in prange(1, n0 - 1):
        for j in range(1, n1 - 1):
            for k in range(1, n2 - 1):
                if free[i, j, k] != 0:
                    s = (
                        p[i - 1, j, k]
                        + p[i + 1, j, k]
                        + p[i, j - 1, k]
                        + p[i, j + 1, k]
                        + p[i, j, k - 1]
                        + p[i, j, k + 1]
                    )
                    out[i, j, k] = u[i, j, k] + dt * ((s - 6.0 * p[i, j, k]) * inv_h2)
    return out


@njit(parallel=True, **_JIT)
def _matvec_box_2d(x, free, kappa, inv_h2, out):
    n0, n1 = x.shape
    for i in prange(1, n0 - 1):
        for j in range(1, n1 - 1):
            if free[i, j] != 0:
                s = x[i - 1, j] + x[i + 1, j] + x[i, j - 1] + x[i, j + 1]
                out[i, j] = kappa * x[i, j] - (s - 4.0 * x[i, j]) * inv_h2
    return out


@njit(parallel=True, **_JIT)
def _matvec_box_3d(x, free, kappa, inv_h2, out):
    n0, n1, n2 = x.shape
    for i in prange(1, n0 - 1):
        for j in range(1, n1 - 1):
            for k in range(1, n2 - 1):
                if free[i, j, k] != 0:
                    s = (
                        x[i - 1, j, k]
                        + x[i + 1, j, k]
                        + x[i, j - 1, k]
                        + x[i, j + 1, k]
                        + x[i, j, k - 1]
                        + x[i, j, k + 1]
                    )
                    out[i, j, k] = kappa * x[i, j, k] - (s - 6.0 * x[i, j, k]) * inv_h2
    return out


@njit(parallel=True, **_JIT)
def _matvec_per_2d(x, free, kappa, inv_h2, out):
    n0, n1 = x.shape
    for i in prange(n0):
        im = i - 1 if i > 0 else n0 - 1
        ip = i + 1 if i < n0 - 1 else 0
        for j in range(n1):
            if free[i, j] != 0:
                jm = j - 1 if j > 0 else n1 - 1
                jp = j + 1 if j < n1 - 1 else 0
                s = x[im, j] + x[ip, j] + x[i, jm] + x[i, jp]
                out[i, j] = kappa * x[i, j] - (s - 4.0 * x[i, j]) * inv_h2
    return out


@njit(parallel=True, **_JIT)
def _matvec_per_3d(x, free, kappa, inv_h2, out):
    n0, n1, n2 = x.shape
    for i in prange(n0):
        im = i - 1 if i > 0 else n0 - 1
        ip = i + 1 if i < n0 - 1 else 0
        for j in range(n1):
            jm = j - 1 if j > 0 else n1 - 1
            jp = j + 1 if j < n1 - 1 else 0
            for k in range(n2):
                if free[i, j, k] != 0:
                    km = k - 1 if k > 0 else n2 - 1
                    kp = k + 1 if k < n2 - 1 else 0
                    s = (
                        x[im, j, k]
                        + x[ip, j, k]
                        + x[i, jm, k]
                        + x[i, jp, k]
                        + x[i, j, km]
                        + x[i, j, kp]
                    )
                    out[i, j, k] = kappa * x[i, j, k] - (s - 6.0 * x[i, j, k]) * inv_h2
    return out


# ---------------------------------------------------------------------------
# public dispatchers
# ---------------------------------------------------------------------------

def laplacian(u, inv_h2, periodic=False):
    """Five/seven-point Laplacian; face rows are zero in the box variant."""
    if use_numba(u.ndim):
        # buffers are allocated here (numpy-owned) rather than inside the
        # jitted code: downstream vector algebra is measurably faster on
        # numpy-pooled pages than on numba's runtime allocations
        if periodic:
            out = np.empty_like(u)
            f = _lap_per_2d if u.ndim == 2 else _lap_per_3d
        else:
            out = np.zeros_like(u)
            f = _lap_box_2d if u.ndim == 2 else _lap_box_3d
        f(u, inv_h2, out)
        return out
    return _lap_per_np(u, inv_h2) if periodic else _lap_box_np(u, inv_h2)


def heat_step(u, dt, inv_h2):
    """One explicit heat step on the strict interior; faces copied."""
    if use_numba(u.ndim):
        out = u.copy()
        f = _heat_step_2d if u.ndim == 2 else _heat_step_3d
        f(u, dt, inv_h2, out)
        return out
    return _heat_step_np(u, dt, inv_h2)


def masked_diffusion_step(u, p, free, dt, inv_h2):
    """u + dt*lap(p) where ``free``; elsewhere (and on faces) copy u."""
    if use_numba(u.ndim):
        out = u.copy()
        f = _masked_diffusion_step_2d if u.ndim == 2 else _masked_diffusion_step_3d
        f(u, p, free, dt, inv_h2, out)
        return out
    return _masked_diffusion_step_np(u, p, free, dt, inv_h2)


def matvec_neglap(x, free, kappa, inv_h2, periodic=False):
    """free * (kappa*x - lap(x)); the SPD operator behind the CG solves."""
    if use_numba(x.ndim):
        out = np.zeros_like(x)
        if periodic:
            f = _matvec_per_2d if x.ndim == 2 else _matvec_per_3d
        else:
            f = _matvec_box_2d if x.ndim == 2 else _matvec_box_3d
        f(x, free, kappa, inv_h2, out)
        return out
    return _matvec_np(x, free, kappa, inv_h2, periodic)


def power(u, m):
    """Pointwise u**m with fast paths for the common exponents."""
    if m == 1.0:
        return u.copy()
    if m == 2.0:
        return u * u
    if m == 0.5:
        return np.sqrt(u)
    return np.power(u, m)
