"""Kernel backend selection.

The hot stencil loops exist twice: a numba-jitted path (2D/3D, the sizes
that dominate study runtimes) and a pure-numpy path that works in any
dimension.  ``HLAB_BACKEND`` picks between them:

    HLAB_BACKEND=auto    numba where a jitted kernel exists (default)
    HLAB_BACKEND=numba   require numba, fail loudly if unavailable
    HLAB_BACKEND=numpy   force the pure-numpy path everywhere

``HLAB_THREADS`` additionally caps the numba threading layer and the
study-runner worker pool.
"""

from __future__ import annotations

import os

from .errors import ConfigError

_CHOICES = ("auto", "numba", "numpy")

_backend: str | None = None
_numba_ok: bool | None = None


def _numba_available() -> bool:
    global _numba_ok
    if _numba_ok is None:
        try:
            import numba  # noqa: F401

            _numba_ok = True
        except ImportError:
            _numba_ok = False
    return _numba_ok


def thread_cap() -> int:
    """Worker cap from HLAB_THREADS (defaults to 1: deterministic runtimes)."""
    raw = os.environ.get("HLAB_THREADS", "1")
    try:
        cap = int(raw)
    except ValueError as exc:
        raise ConfigError(f"HLAB_THREADS must be an integer, got {raw!r}") from exc
    return max(1, cap)


def backend() -> str:
    """Resolved backend name, either ``"numba"`` or ``"numpy"``."""
    global _backend
    if _backend is None:
        choice = os.environ.get("HLAB_BACKEND", "auto").lower()
        if choice not in _CHOICES:
            raise ConfigError(
                f"HLAB_BACKEND must be one of {_CHOICES}, got {choice!r}"
            )
        if choice == "numpy":
            _backend = "numpy"
        elif choice == "numba":
            if not _numba_available():
                raise ConfigError("HLAB_BACKEND=numba but numba is not importable")
            _backend = "numba"
        else:
            _backend = "numba" if _numba_available() else "numpy"
        if _backend == "numba":
            _apply_thread_cap()
    return _backend


def _apply_thread_cap() -> None:
    """Cap the numba threading layer at HLAB_THREADS (default 1).

    On small machines parallel worker threads spin between kernel calls
    and starve the numpy vector algebra interleaved with them, so a
    single kernel thread is both the deterministic and the fast default.
    """
    import numba

    try:
        numba.set_num_threads(min(thread_cap(), numba.config.NUMBA_NUM_THREADS))
    except ValueError:
        pass


def set_backend(name: str) -> None:
    """Override the backend at runtime (tests and benchmarks)."""
    if name not in ("numba", "numpy"):
        raise ConfigError(f"backend must be 'numba' or 'numpy', got {name!r}")
    if name == "numba" and not _numba_available():
        raise ConfigError("numba backend requested but numba is not importable")
    global _backend
    _backend = name
    if name == "numba":
        _apply_thread_cap()


def use_numba(ndim: int) -> bool:
    """True when the jitted kernel family should serve this dimension."""
    return backend() == "numba" and ndim in (2, 3)
