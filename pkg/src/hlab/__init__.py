"""Desk-scale laboratory for homogenization on periodically perforated domains.

Subpackages by problem family:

* :mod:`hlab.grid` - perforated grids, fields, obstacle sampling
* :mod:`hlab.correctors` - periodic cell correctors, capacity, regimes
* :mod:`hlab.heat` - oscillating-obstacle heat flows and their limits
* :mod:`hlab.eigen` - the sublinear eigenvalue problem
* :mod:`hlab.pme` - the porous medium equation and its barriers
* :mod:`hlab.lab` - diagnostics, study runner, report emission

Set ``HLAB_BACKEND=numpy`` to force the pure-numpy kernel path (numba
is used where available by default); ``HLAB_THREADS`` caps parallelism.
"""

__version__ = "0.1.0"

from .backends import backend, set_backend
from .errors import HlabError

__all__ = ["__version__", "backend", "set_backend", "HlabError"]
