import numpy as np
import pytest

from hlab.correctors import CellProblem, harmonic_capacity, solve_cell_corrector
from hlab.report import HRule

CAP_B1 = harmonic_capacity(1.0, 3)


@pytest.fixture(scope="session")
def critical_cells():
    """Critical-scale corrector cells at eps = 1/2, 1/3, 1/4 (k = cap(B_1)).

    Shared by the capacity, trichotomy and correctibility checks; the
    eps = 1/4 cell resolves its hole with six spacings (96^3 nodes).
    """
    rule = HRule(resolve=6.0, max_nodes=96)
    cells = {}
    for eps in (1 / 2, 1 / 3, 1 / 4):
        a = eps**3
        m = rule.cell_divisions(eps, a)
        cells[eps] = solve_cell_corrector(
            CellProblem(n=3, eps=eps, hole_radius=a, k=CAP_B1, h=eps / m)
        )
    return cells


def bump(amplitude, box):
    def f(x):
        out = amplitude
        for ax, c in enumerate(x):
            lo, hi = box[ax]
            out = out * np.sin(np.pi * (c - lo) / (hi - lo))
        return out

    return f
