"""Benchmark the jitted kernels against the pure-numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--sizes 64,96]

Times the Laplacian apply, the fused heat step, the masked degenerate
step and a CG Poisson solve on 2D/3D grids under both backends and
prints the per-call ratio.  The two paths produce bitwise-identical
fields; this script is only about speed.
"""

import argparse
import time

import numpy as np

from hlab import backends
from hlab.grid import build_periodic_cell
from hlab.kernels import heat_step, laplacian, masked_diffusion_step
from hlab.linalg import solve_poisson


def _time(fn, repeat):
    fn()  # warm-up (and JIT compile on the numba path)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench(sizes, repeat):
    rng = np.random.default_rng(0)
    rows = []
    for n in sizes:
        for ndim in (2, 3):
            shape = (n,) * ndim
            u = rng.random(shape)
            p = u * u
            free = np.ones(shape, dtype=np.uint8)
            cell = build_periodic_cell(ndim, 1.0, 0.1, 1.0 / n)
            fixed = np.where(cell.mask == 1, 1.0, 0.0)
            rhs = np.full(shape, -2.0)

            cases = {
                "laplacian": lambda: laplacian(u, float(n * n)),
                "heat_step": lambda: heat_step(u, 1e-6, float(n * n)),
                "masked_step": lambda: masked_diffusion_step(u, p, free, 1e-6, float(n * n)),
                "cg_poisson": lambda: solve_poisson(
                    cell.free_mask(), fixed, rhs, cell.inv_h2, periodic=True, tol=1e-6
                ),
            }
            for name, fn in cases.items():
                times = {}
                for backend in ("numba", "numpy"):
                    try:
                        backends.set_backend(backend)
                    except Exception:
                        times[backend] = float("nan")
                        continue
                    times[backend] = _time(fn, repeat)
                rows.append((f"{ndim}d {n}^{ndim}", name, times["numba"], times["numpy"]))
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--sizes", default="64,96")
    args = parser.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    rows = bench(sizes, args.repeat)
    print(f"{'grid':>10} {'kernel':>12} {'numba [ms]':>12} {'numpy [ms]':>12} {'speedup':>8}")
    for grid, name, tn, tp in rows:
        ratio = tp / tn if tn and np.isfinite(tn) else float("nan")
        print(f"{grid:>10} {name:>12} {tn * 1e3:>12.3f} {tp * 1e3:>12.3f} {ratio:>8.2f}")


if __name__ == "__main__":
    main()
