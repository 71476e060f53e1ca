"""Compiled versus pure-numpy stencil kernels.

    python benchmarks/bench_kernels.py [--sizes 64 128 256] [--repeat 5] [--csv out.csv]

Times each kernel on the same inputs with both backends and reports the
per-call time, nanoseconds per grid point and the speedup. Results are also
checked for agreement.
"""

from __future__ import annotations

import argparse
import sys
import timeit

import numpy as np

from shmm.fields import FaceCoefficients, Grid2D, from_spectral
from shmm.flowgen import gen_cellular
from shmm.kernels import _stencil_py as py_k
from shmm.pde import dns_grid, face_velocities

try:
    from shmm.kernels import _stencil as cy_k
except ImportError:
    sys.exit("compiled extension not built; run `pip install -e . --no-build-isolation` first")


def inputs(n: int):
    psi = gen_cellular([(1 / 3, 5, 5), (1 / 3, 25, 25)])
    g = Grid2D.unit_periodic(n)
    A = FaceCoefficients.from_nodes(g, 1.0, 0.0, 1.0, skew=from_spectral(psi, g).values)
    coeffs = tuple(np.ascontiguousarray(a) for a in (A.a11, A.a12, A.a21, A.a22))
    rng = np.random.default_rng(0)
    u = rng.standard_normal(g.shape)
    gd = dns_grid(n)
    U, V = face_velocities(psi, gd)
    return g, coeffs, u, gd, U, V


def cases(n: int):
    g, coeffs, u, gd, U, V = inputs(n)
    relax_steps = 200
    dt = 0.2 * g.hx**2 / 4 / 1.7

    def relax(k):
        w = np.zeros(g.shape)
        k.micro_relax(w, *coeffs, g.hx, g.hy, 1.0, 0.0, dt, 0.0, relax_steps)
        return w

    return [
        ("flux_divergence", 1, lambda k: k.flux_divergence(u, *coeffs, g.hx, g.hy, 1.0, 0.0, True, True)),
        ("flux_average", 1, lambda k: np.array(k.flux_average(u, *coeffs, g.hx, g.hy, 1.0, 0.0))),
        ("micro_relax", relax_steps, relax),
        ("advdiff_rhs", 1, lambda k: k.advdiff_rhs(u, U, V, 1.0, gd.hx, gd.hy, False, True)),
    ]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[64, 128, 256])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--csv")
    args = ap.parse_args(argv)

    rows = ["kernel,n,python_s,cython_s,python_ns_per_pt,cython_ns_per_pt,speedup,max_abs_diff"]
    print(f"{'kernel':>16} {'n':>5} {'python':>11} {'cython':>11} {'ns/pt py':>9} {'ns/pt cy':>9} {'speedup':>8}")
    for n in args.sizes:
        for name, sweeps, fn in cases(n):
            diff = float(np.max(np.abs(fn(py_k) - fn(cy_k))))
            tp = min(timeit.repeat(lambda: fn(py_k), number=1, repeat=args.repeat))
            tc = min(timeit.repeat(lambda: fn(cy_k), number=1, repeat=args.repeat))
            pts = n * n * sweeps
            print(f"{name:>16} {n:>5} {tp:>10.4e}s {tc:>10.4e}s {tp / pts * 1e9:>9.2f} {tc / pts * 1e9:>9.2f} {tp / tc:>7.1f}x")
            rows.append(f"{name},{n},{tp!r},{tc!r},{tp / pts * 1e9!r},{tc / pts * 1e9!r},{tp / tc!r},{diff!r}")
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write("\n".join(rows) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
