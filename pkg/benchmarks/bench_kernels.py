#!/usr/bin/env python3
"""Time the per-triangle kernels for every built backend.

The energy sum and the gradient scatter dominate the smoother's line
searches, which is why they have a compiled implementation.  Example:

    python benchmarks/bench_kernels.py --level 6 --repeats 200
"""

import argparse
import time

import numpy as np

from viscogrid import fem, kernels
from viscogrid.mesh import MeshHierarchy


def time_call(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--level", type=int, default=6,
                    help="refinement depth of the benchmark grid")
    ap.add_argument("--repeats", type=int, default=200)
    args = ap.parse_args()

    mesh = MeshHierarchy.unit_disk(args.level + 1).levels[-1]
    geo = fem.element_geometry(mesh)
    model = fem.ModelSpec.herschel_bulkley(1.75, 0.2)
    u = fem.poisson_solve(mesh, 1.0)
    kargs = (geo.tri, geo.grads, geo.area, u, model.p, model.g, model.gamma,
             model.is_casson)

    print(f"grid: level {args.level}, {mesh.n_nodes} nodes, "
          f"{mesh.n_triangles} triangles; active backend: {kernels.BACKEND}")
    results = {}
    for name in kernels.available_backends():
        backend = kernels.backend(name)
        t_energy = time_call(lambda: backend.energy_sum(*kargs), args.repeats)
        out = np.zeros(mesh.n_nodes)

        def grad():
            out[:] = 0.0
            backend.gradient_scatter(*kargs, out)

        t_grad = time_call(grad, args.repeats)
        results[name] = (t_energy, t_grad)
        print(f"  {name:>7}: energy {t_energy * 1e6:9.1f} us   "
              f"gradient {t_grad * 1e6:9.1f} us")

    if len(results) == 2:
        e_np, g_np = results["numpy"]
        e_cy, g_cy = results["cython"]
        print(f"  speedup: energy {e_np / e_cy:.1f}x, gradient {g_np / g_cy:.1f}x")
        ref = np.zeros(mesh.n_nodes)
        out = np.zeros(mesh.n_nodes)
        kernels.backend("numpy").gradient_scatter(*kargs, ref)
        kernels.backend("cython").gradient_scatter(*kargs, out)
        de = abs(kernels.backend("numpy").energy_sum(*kargs)
                 - kernels.backend("cython").energy_sum(*kargs))
        print(f"  agreement: |d energy| = {de:.2e}, "
              f"max |d gradient| = {np.max(np.abs(ref - out)):.2e}")


if __name__ == "__main__":
    main()
