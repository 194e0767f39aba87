"""Compiled against NumPy density kernel on the S2 flow tables.

    python benchmarks/bench_kernels.py [--nodes 64] [--lie 2048] [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from gsquant import _kernels_py
from gsquant.integration import lie_ball_rule
from gsquant.scenarios import s2
from gsquant.torus_action import zero_set_rule

try:
    from gsquant import _kernels
except ImportError:
    _kernels = None


def inputs(n_nodes, n_lie):
    model, action = s2()
    rule = zero_set_rule(action, level=max(0, int(np.log2(max(n_nodes, 8) / 8))))
    u0 = rule.u[:n_nodes]
    xis = lie_ball_rule(action.d, 1.0, n_lie // 2 - 1).nodes
    offsets = np.array([sl.start for sl in model.homogeneous_slices()] + [model.n_homogeneous],
                       dtype=np.int64)
    free, zero, fac = action.layout
    wq = xis @ action.w.T
    return (np.ascontiguousarray(u0), wq, action.w, offsets, np.array(model.scales, dtype=float),
            action.slice.N.reshape(model.n, -1), free, zero, fac)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--nodes", type=int, default=64)
    p.add_argument("--lie", type=int, default=2048)
    p.add_argument("--repeat", type=int, default=5)
    a = p.parse_args()
    args = inputs(a.nodes, a.lie)
    print(f"grid: {args[0].shape[0]} zero-set nodes x {args[1].shape[0]} Lie nodes")
    backends = [("numpy", _kernels_py.density_terms)]
    if _kernels is None:
        print("compiled kernel not built; timing numpy only")
    else:
        backends.append(("cython", _kernels.density_terms))
    ref = None
    best = {}
    for name, fn in backends:
        out = fn(*args)
        if ref is None:
            ref = out
        else:
            err = max(float(np.max(np.abs(x - y)) / np.max(np.abs(y))) for x, y in zip(out, ref))
            print(f"max |cython - numpy| / max |numpy| = {err:.2e}")
        best[name] = min(timeit.repeat(lambda: fn(*args), number=1, repeat=a.repeat))
        print(f"{name:7s} {best[name] * 1e3:9.2f} ms")
    if len(best) == 2:
        print(f"speedup {best['numpy'] / best['cython']:.1f}x")


if __name__ == "__main__":
    main()
