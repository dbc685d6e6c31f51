"""Compare the compiled and numpy kernels on mesh SDF queries.

    python3 benchmarks/bench_kernels.py [--points 3000] [--subdivisions 3] [--threads 1]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from hairprism import kernels
from hairprism.mesh import icosphere
from hairprism.sdf import MeshSdf
from hairprism.strands import synth_hairstyle


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--points", type=int, default=3000)
    ap.add_argument("--subdivisions", type=int, default=3)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    kernels.set_num_threads(args.threads)
    head = icosphere(args.subdivisions)
    n_p = 50
    hair = synth_hairstyle("wavy", max(1, args.points // n_p), n_p, seed=0)
    pts = 0.9 * hair.points.reshape(-1, 3)
    print(f"{pts.shape[0]} query points, {head.n_triangles} triangles, {args.threads} thread(s)")

    results = {}
    for name in sorted(kernels.BACKENDS):
        sdf = MeshSdf(head, backend=name)
        t, (value, grad) = best_of(lambda: sdf.value_and_grad(pts), args.repeat)
        results[name] = (value, grad)
        print(f"  {name:7s} {t * 1e3:9.1f} ms")
    if len(results) == 2:
        (va, ga), (vb, gb) = results.values()
        print(f"  max |value difference| {np.max(np.abs(va - vb)):.3g}, "
              f"max |gradient difference| {np.max(np.abs(ga - gb)):.3g}")
    else:
        print("  compiled extension unavailable; only the numpy backend was timed")


if __name__ == "__main__":
    main()
