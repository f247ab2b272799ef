"""Compiled kernels vs the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--permutations 500]

Kernel timings use the clique/separator index of a 100-node, 37-clique
generated graph. The end-to-end rows run the full pipeline in a subprocess
per backend, since the backend is picked at import time.
"""
from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from seedset import _kernels_py
from seedset.inference import LocalTests, enumerate_hypotheses
from seedset.graph import all_decompositions
from seedset.simulation import make_control, random_decomposable_graph, sample_mvn

try:
    from seedset import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

PIPELINE = """
import time
from seedset import kernels
from seedset.inference import analyze
from seedset.simulation import make_control, random_decomposable_graph, sample_mvn
g = random_decomposable_graph(100, 37, 15, seed=3)
c = make_control(g, 3)
x1, x2 = sample_mvn(c, 100, 1, 1), sample_mvn(c, 100, 1, 2)
t = time.perf_counter()
analyze(x1, x2, g, permutations={B}, method="minp", seed=1, threads=1)
print(kernels.BACKEND, time.perf_counter() - t)
"""


def workload():
    g = random_decomposable_graph(100, 37, 15, seed=3)
    ctrl = make_control(g, 3)
    x = sample_mvn(ctrl, 200, 1, 1)
    tests = LocalTests(enumerate_hypotheses(all_decompositions(g)), list(g.vertices))
    rows = np.sort(np.random.default_rng(0).choice(200, size=100, replace=False)).astype(np.int64)
    cov = np.cov(x.values.T, bias=True)
    stat = np.random.default_rng(1).chisquare(20, size=4096)
    df = np.random.default_rng(2).integers(1, 140, size=4096).astype(np.int64)
    return x.values, rows, cov, tests, stat, df


def bench(fn, repeat):
    fn()
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--permutations", type=int, default=500)
    args = ap.parse_args(argv)

    xv, rows, cov, tests, stat, df = workload()
    cases = {
        "block_logdets": lambda m: m.block_logdets(cov, tests.members, tests.offsets),
        "group_covariance": lambda m: m.group_covariance(xv, rows),
        "chisq_logsf (4096)": lambda m: m.chisq_logsf(stat, df),
    }
    print(f"{'kernel':<22} {'python ms':>10} {'cython ms':>10} {'speedup':>8}")
    for name, call in cases.items():
        py = bench(lambda: call(_kernels_py), args.repeat)
        if _compiled is None:
            print(f"{name:<22} {py * 1e3:>10.3f} {'-':>10} {'-':>8}")
            continue
        cy = bench(lambda: call(_compiled), args.repeat)
        print(f"{name:<22} {py * 1e3:>10.3f} {cy * 1e3:>10.3f} {py / cy:>7.1f}x")

    print()
    print(f"end-to-end, p=100, B={args.permutations}, minP, 1 thread")
    code = PIPELINE.format(B=args.permutations)
    for pure in ("1", "0"):
        env = dict(os.environ, SEEDSET_PURE_PYTHON=pure)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        backend, secs = out.stdout.split()
        print(f"  {backend:<8} {float(secs):8.2f} s")


if __name__ == "__main__":
    main()
