"""Compare the compiled and pure-Python path kernels.

Usage::

    python benchmarks/bench_mc.py --paths 20000 --eps 0.01

Both kernels run the same resolvent estimator on the Kirchhoff 3-star from
the vertex; the script checks the outputs are identical and reports paths
per second.
"""

import argparse
import os
import time

import numpy as np

from metricbm.graph import Vertex
from metricbm.mc import engine as mc
from metricbm.mc import get_kernel
from metricbm.specdoc import read_spec

HERE = os.path.dirname(os.path.abspath(__file__))
SPEC = os.path.join(HERE, "..", "tests", "fixtures", "star3_kirchhoff.yaml")


def time_backend(doc, backend, n_paths, eps, seed, repeat):
    cfg = mc.SimConfig(eps=eps, seed=seed, n_paths=n_paths, backend=backend)
    best, batch = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        batch = mc.run(doc.graph, doc.wentzell, Vertex("o"), cfg, rate=1.0, n_marks=8)
        best = min(best, time.perf_counter() - t0)
    return best, batch


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--paths", type=int, default=20_000)
    p.add_argument("--python-paths", type=int, default=None,
                   help="paths for the slower pure-Python kernel (default: paths / 10)")
    p.add_argument("--eps", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)
    doc = read_spec(SPEC)
    n_py = args.python_paths or max(args.paths // 10, 1)
    try:
        get_kernel("cython")
    except ImportError:
        print("compiled kernel not available; build with `pip install -e . --no-build-isolation`")
        return 1
    t_c, b_c = time_backend(doc, "cython", args.paths, args.eps, args.seed, args.repeat)
    t_p, b_p = time_backend(doc, "python", n_py, args.eps, args.seed, 1)
    same = all(np.array_equal(getattr(b_c, k)[:n_py], getattr(b_p, k))
               for k in ("obs_kind", "obs_id", "obs_x", "obs_t", "steps"))
    rate_c, rate_p = args.paths / t_c, n_py / t_p
    print(f"eps = {args.eps}, mean events per path = {b_c.steps.mean():.1f}")
    print(f"cython: {args.paths:>8d} paths in {t_c:8.3f} s  ({rate_c:12.0f} paths/s)")
    print(f"python: {n_py:>8d} paths in {t_p:8.3f} s  ({rate_p:12.0f} paths/s)")
    print(f"speed-up {rate_c / rate_p:.1f}x; outputs identical on the common paths: {same}")
    return 0 if same else 2


if __name__ == "__main__":
    raise SystemExit(main())
