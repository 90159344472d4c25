"""Time the compiled and pure-Python kernels on full curvature fields.

    python benchmarks/bench_backends.py [--sizes 200,1000,5000] [--repeats 5]
"""
import argparse
import statistics
import time

import numpy as np

from ricciopt import _backend
from ricciopt.benchmarks import random_regular_graph
from ricciopt.curvature import CurvatureOptions, curvature_field
from ricciopt.graph import MetricState


def median_time(fn, repeats):
    fn()
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="200,1000,5000")
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args(argv)
    backends = _backend.available()
    print(f"available backends: {', '.join(backends)}")
    print(f"{'vertices':>9} {'edges':>7} " + " ".join(f"{b + ' [s]':>14}" for b in backends) + "   speedup")
    for n in (int(s) for s in args.sizes.split(",")):
        graph = random_regular_graph(n, 4, seed=0)
        metric = MetricState.build(graph, np.random.default_rng(0).uniform(0.5, 2.0, graph.edge_count))
        times = {}
        fields = {}
        for b in backends:
            opts = CurvatureOptions(backend=b)
            times[b] = median_time(lambda: fields.__setitem__(b, curvature_field(graph, metric, options=opts)),
                                   args.repeats)
        if len(fields) == 2:
            diff = float(np.max(np.abs(fields["compiled"].kappa - fields["python"].kappa)))
            speed = f"{times['python'] / times['compiled']:8.1f}x  (max |dkappa| {diff:.1e})"
        else:
            speed = "       -"
        print(f"{n:>9} {graph.edge_count:>7} " + " ".join(f"{times[b]:>14.4f}" for b in backends) + "   " + speed)


if __name__ == "__main__":
    main()
