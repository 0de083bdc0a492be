"""Compare the compiled and pure-numpy scatter-sum kernels.

The kernel backend is chosen at import time from DEFREACH_NO_NUMBA, so
this script re-runs itself in a subprocess with the flag set to collect
the numpy numbers, then prints both side by side and cross-checks that
the two backends produce bit-identical sums.

Usage: python benchmarks/bench_kernels.py [--edges N] [--repeat R]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

from defreach.kernels import backend_name, edge_sum, segment_sum


def make_workload(n_edges: int, hidden: int = 32, seed: int = 0):
    rng = np.random.default_rng(seed)
    n_nodes = max(2, n_edges // 4)
    n_graphs = max(1, n_nodes // 8)
    h = rng.standard_normal((n_nodes, hidden))
    src = rng.integers(0, n_nodes, n_edges)
    dst = rng.integers(0, n_nodes, n_edges)
    seg = np.sort(rng.integers(0, n_graphs, n_nodes))
    return h, src, dst, seg, n_graphs


def bench(n_edges: int, repeat: int) -> dict:
    h, src, dst, seg, n_graphs = make_workload(n_edges)
    # warm up (includes numba compilation on the compiled path)
    edge_sum(h, src, dst)
    segment_sum(h, seg, n_graphs)

    def time_of(fn):
        best = float("inf")
        for _ in range(repeat):
            start = time.perf_counter()
            fn()
            best = min(best, time.perf_counter() - start)
        return best * 1e6  # microseconds

    return {
        "backend": backend_name(),
        "edges": n_edges,
        "edge_sum_us": time_of(lambda: edge_sum(h, src, dst)),
        "segment_sum_us": time_of(lambda: segment_sum(h, seg, n_graphs)),
        "edge_checksum": float(edge_sum(h, src, dst).sum()),
        "segment_checksum": float(segment_sum(h, seg, n_graphs).sum()),
    }


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--edges", type=int, nargs="*", default=[1_000, 10_000, 100_000])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--emit-json", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()

    results = [bench(n, args.repeat) for n in args.edges]
    if args.emit_json:
        print(json.dumps(results))
        return 0

    if backend_name() == "numba":
        env = dict(os.environ, DEFREACH_NO_NUMBA="1")
        out = subprocess.run(
            [sys.executable, __file__, "--emit-json", "--repeat", str(args.repeat),
             "--edges", *map(str, args.edges)],
            env=env, capture_output=True, text=True, check=True,
        )
        others = json.loads(out.stdout)
    else:
        print("numba backend unavailable or disabled; showing numpy only")
        others = []

    print(f"{'edges':>8} {'kernel':>12} {'numba us':>10} {'numpy us':>10} {'speedup':>8}")
    for fast, slow in zip(results, others or results):
        assert fast["edge_checksum"] == slow["edge_checksum"], "backends disagree"
        assert fast["segment_checksum"] == slow["segment_checksum"], "backends disagree"
        for key in ("edge_sum_us", "segment_sum_us"):
            ratio = slow[key] / fast[key] if fast[key] else float("nan")
            print(
                f"{fast['edges']:>8} {key.removesuffix('_us'):>12} "
                f"{fast[key]:>10.1f} {slow[key]:>10.1f} {ratio:>7.1f}x"
            )
    return 0


if __name__ == "__main__":
    sys.exit(main())
