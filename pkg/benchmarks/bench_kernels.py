"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--quick]
"""
import argparse
import time

import numpy as np

from subgcomp import kernels
from subgcomp.chaining import _ball_masks
from subgcomp.core import IndexSet, MetricOnT
from subgcomp.tensorization import RationalMeasure, enumerate_sequence_class


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(quick):
    rng = np.random.default_rng(0)
    reps = 2_000 if quick else 20_000
    for counts, N in [((1, 1), 2), ((1, 1), 4), ((1, 2, 1), 2), ((1, 1), 6)]:
        sc = enumerate_sequence_class(RationalMeasure(IndexSet.range(len(counts)), counts), N)
        copies = rng.standard_normal((reps, sc.length, len(counts)))
        label = f"tensor_sup  counts={counts} N={N} |class|={sc.size} R={reps}"
        yield label, "tensor_sup", (copies, sc.sequences)
    for n in (16, 20):
        x = rng.standard_normal((n, 2))
        metric = MetricOnT(IndexSet.range(n), np.linalg.norm(x[:, None] - x[None], axis=2))
        for q in (0.1, 0.2, 0.3):
            eps = float(np.quantile(metric.dist[metric.dist > 0], q))
            masks = np.unique(_ball_masks(metric, eps))
            yield f"min_cover   planar n={n} eps=q{q:.1f}", "min_cover", (masks, n, n)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--quick", action="store_true")
    args = ap.parse_args()
    names = sorted(kernels.BACKENDS)
    print(f"backends: {', '.join(names)} (default {kernels.BACKEND})")
    print(f"{'case':58s}" + "".join(f"{n:>12s}" for n in names) + "  python/cython")
    for label, fn, fargs in cases(args.quick):
        row, outs = [], []
        for name in names:
            t, out = best_of(lambda: getattr(kernels.get(name), fn)(*fargs), args.repeat)
            row.append(t)
            outs.append(out)
        same = all(np.array_equal(outs[0], o) for o in outs[1:])
        speed = f"{row[-1] / row[0]:13.1f}x" if len(row) > 1 else ""
        print(f"{label:58s}" + "".join(f"{t * 1e3:10.2f}ms" for t in row) + speed
              + ("" if same else "  MISMATCH"))


if __name__ == "__main__":
    main()
