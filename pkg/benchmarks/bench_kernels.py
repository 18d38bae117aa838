"""Time the compiled MMD kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--sizes 100 400 1600] [--repeat 5]
"""
import argparse
import timeit

from lapcap import _kernels_py
from lapcap.rng import make_rng

try:
    from lapcap import _kernels as compiled
except ImportError:
    compiled = None


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", type=int, nargs="+", default=[100, 400, 1600])
    ap.add_argument("--dim", type=int, default=1)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    impls = [("python", _kernels_py)] + ([("cython", compiled)] if compiled else [])
    if compiled is None:
        print("compiled extension not built; timing the fallback only")
    print(f"{'kernel':<20}{'n':>6}" + "".join(f"{name:>12}" for name, _ in impls) + ("     speedup" if compiled else ""))
    for n in args.sizes:
        rng = make_rng(0, "bench", n)
        x = rng.normal(size=(n, args.dim))
        y = rng.normal(0.5, 1.0, size=(n, args.dim))
        cases = {
            "mmd2_unbiased": lambda impl: impl.mmd2_unbiased(x, y, 1.0),
            "pairwise_distances": lambda impl: impl.pairwise_distances(x),
        }
        for label, fn in cases.items():
            times = [min(timeit.repeat(lambda: fn(impl), number=3, repeat=args.repeat)) / 3 for _, impl in impls]
            row = f"{label:<20}{n:>6}" + "".join(f"{t * 1e3:>10.3f}ms" for t in times)
            if compiled:
                row += f"{times[0] / times[1]:>11.2f}x"
            print(row)


if __name__ == "__main__":
    main()
