"""Per-epoch training time of the compiled and pure-NumPy kernel backends.

    python3 benchmarks/compare_backends.py [--sizes 1000,2000,4000,8000] [--out backends.csv]

Prints one row per (variant, n) with both timings and the speedup, then the
log-log slope of each backend. Needs the compiled extension to be built.
"""

import argparse
import sys

from demonet import bench, kernels


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="1000,2000,4000,8000")
    ap.add_argument("--variants", default="weight,hash")
    ap.add_argument("--epochs", type=int, default=20)
    ap.add_argument("--min-time", type=float, default=1.0)
    ap.add_argument("--out", help="CSV path for the raw rows")
    args = ap.parse_args(argv)

    if "cython" not in kernels.available():
        print("compiled backend not built; run `pip install --no-build-isolation -e .` first", file=sys.stderr)
        return 1
    sizes = [int(s) for s in args.sizes.split(",")]
    rows = []
    print(f"{'variant':<8} {'n':>7} {'cython ms':>10} {'python ms':>10} {'speedup':>8}")
    for variant in args.variants.split(","):
        for n in sizes:
            pair = {be: bench.time_epochs(n, variant, epochs=args.epochs, backend=be, min_time=args.min_time)
                    for be in ("cython", "python")}
            rows.extend(pair.values())
            c, p = pair["cython"].ms_per_epoch, pair["python"].ms_per_epoch
            print(f"{variant:<8} {n:>7} {c:>10.2f} {p:>10.2f} {p / c:>7.2f}x")
    for variant in args.variants.split(","):
        for be in ("cython", "python"):
            mine = [r for r in rows if r.variant == variant and r.backend == be]
            slope = bench.loglog_slope([r.n for r in mine], [r.ms_per_epoch for r in mine])
            if slope is not None:
                print(f"{variant}/{be}: log-log slope {slope:.3f}")
    if args.out:
        bench.write_csv(args.out, rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
