"""Time the multi-resolution layer under each kernel backend.

    python3 benchmarks/bench_backends.py [--n 512,2048,8192] [--trials 7]

Prints one row per (backend, n) and the compiled/numpy speed ratio. Both
backends produce the same numbers to ~1e-12; this only measures speed.
"""

import argparse

from threadpoolctl import threadpool_limits

from adamra import available_backends, bench


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", default="512,1024,2048,4096,8192")
    ap.add_argument("--trials", type=int, default=7)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    ns = [int(v) for v in args.n.split(",")]

    with threadpool_limits(limits=args.threads):
        rows = bench.compare_backends(ns, trials=args.trials)
    by_n = {}
    print(f"{'backend':>8} {'n':>6} {'median ms':>10} {'min ms':>8}")
    for name, s in rows:
        by_n.setdefault(s.n, {})[name] = s.median_s
        print(f"{name:>8} {s.n:>6} {s.median_s * 1e3:10.2f} {s.min_s * 1e3:8.2f}")
    if {"numpy", "cython"} <= set(available_backends()):
        print("\nnumpy / cython median ratio:")
        for n, t in sorted(by_n.items()):
            print(f"  n={n:<6} {t['numpy'] / t['cython']:.2f}x")


if __name__ == "__main__":
    main()
