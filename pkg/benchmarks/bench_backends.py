"""Compare numpy and numba kernel backends on the hot paths.

Run from the repository root:

    python3 benchmarks/bench_backends.py
    python3 benchmarks/bench_backends.py --full     # adds the camera-scale row

Each row reports the median wall time of `--repeats` timed passes after one
untimed warmup (the warmup also pays the JIT cost on the numba side).
"""

import argparse
import statistics
import time

import numpy as np

from shiftscan import ConstraintSet, DetectorConfig
from shiftscan.backend import NUMBA_AVAILABLE
from shiftscan.kernels import get_impl
from shiftscan.preprocess import hough_circle_center


def _median_time(fn, repeats):
    fn()  # warmup: JIT compilation and lazy allocations land here
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return statistics.median(times)


def bench_detector(kind, backend, dim, window, frames, repeats, constraint=None):
    rng = np.random.default_rng(42)
    X = rng.standard_normal((frames, dim))

    def run():
        det = DetectorConfig(
            kind=kind, dim=dim, window=window, backend=backend,
            constraint=constraint or ConstraintSet.unconstrained(),
        ).build(np.inf)
        det.update_block(X)

    return _median_time(run, repeats)


def bench_projection(backend, dim, count, repeats):
    rng = np.random.default_rng(7)
    V = rng.standard_normal((count, dim))
    impl = get_impl(backend)

    def run():
        for row in V:
            impl.project_l1(row.copy(), 1.0)

    return _median_time(run, repeats)


def bench_hough(backend, repeats):
    yy, xx = np.indices((256, 256))
    mask = np.abs(np.hypot(xx - 130, yy - 120) - 48) < 0.5
    mask |= np.random.default_rng(3).uniform(size=mask.shape) < 0.02

    def run():
        hough_circle_center(mask, 5, 120, backend=backend)

    return _median_time(run, repeats)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--frames", type=int, default=400,
                        help="stream length per detector pass (default 400)")
    parser.add_argument("--repeats", type=int, default=5,
                        help="timed passes per row (default 5)")
    parser.add_argument("--full", action="store_true",
                        help="include the 308x308-pixel (d=94864) adaptive row")
    args = parser.parse_args(argv)

    backends = ["numpy"] + (["numba"] if NUMBA_AVAILABLE else [])
    if len(backends) == 1:
        print("numba not importable; timing the numpy backend only")

    rows = [
        ("acm   d=1024 w=50", lambda b: bench_detector(
            "acm", b, 1024, 50, args.frames, args.repeats)),
        ("acm   d=1024 w=50 l1=3", lambda b: bench_detector(
            "acm", b, 1024, 50, args.frames, args.repeats,
            constraint=ConstraintSet.l1_ball(3.0))),
        ("asr   d=1024 w=50", lambda b: bench_detector(
            "asr", b, 1024, 50, args.frames, args.repeats)),
        ("glr   d=1024 w=50", lambda b: bench_detector(
            "glr", b, 1024, 50, args.frames, args.repeats)),
        ("mcusum d=1024", lambda b: bench_detector(
            "mcusum", b, 1024, 50, args.frames, args.repeats)),
        ("project_l1 d=4096 x200", lambda b: bench_projection(
            b, 4096, 200, args.repeats)),
        ("hough 256px r<=120", lambda b: bench_hough(b, args.repeats)),
    ]
    if args.full:
        rows.insert(2, ("acm   d=94864 w=200", lambda b: bench_detector(
            "acm", b, 94864, 200, min(args.frames, 32), args.repeats)))

    width = max(len(name) for name, _ in rows)
    header = f"{'kernel':<{width}}  " + "".join(f"{b:>12}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for name, fn in rows:
        times = [fn(b) for b in backends]
        line = f"{name:<{width}}  " + "".join(f"{t * 1e3:>10.1f}ms" for t in times)
        if len(times) == 2:
            line += f"{times[0] / times[1]:>9.1f}x"
        print(line)


if __name__ == "__main__":
    main()
