"""Benchmark the numba kernels against the pure-numpy fallback.

Runs the shared kernel entry points (conv2d, maxpool2d, avgpool2d,
forward and backward) on a few representative shapes under each
available backend and reports per-call wall time plus the speedup.
The first numba call includes JIT compilation, so timed repeats are
preceded by warmup calls.

Usage: python3 benchmarks/bench_kernels.py [--repeats N] [--batch N]
"""

import argparse
import time

import numpy as np

from mfinception import kernels

CASES = (
    # name, channels_in, channels_out, kernel, stride, padding, resolution
    ("conv 3x3 s1", 32, 64, (3, 3), 1, 1, 32),
    ("conv 3x3 s2", 64, 96, (3, 3), 2, 1, 32),
    ("conv 1x7", 64, 64, (1, 7), 1, (0, 3), 17),
    ("conv 1x1", 128, 96, (1, 1), 1, 0, 17),
    ("maxpool 3x3 s2", 64, None, (3, 3), 2, 1, 32),
    ("avgpool 3x3 s1", 64, None, (3, 3), 1, 1, 17),
)


def _run_case(name, cin, cout, kernel, stride, padding, res, batch, rng):
    x = rng.standard_normal((batch, cin, res, res)).astype(np.float32)
    if name.startswith("conv"):
        w = rng.standard_normal((cout, cin) + tuple(np.atleast_1d(kernel))).astype(np.float32)
        b = np.zeros(cout, dtype=np.float32)
        y = kernels.conv2d_forward(x, w, b, stride, padding)
        dy = np.ones_like(y)

        def fwd():
            kernels.conv2d_forward(x, w, b, stride, padding)

        def bwd():
            kernels.conv2d_backward(x, w, dy, stride, padding)

    elif name.startswith("maxpool"):
        y, idx = kernels.maxpool2d_forward(x, kernel, stride, padding)
        dy = np.ones_like(y)

        def fwd():
            kernels.maxpool2d_forward(x, kernel, stride, padding)

        def bwd():
            kernels.maxpool2d_backward(dy, idx, x.shape, kernel, stride, padding)

    else:
        y = kernels.avgpool2d_forward(x, kernel, stride, padding)
        dy = np.ones_like(y)

        def fwd():
            kernels.avgpool2d_forward(x, kernel, stride, padding)

        def bwd():
            kernels.avgpool2d_backward(dy, x.shape, kernel, stride, padding)

    return fwd, bwd


def _time(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--warmup", type=int, default=2)
    parser.add_argument("--batch", type=int, default=8)
    args = parser.parse_args(argv)

    backends = kernels.available_backends()
    results = {}
    for backend in backends:
        kernels.set_backend(backend)
        rng = np.random.default_rng(0)
        for case in CASES:
            fwd, bwd = _run_case(*case, args.batch, rng)
            for direction, fn in (("fwd", fwd), ("bwd", bwd)):
                for _ in range(args.warmup):
                    fn()
                results[(case[0], direction, backend)] = _time(fn, args.repeats)

    print(f"batch={args.batch}, best of {args.repeats} repeats, seconds/call")
    header = f"{'case':<22s}{'dir':<6s}" + "".join(f"{b:>12s}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10s}"
    print(header)
    for case in CASES:
        for direction in ("fwd", "bwd"):
            row = f"{case[0]:<22s}{direction:<6s}"
            times = [results[(case[0], direction, b)] for b in backends]
            row += "".join(f"{t:12.6f}" for t in times)
            if len(backends) == 2:
                # speedup of the second-listed backend over the first
                row += f"{times[0] / times[1]:10.2f}x"
            print(row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
