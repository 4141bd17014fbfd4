"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 3]

Each case runs on both backends with the same inputs; outputs are
compared before timings are reported, so a speedup never hides a
mismatch.
"""
import argparse
import time

import numpy as np

from umforest import _kernels
from umforest._kernels import _pykernels


def _cases():
    keys = _pykernels.child_keys(2024, 0, 400)
    rng = np.random.default_rng(5)
    heights = rng.integers(0, 6, size=120)
    D = np.maximum.outer(heights, heights).astype(np.int64)
    np.fill_diagonal(D, 0)
    return [
        ("child_keys n=100k", lambda k: k.child_keys(7, 0, 100_000)),
        ("counter_uniforms n=100k", lambda k: k.counter_uniforms(7, 0, 100_000)),
        ("gw_forest 400 roots beta=50 t=1", lambda k: k.gw_forest(keys, 50.0, 1.0, 0.5, 10**7)),
        ("gw_survivors 400 roots beta=200 t=1", lambda k: k.gw_survivors(keys, 200.0, 1.0, 0.5, 10**8)),
        ("ultrametric triple scan n=120", lambda k: k.ultrametric_violation(D, 0)),
    ]


def _same(a, b):
    if isinstance(a, tuple):
        return len(a) == len(b) and all(_same(x, y) for x, y in zip(a, b))
    if isinstance(a, np.ndarray):
        return np.array_equal(a, b, equal_nan=a.dtype.kind == "f")
    return a == b


def _best(fn, backend, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(backend)
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    backends = _kernels.available_backends()
    if "compiled" not in backends:
        print("compiled kernels not built; reinstall with Cython available to compare")
    print(f"{'case':42s} {'python s':>10s} {'compiled s':>11s} {'speedup':>8s}")
    for label, fn in _cases():
        tp, op = _best(fn, _kernels.get_backend("python"), args.repeat)
        if "compiled" in backends:
            tc, oc = _best(fn, _kernels.get_backend("compiled"), args.repeat)
            if not _same(op, oc):
                raise SystemExit(f"{label}: backends disagree")
            print(f"{label:42s} {tp:10.4f} {tc:11.4f} {tp / tc:7.1f}x")
        else:
            print(f"{label:42s} {tp:10.4f} {'-':>11s} {'-':>8s}")


if __name__ == "__main__":
    main()
