"""Wall-clock comparison of the numba and numpy RK4 kernels.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--tend 100]

Each bundled scenario is integrated on both backends; the numba time is
reported after a warm-up run so JIT compilation is excluded.  The maximum
state difference between backends is printed as a consistency check.
"""

import argparse
import time

import numpy as np

from optreg._accel import HAVE_NUMBA
from optreg.sim import instantiate, integrate, load_bundled, synthesize_scenario


def best_of(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--tend", type=float, default=None, help="override the scenario horizon")
    args = ap.parse_args()
    backends = ["numba", "numpy"] if HAVE_NUMBA else ["numpy"]
    print(f"{'scenario':<10} {'steps':>8} {'dim':>4} " + " ".join(f"{b + ' [s]':>11}" for b in backends) + "  speedup  max|diff|")
    for name in ("example1", "example2", "example3"):
        s = load_bundled(name)
        if args.tend is not None:
            s = s.with_overrides(t_end=args.tend)
        gains = synthesize_scenario(s)
        inst = instantiate(s)[0]
        times, recs = {}, {}
        for b in backends:
            integrate(s, gains, inst, backend=b)  # warm-up (JIT, affine cache)
            times[b], recs[b] = best_of(lambda: integrate(s, gains, inst, backend=b), args.repeat)
        diff = np.max(np.abs(recs[backends[0]].states - recs[backends[-1]].states))
        speed = times["numpy"] / times["numba"] if HAVE_NUMBA else 1.0
        dim = recs[backends[0]].states.shape[1]
        print(f"{name:<10} {s.n_steps:>8} {dim:>4} " + " ".join(f"{times[b]:>11.3f}" for b in backends) + f"  {speed:>6.1f}x  {diff:.1e}")


if __name__ == "__main__":
    main()
