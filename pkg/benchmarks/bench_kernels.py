"""Compare the numba kernels with their pure-numpy fallbacks.

    python benchmarks/bench_kernels.py [--samples N] [--n N] [--repeat R]
"""
import argparse
import timeit

import numpy as np

from geowiener import Sphere, _accel, kernels


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--samples", type=int, default=8192)
    parser.add_argument("--n", type=int, default=64)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    inc = rng.standard_normal((args.samples, args.n, 2)) * np.sqrt(1.0 / args.n)
    ds = np.full(args.n, 1.0 / args.n)
    kprime = np.tile([1.0, 0.0], (args.n, 1))
    fr = Sphere(2).base_frame
    x0, u0 = np.ascontiguousarray(fr.x), np.ascontiguousarray(fr.u)

    cases = {
        "develop_sphere": (
            lambda: kernels._develop_sphere_nb(x0, u0, inc),
            lambda: kernels._develop_sphere_np(x0, u0, inc),
        ),
        "kp_sphere": (
            lambda: kernels._kp_sphere_nb(inc, ds, kprime),
            lambda: kernels._kp_sphere_np(inc, ds, kprime),
        ),
    }
    print(f"numba available: {_accel.HAVE_NUMBA}; batch {args.samples} x n={args.n}, best of {args.repeat}")
    print(f"{'kernel':<16}{'numba [ms]':>12}{'numpy [ms]':>12}{'speed-up':>10}")
    for name, (fast, slow) in cases.items():
        fast()  # compile outside the timed region
        t_nb = min(timeit.repeat(fast, number=1, repeat=args.repeat)) * 1e3
        t_np = min(timeit.repeat(slow, number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<16}{t_nb:>12.2f}{t_np:>12.2f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
