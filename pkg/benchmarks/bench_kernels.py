"""Compare the compiled and pure-numpy kernels.

    python benchmarks/bench_kernels.py [--repeat N]

Times the ODE right-hand side (with and without the attention tensor), the
recurrent scan and a full fixed-step RK4 run for each available backend and
checks that the backends agree.
"""
import argparse
import time

import numpy as np

from tokendyn import _core
from tokendyn.s6 import S6Params, discretize


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    for D, N, L in [(1, 1, 10), (2, 4, 32), (4, 8, 128)]:
        p = S6Params.random(rng, D, N)
        x = 0.5 * rng.standard_normal((D, L))
        yield f"D={D} N={N} L={L}", p, x


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--rk4-steps", type=int, default=2000)
    args = parser.parse_args(argv)

    names = sorted(_core.available_backends(), key=lambda n: n != "cython")
    rng = np.random.default_rng(0)
    print(f"backends: {', '.join(names)} (default: {_core.BACKEND})")
    header = f"{'case':<18}{'kernel':<16}" + "".join(f"{n + ' [ms]':>16}" for n in names)
    if len(names) > 1:
        header += f"{'python/cython':>15}"
    print(header)
    for label, p, x in cases(rng):
        M, sd, a = p.io_matrix, p.S_Delta, p.a
        coef = discretize(p, x)
        record = np.arange(0, args.rk4_steps + 1, 100)
        kernels = {
            "rhs": lambda k: k.attention_rhs(x, M, sd, a, False),
            "rhs+attention": lambda k: k.attention_rhs(x, M, sd, a, True),
            "scan": lambda k: k.recurrent_scan(coef.abar, coef.bbar, coef.c, x),
            "rk4 run": lambda k: k.rk4_run(x, M, sd, a, 1e-3, args.rk4_steps, record, 1e8),
        }
        for kname, call in kernels.items():
            results, timings = [], []
            for n in names:
                mod = _core.get_backend(n)
                results.append(call(mod))
                timings.append(best_of(lambda: call(mod), args.repeat))
            first = np.asarray(results[0][0])
            for other in results[1:]:
                np.testing.assert_allclose(np.asarray(other[0]), first, rtol=1e-10, atol=1e-12)
            row = f"{label:<18}{kname:<16}" + "".join(f"{1e3 * t:>16.3f}" for t in timings)
            if len(names) > 1:
                row += f"{timings[-1] / timings[0]:>14.1f}x"
            print(row)


if __name__ == "__main__":
    main()
