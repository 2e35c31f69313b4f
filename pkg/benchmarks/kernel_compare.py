"""Compares the compiled (Cython) and pure-Python interpreter kernels.

Both kernels implement identical semantics; this script verifies they produce
bit-identical output on the fixture workload and reports the speed difference
on the 65,536-element multiply.

    python3 benchmarks/kernel_compare.py [--iterations N]
"""

import argparse
import time

from girp import fixtures
from girp.bench import stats
from girp.interp import KERNELS, execute
from girp.reflect import SpirvModule


def time_kernel(kernel, module, iterations: int) -> tuple[list, bytes]:
    samples = []
    out = b""
    for _ in range(iterations):
        a, b = fixtures.multiply_inputs()
        t0 = time.perf_counter_ns()
        execute(module, "main", fixtures.MULTIPLY_GROUPS,
                {(0, 0): a, (0, 1): b}, kernel=kernel)
        samples.append(time.perf_counter_ns() - t0)
        out = bytes(b)
    return samples, out


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--iterations", type=int, default=20)
    args = parser.parse_args()

    module = SpirvModule.from_bytes(fixtures.multiply_kernel())
    expected = fixtures.multiply_expected()

    print(f"workload: {fixtures.MULTIPLY_ELEMENTS}-element u32 multiply, "
          f"{args.iterations} iterations\n")
    print(f"{'kernel':10s} {'mean ms':>10s} {'sd ms':>10s} {'p99 ms':>10s} exact")
    results = {}
    for name in sorted(KERNELS):
        samples, out = time_kernel(KERNELS[name], module, args.iterations)
        mean, sd, p99 = stats(samples)
        results[name] = mean
        print(f"{name:10s} {mean / 1e6:10.3f} {sd / 1e6:10.3f} "
              f"{p99 / 1e6:10.3f} {out == expected}")
        assert out == expected, f"{name} kernel diverged from the oracle"

    if "cython" in results and "python" in results:
        print(f"\nspeedup (python/cython): "
              f"{results['python'] / results['cython']:.1f}x")
    else:
        print("\ncompiled kernel not built; only the pure-Python fallback ran")


if __name__ == "__main__":
    main()
