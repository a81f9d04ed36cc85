#!/usr/bin/env python3
"""Benchmark the compiled integrator kernels against the pure-Python fallback.

Runs the coupled Euler-Maruyama integrator (and the moment co-integration
variant) through both backends on identical noise and reports throughput in
integration substeps per second, verifying bit-identical output along the way.

Usage: python benchmarks/bench_kernels.py [n_substeps]
"""

import sys
import time

import numpy as np

from vplangevin import _kernels_py
from vplangevin.surfaces import REFERENCE_SURFACES

try:
    from vplangevin import _kernels
except ImportError:
    _kernels = None


def run(kernel, coeffs, z, subsample, dlo, dhi, moment=False):
    n_out = len(z) // subsample
    out = np.empty((n_out, 2))
    t0 = time.perf_counter()
    if moment:
        state = np.array([0.0, 0.0, 1.0])
        mout = np.empty(n_out)
        status, _ = kernel.sim_chunk_moment(coeffs, 2, state, z, 0.1, subsample,
                                            out, mout, 0, 1e6, dlo, dhi)
    else:
        state = np.zeros(2)
        status, _ = kernel.sim_chunk(coeffs, state, z, 0.1, subsample,
                                     out, 0, 1e6, dlo, dhi)
    elapsed = time.perf_counter() - t0
    assert status == 0, status
    return elapsed, out, state


def main() -> int:
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 2_000_000
    subsample = 10
    n -= n % subsample
    rng = np.random.default_rng(1)
    z = rng.standard_normal((n, 2))
    coeffs = REFERENCE_SURFACES.kernel_coeffs()
    dlo, dhi = REFERENCE_SURFACES.domain_bounds()

    print(f"{n:,} substeps, subsample {subsample}")
    header = f"{'kernel':<22}{'backend':<10}{'time':>9}{'substeps/s':>14}"
    print(header)
    print("-" * len(header))
    for moment, label in ((False, "sim_chunk"), (True, "sim_chunk_moment")):
        results = {}
        for name, kernel in (("c", _kernels), ("python", _kernels_py)):
            if kernel is None:
                print(f"{label:<22}{name:<10}{'n/a':>9}  (extension not built)")
                continue
            elapsed, out, state = run(kernel, coeffs, z, subsample, dlo, dhi,
                                      moment=moment)
            results[name] = (out, state)
            print(f"{label:<22}{name:<10}{elapsed:>8.2f}s{n / elapsed:>14,.0f}")
        if len(results) == 2:
            same = (np.array_equal(results["c"][0], results["python"][0])
                    and np.array_equal(results["c"][1], results["python"][1]))
            print(f"{label:<22}bit-identical across backends: {same}")
            if not same:
                return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
