#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-Python fallback.

Times the three hot loops at pipeline-realistic sizes (3700 HRIRs per
archive, a 128x128 covariance, full-range correlation scans) plus one
end-to-end train() on a synthetic world per backend.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from hrtfkit._kernels import _py, _tables

try:
    from hrtfkit._kernels import _ext
except ImportError:
    _ext = None


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels(repeat):
    rng = np.random.default_rng(0)
    backends = {"py": _py, "ext": _ext} if _ext is not None else {"py": _py}

    spectra = rng.normal(size=(3700, 256)) + 1j * rng.normal(size=(3700, 256))
    spectra = np.ascontiguousarray(spectra)
    rev, tw = _tables(256)

    A = rng.normal(size=(128, 128))
    S = (A + A.T) / 2
    tol = 1e-12 * float(np.sqrt((S * S).sum()))

    a = rng.normal(size=512)
    b = rng.normal(size=512)

    cases = {
        "fft 3700x256": lambda impl: impl.fft_kernel(spectra, rev, tw),
        "jacobi 128x128": lambda impl: impl.jacobi_kernel(
            np.ascontiguousarray(S.copy()), np.ascontiguousarray(np.eye(128)),
            tol, 100),
        "xcorr 512 full-range": lambda impl: impl.xcorr_kernel(a, b, -511, 511),
    }

    print(f"{'kernel':<22} " + "".join(f"{name:>12} " for name in backends)
          + ("   speedup" if _ext is not None else ""))
    for label, runner in cases.items():
        times = {name: _time(lambda impl=impl: runner(impl), repeat)
                 for name, impl in backends.items()}
        row = f"{label:<22} " + "".join(f"{times[n] * 1e3:>10.1f}ms " for n in times)
        if _ext is not None:
            row += f"{times['py'] / times['ext']:>9.1f}x"
        print(row)


def bench_pipeline(repeat):
    import os
    import subprocess
    import sys
    script = (
        "import time, hrtfkit\n"
        "from hrtfkit import pipeline, testkit\n"
        "world = testkit.synth_generate(subjects=37, q=10, seed=1)\n"
        "t0 = time.perf_counter()\n"
        "pipeline.train(world.archive, world.anthro, q=10)\n"
        "print(f'{hrtfkit.BACKEND} train: {time.perf_counter() - t0:.2f}s')\n"
    )
    for backend in ("ext", "py"):
        env = dict(os.environ, HRTFKIT_BACKEND=backend)
        proc = subprocess.run([sys.executable, "-c", script], env=env,
                              capture_output=True, text=True)
        out = proc.stdout.strip() or proc.stderr.strip().splitlines()[-1]
        print(f"  {out}")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=3,
                        help="repetitions per measurement (best is kept)")
    args = parser.parse_args()
    if _ext is None:
        print("note: compiled kernels unavailable; timing the fallback only")
    bench_kernels(args.repeat)
    print("\nend-to-end training (37 subjects, 50 directions, q=10):")
    bench_pipeline(args.repeat)


if __name__ == "__main__":
    main()
