"""Compare the compiled particle kernels with the NumPy fallback.

    python benchmarks/bench_kernels.py [--sizes 10000,100000,1000000] [--repeat 5]

Each kernel is timed on identical inputs for both backends; the best of
``--repeat`` runs is reported along with the speed-up.  A full particle run
is timed per backend in a subprocess so the backend switch takes effect.
"""
import argparse
import os
import subprocess
import sys
import time

import numpy as np

from qkernel import _pykernels

try:
    from qkernel import _ckernels
except ImportError:
    _ckernels = None

GRID = 4096


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def kernel_cases(n, rng):
    x = rng.normal(GRID * 0.05, GRID * 0.01, n)
    ratio = 0.5 + rng.random(GRID)
    z = rng.standard_normal(n)
    return {
        "linear_bin": lambda m: m.linear_bin(x, 0.0, 0.1, GRID),
        "interp_uniform": lambda m: m.interp_uniform(ratio, 0.0, 0.1, x),
        "mckean_step": lambda m: m.mckean_step(x.copy(), ratio, 0.0, 0.1, z, 0.01),
    }


def particle_run(backend, n):
    code = ("import time;"
            "from qkernel.geometry import triangular_blur;"
            "from qkernel.simulate import ParticleConfig, run_particle_method;"
            "t0 = time.perf_counter();"
            f"run_particle_method(triangular_blur(0.01), 0.2, 1/252, ParticleConfig({n}), seed=1);"
            "print(time.perf_counter() - t0)")
    env = dict(os.environ, QKERNEL_PURE_PYTHON="1" if backend == "python" else "0")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", default="10000,100000,1000000")
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--particles", type=int, default=100_000, help="ensemble size of the full run")
    args = parser.parse_args(argv)
    if _ckernels is None:
        print("compiled kernels are not built; run `pip install -e . --no-build-isolation` first")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':<16}{'n':>10}{'cython ms':>12}{'numpy ms':>12}{'speed-up':>10}")
    for n in (int(s) for s in args.sizes.split(",")):
        for name, call in kernel_cases(n, rng).items():
            tc = best_of(lambda: call(_ckernels), args.repeat)
            tp = best_of(lambda: call(_pykernels), args.repeat)
            print(f"{name:<16}{n:>10}{tc * 1e3:>12.3f}{tp * 1e3:>12.3f}{tp / tc:>10.1f}")
    tc = particle_run("cython", args.particles)
    tp = particle_run("python", args.particles)
    print(f"{'particle run':<16}{args.particles:>10}{tc * 1e3:>12.1f}{tp * 1e3:>12.1f}{tp / tc:>10.1f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
