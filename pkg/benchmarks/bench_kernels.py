"""Compare the compiled and NumPy kernels.

    python3 benchmarks/bench_kernels.py [--min-n 10] [--max-n 20] [--repeat 3]
"""
import argparse
import timeit

import numpy as np

from iqpphase import _pykernels
from iqpphase.circuit import sample_instance

try:
    from iqpphase import _ckernels
except ImportError:
    _ckernels = None


def bench_fwht(mod, n, repeat):
    v = np.random.default_rng(n).normal(size=1 << n) + 0j
    return min(timeit.repeat(lambda: mod.fwht_inplace(v.copy()), number=1, repeat=repeat))


def bench_phase(mod, n, repeat):
    inst = sample_instance(n, 1.0, n)
    i, j, val = inst.pair_arrays()
    return min(timeit.repeat(lambda: mod.phase_vector(inst.theta, i, j, val, True), number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--min-n", type=int, default=10)
    ap.add_argument("--max-n", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if _ckernels is None:
        print("compiled extension not built; timing the NumPy kernels only")
    print(f"{'kernel':<8}{'N':>4}{'numpy [s]':>12}{'cython [s]':>12}{'speedup':>9}")
    for name, fn in (("fwht", bench_fwht), ("phase", bench_phase)):
        for n in range(args.min_n, args.max_n + 1, 2):
            t_py = fn(_pykernels, n, args.repeat)
            if _ckernels is None:
                print(f"{name:<8}{n:>4}{t_py:>12.4f}{'-':>12}{'-':>9}")
                continue
            t_c = fn(_ckernels, n, args.repeat)
            print(f"{name:<8}{n:>4}{t_py:>12.4f}{t_c:>12.4f}{t_py / t_c:>8.1f}x")


if __name__ == "__main__":
    main()
