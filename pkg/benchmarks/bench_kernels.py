"""Compare the compiled and NumPy slicing/error-counting kernels.

Run with ``python benchmarks/bench_kernels.py [n_samples]``.
"""

import sys
import timeit

import numpy as np

from ddisac import _kernels_py
from ddisac.qam import QamConstellation

try:
    from ddisac import _kernels
except ImportError:  # extension not built
    _kernels = None


def main(n=1 << 20, repeat=5):
    rng = np.random.default_rng(0)
    rows = []
    for order in (4, 16, 64):
        c = QamConstellation(order)
        labels = rng.integers(0, order, n)
        y = c.points[labels] + 0.3 * c.step * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
        args = (y, labels, 1.0 / c.step, c.levels_i, c.levels_q, c.bits_q)
        backends = [("python", _kernels_py)] + ([("cython", _kernels)] if _kernels else [])
        counts = {}
        for name, mod in backends:
            counts[name] = mod.slice_count_errors(*args)
            t = min(timeit.repeat(lambda: mod.slice_count_errors(*args), number=1, repeat=repeat))
            rows.append((order, name, t, n / t / 1e6))
        if len(set(counts.values())) != 1:
            raise SystemExit(f"backends disagree for {order}-QAM: {counts}")
    print(f"{'order':>5} {'backend':>8} {'seconds':>10} {'Msamples/s':>11}")
    for order, name, t, rate in rows:
        print(f"{order:>5} {name:>8} {t:>10.4f} {rate:>11.1f}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 1 << 20)
